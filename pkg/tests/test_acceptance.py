"""Acceptance criteria, one test each. Every test prints a single line

    CRITERION <n> <title>: PASS|FAIL (<seconds>s) <details>

and then asserts. Run directly (python3 tests/test_acceptance.py) to get
only the summary lines.
"""
import os
import sys
import tempfile
import time
from pathlib import Path

import pytest

from tempered_hermite import verify
from tempered_hermite.cli import main
from tempered_hermite.moments import CheckReport


def reproducibility_check(workdir: Path) -> CheckReport:
    """Every subcommand writes outputs plus a manifest; rerunning from the
    manifest under 1 and 4 threads must reproduce each output byte for byte."""
    runs = {
        "cov": ["cov", "--t", "1", "--s", "0.5"],
        "cumulants": ["cumulants", "--m-max", "3"],
        "simulate": ["simulate", "--M", "128", "--reps", "2000", "--seed", "17", "--times", "0,0.25,0.5,1"],
        "simulate-fbm": ["simulate", "--scheme", "fbm", "--n-grid", "16", "--reps", "2000", "--seed", "5"],
        "verify": ["verify", "lemma-int"],
        "regress": ["regress", "--ns", "64,256", "--seeds", "4", "--seed", "3"],
    }
    rep = CheckReport("reproducibility")
    old = os.environ.get("TEMPERED_THREADS")
    try:
        for name, argv in runs.items():
            out = workdir / name / ("out" if name.startswith("simulate") else "out.txt")
            os.environ["TEMPERED_THREADS"] = "1"
            code = main(argv + ["--out", str(out)])
            rep.add_flag(f"{name}: first run exit {code}", code == 0)
            for threads in ("1", "4"):
                os.environ["TEMPERED_THREADS"] = threads
                code = main(["rerun", str(out) + ".manifest"])
                rep.add_flag(f"{name}: rerun with {threads} threads byte-identical", code == 0)
    finally:
        if old is None:
            os.environ.pop("TEMPERED_THREADS", None)
        else:
            os.environ["TEMPERED_THREADS"] = old
    return rep


def _reproducibility():
    with tempfile.TemporaryDirectory() as tmp:
        return reproducibility_check(Path(tmp))


# (number, title, check, runtime budget in seconds or None)
CRITERIA = [
    (1, "Bessel product identity on the 36-point grid", verify.suite_lemma_int, 10),
    (2, "Bessel closed form and small-argument ratio", verify.bessel_closed_form_check, 1),
    (3, "second cumulant equals variance", verify.suite_variance_cumulant, 60),
    (4, "scaling law for variance and third cumulant", verify.suite_scaling, 300),
    (5, "stationary increments", verify.suite_stationarity, None),
    (6, "lambda -> 0 limit of cumulants", verify.suite_limit, 600),
    (7, "discrete-chaos trace against analytic cumulants", verify.discrete_trace_check, None),
    (8, "simulated variance and third k-statistic", verify.simulation_moments_check, 600),
    (9, "fBm sample covariance", verify.fbm_covariance_check, None),
    (10, "regression consistency", lambda: verify.regression_check()[0], 1200),
    (11, "manifest reruns byte-identical across thread counts", _reproducibility, None),
]


def evaluate(number: int):
    _, title, check, budget = next(c for c in CRITERIA if c[0] == number)
    t0 = time.perf_counter()
    rep = check()
    secs = time.perf_counter() - t0
    in_time = budget is None or secs < budget
    ok = rep.passed and in_time
    failed = [r.name for r in rep.rows if not r.passed]
    detail = f"{len(rep.rows) - len(failed)}/{len(rep.rows)} rows pass"
    if rep.max_rel_err:
        detail += f", max rel err {rep.max_rel_err:.2e}"
    if not in_time:
        detail += f", over the {budget}s budget"
    if failed:
        detail += "; failing: " + " | ".join(failed)
    line = f"CRITERION {number} {title}: {'PASS' if ok else 'FAIL'} ({secs:.1f}s) {detail}"
    return ok, line, rep


@pytest.mark.parametrize("number", [c[0] for c in CRITERIA])
def test_criterion(number, capsys):
    ok, line, rep = evaluate(number)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line + "\n" + rep.to_text()


if __name__ == "__main__":
    results = [evaluate(c[0]) for c in CRITERIA]
    for ok, line, _ in results:
        print(line, flush=True)
    sys.exit(0 if all(r[0] for r in results) else 1)
