"""Command line: cov, cumulants, simulate, verify, regress, rerun.

Option precedence: built-in defaults, then the --config file (INI sections
[params], [cov], [cumulants], [simulate], [verify], [regress]), then flags.
Every run that writes files also writes <out>.manifest recording the
resolved options and a SHA-256 of each output; `rerun <manifest>` repeats
the run in a scratch directory and compares bytes.

Exit codes: 0 success, 1 verification failure or rerun mismatch,
2 invalid input, 3 numerical non-convergence or grid tail-bound violation.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import io
import math
import os
import shlex
import sys
import tempfile
import time
from pathlib import Path

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

_BOOL_TRUE = ("1", "true", "yes", "on")


def _bool(s) -> bool:
    v = str(s).strip().lower()
    if v in _BOOL_TRUE:
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s) -> list:
    return [float(x) for x in str(s).split(",") if x.strip()]


def _ints(s) -> list:
    return [int(x) for x in str(s).split(",") if x.strip()]


_PARAMS = [("params", "k", int, "2"), ("params", "H", float, "0.75"), ("params", "lambda", float, "1.0"),
           ("params", "beta", str, "none"), ("params", "normalized", _bool, "true")]

# (section, key, converter, default) per subcommand
OPTIONS = {
    "cov": _PARAMS + [("cov", "t", float, "1.0"), ("cov", "s", float, "1.0")],
    "cumulants": _PARAMS + [("cumulants", "t", float, "1.0"), ("cumulants", "m_max", int, "3")],
    "simulate": _PARAMS + [
        ("simulate", "scheme", str, "chaos"), ("simulate", "M", int, "512"), ("simulate", "times", _floats, "0,1"),
        ("simulate", "reps", int, "1000"), ("simulate", "seed", int, "0"), ("simulate", "diagonal", str, "wick"),
        ("simulate", "n_grid", int, "16"), ("simulate", "H1", float, "0.7"), ("simulate", "T", float, "1.0")],
    "verify": [("verify", "suite", str, ""), ("verify", "quick", _bool, "false")],
    "regress": [
        ("regress", "ns", _ints, "256,1024,4096"), ("regress", "x_eval", _floats, "-0.5,0,0.5"),
        ("regress", "seeds", int, "50"), ("regress", "seed", int, "0"), ("regress", "H1", float, "0.7"),
        ("regress", "kappa", float, "0.2"), ("regress", "kernel", str, "gaussian"), ("regress", "link", str, "sin"),
        ("regress", "noise_H", float, "0.75"), ("regress", "noise_lambda", str, "2000"),
        ("regress", "cells_per_step", int, "8"), ("regress", "normalization", str, "divide_by_Sn"),
        ("regress", "sn_source", str, "analytic"), ("regress", "coupled", _bool, "true")],
}


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tempered-hermite",
                                 description="Tempered Hermite processes: moments, simulation, regression.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, opts in OPTIONS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI file; flags override its values")
        sp.add_argument("--out", help="output path (simulate: prefix for .csv and .bin)")
        for section, key, _, _ in opts:
            if name == "verify" and key == "suite":
                continue
            sp.add_argument(_flag(key), dest=f"{section}.{key}", default=None)
        if name == "verify":
            sp.add_argument("suite", nargs="?", default=None)
    rp = sub.add_parser("rerun")
    rp.add_argument("manifest")
    rp.add_argument("--keep", help="directory for the regenerated outputs (default: temporary)")
    return ap


def resolve_options(command: str, args: argparse.Namespace) -> dict:
    """Defaults < config file < flags, as canonical strings keyed 'section.key'."""
    vals = {f"{s}.{k}": d for s, k, _, d in OPTIONS[command]}
    if getattr(args, "config", None):
        cp = configparser.ConfigParser()
        cp.optionxform = str
        if not cp.read(args.config):
            raise ValueError(f"cannot read config file {args.config}")
        for s, k, _, _ in OPTIONS[command]:
            if cp.has_option(s, k):
                vals[f"{s}.{k}"] = cp.get(s, k)
    for s, k, _, _ in OPTIONS[command]:
        v = getattr(args, f"{s}.{k}", None)
        if v is not None:
            vals[f"{s}.{k}"] = v
    if command == "verify" and getattr(args, "suite", None):
        vals["verify.suite"] = args.suite
    return {k: str(v).strip() for k, v in vals.items()}


def typed(command: str, vals: dict) -> dict:
    out = {}
    for s, k, conv, _ in OPTIONS[command]:
        raw = vals[f"{s}.{k}"]
        try:
            out[k if s != "params" else f"p_{k}"] = conv(raw)
        except ValueError as e:
            raise ValueError(f"[{s}] {k} = {raw!r}: {e}") from None
    return out


def _params(o: dict):
    from .kernels import params_from_mapping
    m = {"k": o["p_k"], "H": o["p_H"], "lambda": o["p_lambda"], "normalized": o["p_normalized"]}
    if o["p_beta"].lower() not in ("", "none"):
        m["beta"] = o["p_beta"]
    return params_from_mapping(m)


def atomic_write(path: Path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---- subcommand bodies: return (exit code, {path: bytes}) -------------------------

def run_cov(o: dict, out: str | None):
    from .kernels import FilterParams
    from .moments import cov_filtered_hermite, cov_hermite
    from .quadrature import QuadratureSpec
    p = _params(o)
    f = cov_filtered_hermite if isinstance(p, FilterParams) else cov_hermite
    t, s = o["t"], o["s"]
    value = f(t, s, p)
    # error estimate: distance to a run with tolerances a hundred times tighter
    fine = f(t, s, p, QuadratureSpec(abs_tol=1e-12, rel_tol=1e-10))
    err = abs(value - fine)
    print(f"cov({t:g}, {s:g}) = {value:.17g}  (error estimate {err:.3g})")
    files = {}
    if out:
        base = p.base if isinstance(p, FilterParams) else p
        beta = p.beta if isinstance(p, FilterParams) else math.nan
        files[out] = (f"t,s,k,H,lambda,beta,value,error_estimate\n"
                      f"{t!r},{s!r},{base.k},{base.H!r},{base.lam!r},{beta!r},{value:.17g},{err:.17g}\n").encode()
    return EXIT_OK, files


def run_cumulants(o: dict, out: str | None):
    from .moments import cumulant_reports, cumulant_reports_to_text
    if not 2 <= o["m_max"] <= 4:
        raise ValueError(f"m_max must lie in [2, 4], got {o['m_max']}")
    text = cumulant_reports_to_text(cumulant_reports(o["t"], o["m_max"], _params(o)))
    sys.stdout.write(text)
    return EXIT_OK, ({out: text.encode()} if out else {})


def run_simulate(o: dict, out: str | None):
    from .moments import cov_hermite
    from .simulate import ChaosGrid, fbm_paths, k_statistics, simulate_tempered_rosenblatt
    if o["reps"] < 1:
        raise ValueError("reps must be >= 1")
    if o["scheme"] == "fbm":
        paths = fbm_paths(o["n_grid"], o["H1"], o["T"], o["reps"], o["seed"])
        t = paths.times[-1]
        target = t ** (2 * o["H1"])
    elif o["scheme"] == "chaos":
        p = _params(o)
        if p.k != 2 or hasattr(p, "beta"):
            raise ValueError("the chaos scheme simulates the unfiltered k = 2 process")
        times = o["times"]
        grid = ChaosGrid.build(o["M"], times[-1], p.lam)
        paths = simulate_tempered_rosenblatt(times, p, grid, o["reps"], o["seed"], o["diagonal"])
        t = paths.times[-1]
        target = cov_hermite(t, t, p)
    else:
        raise ValueError(f"scheme must be 'chaos' or 'fbm', got {o['scheme']!r}")
    x = paths.values[:, -1]
    if paths.reps >= 100:
        var, se = k_statistics(x, 2)[1]
        print(f"variance at t={t:g}: sample {var:.6g} +- {se:.3g} (SE), analytic {target:.6g}")
    else:
        print(f"variance at t={t:g}: sample {x.var(ddof=1):.6g}, analytic {target:.6g}")
    files = {}
    if out:
        files[out + ".csv"] = paths.to_csv().encode()
        files[out + ".bin"] = paths.to_bytes()
    return EXIT_OK, files


def run_verify(o: dict, out: str | None):
    from .verify import SUITES, run_suite
    if o["suite"] not in SUITES:
        raise ValueError(f"unknown suite {o['suite']!r}; choose from {', '.join(SUITES)}")
    rep = run_suite(o["suite"], o["quick"])
    text = rep.to_text()
    sys.stdout.write(text)
    print(f"{rep.title}: {'PASS' if rep.passed else 'FAIL'} "
          f"({sum(r.passed for r in rep.rows)}/{len(rep.rows)} rows)")
    return (EXIT_OK if rep.passed else EXIT_VERIFY), ({out: text.encode()} if out else {})


def run_regress(o: dict, out: str | None):
    from .kernels import params_from_H
    from .regress import RegressionConfig, consistency_experiment
    noise = None
    if o["noise_lambda"].lower() != "none":
        noise = params_from_H(2, o["noise_H"], float(o["noise_lambda"]))
    base = RegressionConfig(n=o["ns"][0], H1=o["H1"], kappa=o["kappa"], kernel=o["kernel"], link=o["link"],
                            noise=noise, cells_per_step=o["cells_per_step"],
                            normalization=o["normalization"], sn_source=o["sn_source"])
    run = consistency_experiment(base, o["ns"], o["x_eval"], o["seeds"], o["seed"], o["coupled"])
    text = run.to_csv()
    sys.stdout.write(text)
    print(f"medians strictly decreasing in n: {run.monotone()}")
    return EXIT_OK, ({out: text.encode()} if out else {})


RUNNERS = {"cov": run_cov, "cumulants": run_cumulants, "simulate": run_simulate,
           "verify": run_verify, "regress": run_regress}


def execute(command: str, vals: dict, out: str | None):
    """Run a subcommand from resolved options.

    BLAS runs single-threaded so outputs do not depend on the thread count;
    TEMPERED_THREADS sets the number of workers over replication blocks.
    """
    from threadpoolctl import threadpool_limits
    o = typed(command, vals)
    with threadpool_limits(limits=1):
        return RUNNERS[command](o, out)


# ---- manifests ------------------------------------------------------------------

def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def manifest_text(command: str, argv: list, config: str | None, vals: dict, files: dict, wall: float) -> str:
    from . import __version__
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    seed = vals.get("simulate.seed", vals.get("regress.seed", "none"))
    cp["run"] = {
        "command": command,
        "version": __version__,
        "argv": shlex.join(argv),
        "config": config or "none",
        "seed": seed,
        "streams": "fbm = SeedSequence(seed, spawn_key=(1, block)); "
                   "chaos = SeedSequence(seed, spawn_key=(2, block)); block = 256 replications; "
                   "regress datasets use SeedSequence([seed, n, index])",
        "threads": os.environ.get("TEMPERED_THREADS", "1"),
        "wall_time_s": f"{wall:.3f}",
    }
    cp["options"] = dict(vals)
    cp["outputs"] = {str(Path(k).resolve()): _sha256(v) for k, v in files.items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def rerun(manifest: str, keep: str | None) -> int:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    if not cp.read(manifest):
        raise ValueError(f"cannot read manifest {manifest}")
    command = cp["run"]["command"]
    if command not in RUNNERS:
        raise ValueError(f"manifest names unknown command {command!r}")
    vals = dict(cp["options"])
    recorded = dict(cp["outputs"])
    if not recorded:
        raise ValueError("manifest lists no outputs")
    stems = {Path(p).name for p in recorded}
    with tempfile.TemporaryDirectory() as tmp:
        workdir = Path(keep) if keep else Path(tmp)
        workdir.mkdir(parents=True, exist_ok=True)
        first = Path(next(iter(recorded)))
        out = str(workdir / first.name)
        if command == "simulate":
            out = str(workdir / first.name[:-len(first.suffix)])
        code, files = execute(command, vals, out)
        ok = True
        new = {Path(k).name: v for k, v in files.items()}
        if set(new) != stems:
            print(f"output set differs: {sorted(new)} vs {sorted(stems)}")
            ok = False
        for path, digest in recorded.items():
            name = Path(path).name
            data = new.get(name)
            same = data is not None and _sha256(data) == digest
            if same and Path(path).exists():
                same = Path(path).read_bytes() == data
            print(f"{name}: {'identical' if same else 'DIFFERS'}")
            ok &= same
            if keep and data is not None:
                atomic_write(workdir / name, data)
    return EXIT_OK if ok else EXIT_VERIFY


def main(argv: list | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0) and EXIT_INPUT
    try:
        if args.command == "rerun":
            return rerun(args.manifest, args.keep)
        vals = resolve_options(args.command, args)
        t0 = time.perf_counter()
        code, files = execute(args.command, vals, args.out)
        wall = time.perf_counter() - t0
        for path, data in files.items():
            atomic_write(Path(path), data)
        if files:
            atomic_write(Path(args.out + ".manifest"), manifest_text(args.command, argv, args.config, vals, files, wall).encode())
        return code
    except (ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except ArithmeticError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
