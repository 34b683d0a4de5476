"""Command-line front end.

    bellforge family   --kind partialTheta --theta 0.3927 --b 0.3927
    bellforge scan     --mode fig1 --grid 0.05 --format csv
    bellforge scan     --mode fig4 --theta 0.3927 --grid 41 --jobs 4
    bellforge certify  --kind ghz --n 3 --theta 0.5236 --b 0.5236
    bellforge selftest --kind partialTwoParam --theta 0.3927 --b1 -0.5236 --b2 0.5236

Options may also come from ``--config FILE``: one ``key = value`` per line,
``#`` starts a comment, keys are the long flag names without dashes
(``theta``, ``b1``, ``jobs``...). Flags given on the command line win over
the file, which wins over built-in defaults. Unknown keys are rejected.

Exit codes: 0 ok, 2 usage or parameter-region error, 3 failed verification,
4 solver failure. Floats are printed with 12 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import bounds, families, selftest
from .errors import BellforgeError, NoSolutionError, RegionError, SolverError
from .hilbert import behavior
from .sos import SOSCertificate, verify_certificate
from .variational import check_local_max

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_SOLVER = 0, 2, 3, 4
SIG = 12

PARAM_KEYS = ("c", "theta", "b", "b1", "b2", "a1", "a2", "q", "n")
CONFIG_KEYS = ("command", "kind", "mode", "level", "tol", "grid", "out", "format", "jobs", "cert") + PARAM_KEYS

FIG1_STEP = 0.05
FIG4_GRID = 21
FIG4_THRESHOLD = 1e-6
NPA_TOL = 1e-6
SWAP_TOL = 1e-9


class UsageError(BellforgeError):
    pass


# -- formatting ----------------------------------------------------------------------


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.{SIG}g}"
    return str(v)


def _rounded(obj):
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(f"{v:.{SIG}g}") if math.isfinite(v) else None
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _rounded(obj.tolist())
    return obj


def dump_json(doc) -> str:
    return json.dumps(_rounded(doc), indent=2) + "\n"


def dump_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


# -- configuration -------------------------------------------------------------------


@dataclass
class RunConfig:
    command: str
    kind: str | None = None
    params: dict | None = None
    mode: str = "fig1"
    level: str = "1ab"
    tol: float | None = None
    grid: float | None = None
    out: str | None = None
    format: str = "json"
    jobs: int = 1
    cert: str | None = None


def read_config(path: str) -> dict:
    """Flat ``key = value`` file; blank lines and ``#`` comments ignored."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in CONFIG_KEYS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value
    return out


def _jobs_default() -> int:
    env = os.environ.get("BELLFORGE_JOBS")
    if env is None:
        return 1
    try:
        return max(1, int(env))
    except ValueError:
        raise UsageError(f"BELLFORGE_JOBS must be an integer, got {env!r}") from None


def _default_level(command: str, mode: str) -> str:
    # the q-sweep needs level 2: level 1+AB already exceeds 1 from q = 2.77
    return "2" if command == "scan" and mode == "fig1" else "1ab"


def make_config(ns: argparse.Namespace) -> RunConfig:
    given = {k: v for k, v in vars(ns).items() if v is not None and k != "config"}
    fromfile = read_config(ns.config) if ns.config else {}
    if "command" in fromfile and fromfile["command"] != ns.command:
        raise UsageError(f"config file is for command {fromfile['command']!r}")
    merged = {**fromfile, **given}
    params = {}
    for k in PARAM_KEYS:
        if k in merged:
            try:
                params[k] = int(merged[k]) if k == "n" else float(merged[k])
            except ValueError:
                raise UsageError(f"--{k} expects a number, got {merged[k]!r}") from None
    try:
        cfg = RunConfig(
            command=ns.command,
            kind=merged.get("kind"),
            params=params,
            mode=merged.get("mode", "fig1"),
            level=str(merged.get("level", _default_level(ns.command, merged.get("mode", "fig1")))),
            tol=float(merged["tol"]) if "tol" in merged else None,
            grid=float(merged["grid"]) if "grid" in merged else None,
            out=merged.get("out"),
            format=merged.get("format", "json"),
            jobs=int(merged["jobs"]) if "jobs" in merged else _jobs_default(),
            cert=merged.get("cert"),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    if cfg.level not in bounds.LEVELS:
        raise UsageError(f"--level must be one of {', '.join(bounds.LEVELS)}")
    if cfg.format not in ("json", "csv"):
        raise UsageError("--format must be json or csv")
    if cfg.jobs < 1:
        raise UsageError("--jobs must be positive")
    if cfg.command in ("family", "certify", "selftest") and not cfg.kind and not cfg.cert:
        raise UsageError(f"{cfg.command} needs --kind")
    if cfg.kind and cfg.kind not in families.KINDS:
        raise UsageError(f"unknown kind {cfg.kind!r}; expected one of {', '.join(families.KINDS)}")
    if cfg.command == "scan" and cfg.mode not in ("fig1", "fig4"):
        raise UsageError("--mode must be fig1 or fig4 for scan")


def _build(cfg: RunConfig) -> families.FamilyInstance:
    names = families.required_params(cfg.kind)
    extra = sorted(set(cfg.params) - set(names))
    if extra:
        raise UsageError(f"{cfg.kind} does not take {', '.join('--' + k for k in extra)}")
    missing = [k for k in names if k not in cfg.params and k not in families.DEFAULTS.get(cfg.kind, {})]
    if missing:
        raise UsageError(f"{cfg.kind} needs {', '.join('--' + k for k in missing)}")
    return families.build(cfg.kind, **cfg.params)


# -- commands ------------------------------------------------------------------------


def _local_max_info(inst: families.FamilyInstance) -> dict | None:
    if inst.realization.measurements.generators is None:
        return None
    try:
        rep = check_local_max(inst.expression, inst.realization)
    except BellforgeError as exc:
        return {"verdict": "error", "notes": [str(exc)]}
    doc = {"verdict": rep.verdict, "residual_norm": rep.residual_norm, "notes": rep.notes}
    if rep.hessian is not None:
        doc["hessian_eigenvalues"] = rep.hessian.eigenvalues.tolist()
    return doc


def cmd_family(cfg: RunConfig) -> tuple:
    inst = _build(cfg)
    if cfg.format == "csv":
        return dump_csv(["term", "coefficient"], inst.correlator_table()), EXIT_OK
    doc = inst.to_dict()
    info = _local_max_info(inst)
    if info is not None:
        doc["local_max"] = info
    if inst.kind == "limitation":
        doc["operator"] = inst.extra["operator"].real.tolist()
    return dump_json(doc), EXIT_OK


def _fig1_row(args) -> list:
    q, level = args
    try:
        inst = families.build("limitation", q=q)
        lb, strat = bounds.local_bound(inst.expression)
        npa = bounds.npa_upper_bound(inst.expression, level)
        return [q, npa, lb, inst.value(), "ok"]
    except (SolverError, NoSolutionError) as exc:
        return [q, float("nan"), float("nan"), float("nan"), f"solver_error:{getattr(exc, 'status', 'fail')}"]


def _fig4_row(args) -> list:
    theta, b1, b2, level = args
    from .hilbert import Measurements, Realization, phi_theta
    real = Realization(phi_theta(theta), Measurements.qubit_xz([[0.0, np.pi / 2], [b1, b2]]))
    try:
        return [b1, b2, bounds.decomposability(behavior(real), level), "ok"]
    except SolverError as exc:
        return [b1, b2, float("nan"), f"solver_error:{exc.status}"]


def _pool_map(fn, items, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def fig1_rows(step: float = FIG1_STEP, level: str = "2", jobs: int = 1) -> list:
    count = int(round(4 / step))
    qs = [round(i * step, 10) for i in range(count + 1)]
    return _pool_map(_fig1_row, [(q, level) for q in qs], jobs)


def fig4_rows(theta: float = np.pi / 8, grid: int = FIG4_GRID, level: str = "1ab", jobs: int = 1) -> list:
    axis = np.linspace(-np.pi / 2, np.pi / 2, grid)
    items = [(theta, float(b1), float(b2), level) for b1 in axis for b2 in axis]
    return _pool_map(_fig4_row, items, jobs)


def limitation_excess(q: float, level: str = "2") -> float:
    return bounds.npa_upper_bound(families.build("limitation", q=q).expression, level) - 1.0


def limitation_transition(lo: float = 2.0, hi: float = 4.0, step: float = 0.01, level: str = "2",
                          tol: float = 1e-6) -> float:
    """First q on a ``step`` grid whose NPA bound exceeds 1 by more than ``tol``.

    Bisection over grid indices; ``lo`` must pass and ``hi`` must fail.
    """
    i, j = int(round(lo / step)), int(round(hi / step))
    if limitation_excess(i * step, level) > tol or limitation_excess(j * step, level) <= tol:
        raise ValueError("bracket does not contain the transition")
    while j - i > 1:
        mid = (i + j) // 2
        if limitation_excess(mid * step, level) > tol:
            j = mid
        else:
            i = mid
    return round(j * step, 10)


def cmd_scan(cfg: RunConfig) -> tuple:
    if cfg.mode == "fig1":
        rows = fig1_rows(cfg.grid or FIG1_STEP, cfg.level, cfg.jobs)
        header = ["q", "npa_bound", "local_bound", "ideal_value", "status"]
    else:
        theta = cfg.params.get("theta", np.pi / 8)
        rows = fig4_rows(theta, int(cfg.grid or FIG4_GRID), cfg.level, cfg.jobs)
        header = ["b1", "b2", "delta", "status"]
    failed = any(r[-1] != "ok" for r in rows)
    if cfg.format == "csv":
        text = dump_csv(header, rows)
    else:
        text = dump_json([dict(zip(header, r)) for r in rows])
    return text, EXIT_SOLVER if failed else EXIT_OK


def _load_cert(cfg: RunConfig) -> tuple:
    """Certificate and family instance from ``--cert`` (family or certificate JSON)."""
    with open(cfg.cert) as fh:
        doc = json.load(fh)
    if "certificate" in doc:
        kind, params = doc["kind"], doc["params"]
        cert_doc = doc["certificate"]
    else:
        if not cfg.kind:
            raise UsageError("a bare certificate file needs --kind and parameters")
        kind, params = cfg.kind, cfg.params
        cert_doc = doc
    inst = families.build(kind, **params)
    return SOSCertificate.from_dict(cert_doc), inst


def cmd_certify(cfg: RunConfig) -> tuple:
    if cfg.cert:
        cert, inst = _load_cert(cfg)
    else:
        inst = _build(cfg)
        cert = inst.certificate
    if cert is None:
        raise UsageError(f"{inst.kind} has no sum-of-squares certificate")
    tol = cfg.tol if cfg.tol is not None else 1e-9
    rep = verify_certificate(cert, inst.realization, tol=tol)
    checks = {k: {"passed": bool(v[0]), "residual": v[1]} for k, v in rep.checks.items()}
    C = rep.C
    sc = inst.scenario
    if sc.d ** (sc.n * sc.m) <= bounds.LOCAL_BUDGET:
        lb, _ = bounds.local_bound(inst.expression)
        checks["nonlocal"] = {"passed": bool(lb < C - 1e-3), "residual": C - lb, "local_bound": lb}
    if sc.n == 2 and sc.d == 2 and sc.m == 2:
        npa = bounds.npa_upper_bound(inst.expression, cfg.level)
        checks["npa"] = {"passed": bool(abs(npa - C) <= NPA_TOL), "residual": npa - C, "npa_bound": npa}
    info = _local_max_info(inst)
    if info is not None:
        checks["stationary"] = {"passed": info["verdict"] not in ("nonStationary", "error"),
                                "residual": info.get("residual_norm", float("nan")), "verdict": info["verdict"]}
    passed = all(c["passed"] for c in checks.values())
    doc = {"kind": inst.kind, "params": inst.params, "C": C, "value": rep.value,
           "flags": inst.flags, "checks": checks, "passed": passed}
    return dump_json(doc), EXIT_OK if passed else EXIT_VERIFY


def cmd_selftest(cfg: RunConfig) -> tuple:
    inst = _build(cfg)
    if inst.kind not in selftest.QUBIT_KINDS:
        raise UsageError(f"swap extraction is available for {', '.join(selftest.QUBIT_KINDS)}")
    if "single_square" in inst.flags:
        doc = {"kind": inst.kind, "params": inst.params, "flags": inst.flags, "fidelity": None,
               "warning": "single_square: limit point, no fidelity claim"}
        print("warning: single_square limit point, no fidelity claim", file=sys.stderr)
        return dump_json(doc), EXIT_OK
    res = selftest.swap_fidelity(inst.realization, inst.kind, inst.canonical)
    threshold = 1 - (cfg.tol if cfg.tol is not None else SWAP_TOL)
    doc = {"kind": inst.kind, "params": inst.params, **res.to_dict(), "threshold": threshold}
    return dump_json(doc), EXIT_OK if res.fidelity >= threshold else EXIT_VERIFY


COMMANDS = {"family": cmd_family, "scan": cmd_scan, "certify": cmd_certify, "selftest": cmd_selftest}


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bellforge", description="Bell expressions from sums of squares.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config")
        s.add_argument("--kind")
        for k in PARAM_KEYS:
            s.add_argument(f"--{k}")
        s.add_argument("--mode")
        s.add_argument("--level")
        s.add_argument("--tol")
        s.add_argument("--grid")
        s.add_argument("--out")
        s.add_argument("--format")
        s.add_argument("--jobs")
        s.add_argument("--cert")
    return p


def run(argv=None) -> tuple:
    """Parse ``argv`` and execute; returns ``(output_text, exit_code)``."""
    ns = parser().parse_args(argv)
    cfg = make_config(ns)
    return COMMANDS[cfg.command](cfg), cfg


def main(argv=None) -> int:
    try:
        (text, code), cfg = run(argv)
    except RegionError as exc:
        print(f"error: parameters out of region: {exc.constraint}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, NoSolutionError) as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except BellforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
