"""Command-line front end: ``propinq <command> --config <file.json> --out <path>``.

Commands: ``upsilon`` (monoid distance), ``mk`` (Monge-Kantorovich distance
between two states) and ``converge`` (bridge sweep between fuzzy tori
``k`` and ``2k``). ``PROPINQ_THREADS`` caps both BLAS threads and the
number of sweep rows computed at once.

Exit status: 0 ok, 2 domain error (bad input), 3 resource error (budget).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any

EXIT_OK, EXIT_DOMAIN, EXIT_RESOURCE = 0, 2, 3

CONVERGE_COLUMNS = (
    "k", "k_prime", "theta_hash", "N", "eps",
    "reach_lo", "reach_hi", "height_hi", "magnitude_hi", "propinquity_upper", "status",
)

_BLAS_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")


def thread_cap() -> int:
    raw = os.environ.get("PROPINQ_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        return 1 if raw else (os.cpu_count() or 1)
    return max(1, n)


def _cap_blas_threads() -> None:
    # must run before numpy is first imported to take effect
    if "PROPINQ_THREADS" in os.environ:
        n = str(thread_cap())
        for var in _BLAS_VARS:
            os.environ[var] = n


# ---------------------------------------------------------------------------
# output


def fmt(x: Any) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return f"{x:.12g}"
    return str(x)


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def sidecar_path(out: Path) -> Path:
    return Path(str(out) + ".json")


# ---------------------------------------------------------------------------
# config parsing


def _require(cfg: dict, key: str, what: str) -> Any:
    from .errors import DomainError

    if key not in cfg:
        raise DomainError(f"{what} config needs {key!r}")
    return cfg[key]


def _seed(cfg: dict) -> int:
    from .errors import DomainError

    seed = cfg.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise DomainError("config needs an integer 'seed'")
    return seed


def _positive(cfg: dict, key: str, default: float) -> float:
    from .errors import DomainError

    val = cfg.get(key, default)
    if not isinstance(val, (int, float)) or isinstance(val, bool) or not val > 0:
        raise DomainError(f"{key!r} must be a positive number")
    return float(val)


def _k_tuple(v) -> tuple[int, ...]:
    from .errors import DomainError

    if isinstance(v, int):
        v = [v]
    try:
        k = tuple(int(x) for x in v)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"bad lattice {v!r}") from exc
    if not k or min(k) < 1 or any(int(x) != x for x in v):
        raise DomainError(f"bad lattice {v!r}")
    return k


def theta_hash(theta, d: int) -> str:
    import numpy as np

    th = np.zeros((d, d)) if theta is None else np.asarray(theta, dtype=float)
    return hashlib.sha256((np.round(th, 12) + 0.0).tobytes()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# commands


def cmd_upsilon(cfg: dict) -> dict:
    from .monoid_metric import find_isometric_isomorphism, parse_monoid, upsilon

    G = parse_monoid(_require(cfg, "a", "upsilon"))
    H = parse_monoid(_require(cfg, "b", "upsilon"))
    tol = _positive(cfg, "tol", 1e-3)
    budget = int(cfg.get("budget", 2_000_000))
    res = upsilon(G, H, tol, budget)
    report = {
        "command": "upsilon",
        "a": G.key,
        "b": H.key,
        "lo": res.lower,
        "hi": res.upper,
        "exhaustive": bool(res.notes.get("exhaustive", False)),
        "interval": res.to_dict(),
    }
    if "witness" in res.notes:
        report["witness"] = res.to_dict()["notes"]["witness"]
    if G.finite and H.finite and res.lower == 0.0:
        report["isometric_isomorphism"] = find_isometric_isomorphism(G, H) is not None
    return report


def _state(A, spec):
    import numpy as np

    from .errors import DomainError
    from .qcms import State

    if isinstance(spec, str):
        if spec == "tracial":
            return State.tracial(A)
        raise DomainError(f"unknown state {spec!r}")
    if isinstance(spec, list):
        return State.from_weights(A, spec)
    if isinstance(spec, dict):
        if "dirac" in spec:
            return State.dirac(A, int(spec["dirac"]))
        if "weights" in spec:
            return State.from_weights(A, spec["weights"])
        if "vector" in spec:
            v = np.asarray(spec["vector"], float) + 1j * np.asarray(spec.get("imag", [0.0] * len(spec["vector"])), float)
            if v.shape != (A.blocks[int(spec.get("block", 0))],) or np.linalg.norm(v) == 0:
                raise DomainError("state vector has the wrong size or is zero")
            return State.vector(A, v, int(spec.get("block", 0)))
    raise DomainError(f"cannot parse state {spec!r}")


def _mk_space(cfg: dict):
    import numpy as np

    from .errors import DomainError
    from .fuzzy_torus import FuzzyTorus, lip_norm
    from .metric_core import FiniteMetricSpace
    from .qcms import commutative_algebra, lipschitz_seminorm, polyhedral_seminorm

    if "space" in cfg:
        return lipschitz_seminorm(FiniteMetricSpace.from_json(cfg["space"]))
    if "torus" in cfg:
        t = cfg["torus"]
        A = FuzzyTorus(_k_tuple(_require(t, "k", "torus")), t.get("theta"))
        return A, lip_norm(A, t.get("length", "chordal"))
    if "polyhedral" in cfg:
        p = cfg["polyhedral"]
        rows = np.asarray(_require(p, "rows", "polyhedral"), float)
        if rows.ndim != 2:
            raise DomainError("polyhedral rows must be a matrix")
        A = commutative_algebra(rows.shape[1])
        return A, polyhedral_seminorm(A, rows)
    raise DomainError("mk config needs one of 'space', 'torus', 'polyhedral'")


def cmd_mk(cfg: dict) -> dict:
    from .qcms import mk_distance

    A, L = _mk_space(cfg)
    phi = _state(A, _require(cfg, "phi", "mk"))
    psi = _state(A, _require(cfg, "psi", "mk"))
    res = mk_distance(
        A, L, phi, psi,
        tol=_positive(cfg, "tol", 1e-6),
        method=cfg.get("method", "auto"),
        restarts=int(cfg.get("restarts", 64)),
        iterations=int(cfg.get("iterations", 2000)),
        seed=_seed(cfg),
    )
    return {"command": "mk", "lo": res.lower, "hi": res.upper, "interval": res.to_dict()}


def converge_row(k, theta, N: int, length, mesh: float, tol: float, seed: int) -> tuple[dict, dict]:
    """One sweep row between the tori ``k`` and ``2k`` plus its provenance record."""
    from .bridges import bridge_length, fuzzy_bridge, fuzzy_system, tunnel_from_covariant_bridge
    from .errors import DomainError, ResourceError
    from .fuzzy_torus import FuzzyTorus
    from .tunnels import covariant_propinquity_upper

    k2 = tuple(2 * x for x in k)
    row: dict[str, Any] = {
        "k": "x".join(map(str, k)), "k_prime": "x".join(map(str, k2)),
        "theta_hash": theta_hash(theta, len(k)), "N": N,
    }
    prov: dict[str, Any] = {"k": list(k), "k_prime": list(k2), "theta": theta, "N": N, "mesh": mesh, "seed": seed}
    try:
        A, B = FuzzyTorus(k, theta), FuzzyTorus(k2, theta)
        sa, sb = fuzzy_system(A, length), fuzzy_system(B, length)
        cb = fuzzy_bridge(k, k2, theta, theta, N, length, systems=(sa, sb))
        bl = bridge_length(cb, mesh, seed)
        eps = bl.upper
        ct = tunnel_from_covariant_bridge(cb, eps, bl)
        mag = ct.tunnel.meta["magnitude"]

        def factory(e: float):
            # a bridge at eps gives a 4 eps-covariant tunnel
            return tunnel_from_covariant_bridge(cb, e / 4.0, bl)

        prop = covariant_propinquity_upper(sa, sb, [factory], tol, mesh, seed)
    except ResourceError as exc:
        row.update(status="resource")
        prov["error"] = str(exc)
        return row, prov
    except DomainError:
        raise
    row.update(
        eps=eps,
        reach_lo=bl.reach.lower,
        reach_hi=bl.reach.upper,
        height_hi=bl.height.upper,
        magnitude_hi=mag["upper"],
        propinquity_upper=prop.upper,
        status="ok",
    )
    prov.update(bridge_length=bl.to_dict(), magnitude=mag, propinquity=prop.to_dict())
    return row, prov


def cmd_converge(cfg: dict) -> tuple[list[dict], dict]:
    from .errors import DomainError

    klist = [_k_tuple(k) for k in _require(cfg, "k_list", "converge")]
    if not klist:
        raise DomainError("k_list is empty")
    if len({len(k) for k in klist}) != 1:
        raise DomainError("all lattices in k_list need the same rank")
    theta = cfg.get("theta")
    N = cfg.get("N", 1)
    if not isinstance(N, int) or N < 0:
        raise DomainError("N must be a nonnegative integer")
    length = cfg.get("length", "chordal")
    mesh = _positive(cfg, "mesh", 0.25)
    tol = _positive(cfg, "tol", 1e-3)
    seed = _seed(cfg)
    if theta is not None:
        from .fuzzy_torus import check_theta

        for k in klist:
            check_theta(k, theta)
            check_theta(tuple(2 * x for x in k), theta)
    with ThreadPoolExecutor(max_workers=min(thread_cap(), len(klist))) as pool:
        results = list(pool.map(lambda k: converge_row(k, theta, N, length, mesh, tol, seed), klist))
    rows = [r for r, _ in results]
    sidecar = {
        "command": "converge",
        "columns": list(CONVERGE_COLUMNS),
        "config": cfg,
        "rows": [p for _, p in results],
    }
    return rows, sidecar


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CONVERGE_COLUMNS)
    for r in rows:
        w.writerow([fmt(r.get(c)) for c in CONVERGE_COLUMNS])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="propinq", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=("upsilon", "mk", "converge"))
    p.add_argument("--config", required=True, type=Path, help="JSON config file")
    p.add_argument("--out", required=True, type=Path, help="output path (JSON, or CSV for converge)")
    return p


def run(command: str, cfg: dict, out: Path) -> int:
    if command == "converge":
        rows, side = cmd_converge(cfg)
        write_atomic(out, rows_to_csv(rows))
        write_atomic(sidecar_path(out), dump_json(side))
        return EXIT_RESOURCE if any(r["status"] != "ok" for r in rows) else EXIT_OK
    report = cmd_upsilon(cfg) if command == "upsilon" else cmd_mk(cfg)
    report["config"] = cfg
    write_atomic(out, dump_json(report))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    _cap_blas_threads()
    args = build_parser().parse_args(argv)
    from .errors import DomainError, ResourceError

    try:
        cfg = json.loads(args.config.read_text())
        if not isinstance(cfg, dict):
            raise DomainError("config must be a JSON object")
        return run(args.command, cfg, args.out)
    except (json.JSONDecodeError, OSError) as exc:
        print(f"propinq: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except DomainError as exc:
        print(f"propinq: domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ResourceError as exc:
        print(f"propinq: resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
