"""Command-line front end.

Every command reads JSON, writes JSON (CSV for ``sweep``) and a separate run
manifest with versions and timings. Artifacts carry a hash of the run
configuration and are written only after the computation has succeeded.

Exit codes: 1 parse error, 2 validation failure, 3 numerical failure. Errors
are reported as a JSON object on stderr.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import platform
import sys
import tempfile
import time
from typing import Callable, Dict, Optional

import numpy as np
import scipy

from . import __version__
from ._backend import BACKEND
from .core import (Coefficients, SpectralData, encode_complex, l2_norm, matrix_l2_norm, opnorm,
                   random_trig_coefficients, require_valid)
from .direct import forward, weight_matrices
from .errors import MatspecError, ParseError, ValidationError
from .graph import (GraphSpectralData, StarGraphProblem, graph_forward, graph_reconstruct, graph_riesz,
                    graph_Zj)
from .inverse import InverseOptions, complete_with_model_tail, reconstruct_full
from .kernels import assemble
from .parallel import default_threads
from .stability import (Partition, auto_partition, membership, remainder_norms, riesz_lower_bound,
                        stability_ratio, theta_Theta, zeta_Z)

DEFAULTS = {"N": 25, "M": 200, "cond_limit": 1e12, "gap": 0.5, "seed": 0}

# options that never change the numbers and are left out of the config hash
_UNHASHED = {"threads", "out", "manifest", "func"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ParseError(message)


# ---------------------------------------------------------------------------
# I/O helpers


def _read_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read JSON from {path}: {exc}") from exc


def _file_digest(path: Optional[str]) -> Optional[str]:
    if path is None:
        return None
    try:
        with open(path, "rb") as fh:
            return hashlib.sha256(fh.read()).hexdigest()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=True) + "\n"


def _write_atomic(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".matspec-")
    except OSError as exc:
        raise ValidationError(f"cannot write to {path}: {exc}") from exc
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def config_of(args: argparse.Namespace) -> dict:
    """Everything that determines the numbers: options plus input file digests."""
    cfg = {}
    for k, v in sorted(vars(args).items()):
        if k in _UNHASHED:
            continue
        if isinstance(v, str) and os.path.isfile(v) and k not in ("command", "graph_command"):
            cfg[k] = {"sha256": _file_digest(v)}
        else:
            cfg[k] = v
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def _manifest(args, cfg, chash, timings) -> dict:
    return {"config": cfg, "config_hash": chash, "threads": args.threads,
            "versions": {"matspec": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__, "backend": BACKEND},
            "seed": getattr(args, "seed", None), "timings_s": timings}


# ---------------------------------------------------------------------------
# input loaders


def _load_problem(args) -> Coefficients:
    if getattr(args, "problem", None):
        c = Coefficients.from_json(_read_json(args.problem))
    elif getattr(args, "random", None):
        c = random_trig_coefficients(args.random, args.M, args.seed, radius=args.radius)
    else:
        raise ValidationError("give --problem FILE or --random m")
    require_valid(c)
    return c


def _load_spectra(path: str, cls=SpectralData) -> SpectralData:
    d = cls.from_json(_read_json(path))
    if not np.all(np.isfinite(d.lam)) or not np.all(np.isfinite(d.V)):
        raise ValidationError(f"non-finite entries in {path}")
    return d


def _load_graph(args) -> StarGraphProblem:
    if args.problem:
        g = StarGraphProblem.from_json(_read_json(args.problem))
    elif args.edges:
        g = StarGraphProblem.zero(args.edges, args.M)
    else:
        raise ValidationError("give --problem FILE or --edges k")
    if args.edges and g.m != args.edges:
        raise ValidationError(f"--edges {args.edges} does not match the problem (m = {g.m})")
    g.validate()
    return g


def _opts(args) -> InverseOptions:
    return InverseOptions(N=args.N, M=args.M, cond_limit=args.cond_limit,
                          symmetrize=not getattr(args, "no_symmetrize", False))


# ---------------------------------------------------------------------------
# commands; each returns (artifact, timings) or (text, timings) for CSV


def _timed(timings: Dict[str, float], name: str, fn: Callable):
    t = time.perf_counter()
    out = fn()
    timings[name] = round(time.perf_counter() - t, 6)
    return out


def cmd_forward(args, T):
    c = _load_problem(args)
    d = _timed(T, "forward", lambda: forward(c, args.N, args.threads))
    art = d.to_json()
    if args.weights:
        art["weights"] = [encode_complex(a) for a in weight_matrices(d)]
    return art


def _coefficient_errors(rec: Coefficients, ref: Coefficients) -> dict:
    if rec.M != ref.M:
        raise ValidationError("reconstruction and reference use different grids")
    dQ = rec.Q - ref.Q
    return {"Q_L2": matrix_l2_norm(dQ, ref.dx), "Q_L2_frobenius": l2_norm(dQ, ref.dx),
            "h": float(opnorm(rec.h - ref.h)), "H": float(opnorm(rec.H - ref.H))}


def cmd_inverse(args, T):
    d = _load_spectra(args.spectra)
    opts = _opts(args)
    rec = _timed(T, "inverse", lambda: reconstruct_full(d, opts, args.threads))
    art = rec.coefficients.to_json()
    art["diagnostics"] = {"hermitian_defect": rec.hermitian_defect, "max_cond": rec.max_cond}
    if args.dump_system is not None:
        if not 0.0 <= args.dump_system <= np.pi:
            raise ValidationError("--dump-system x must lie in [0, pi]")
        full = complete_with_model_tail(d, args.N)
        art["system"] = assemble(args.dump_system, full, args.N, derivative=True).to_json()
    return art


def cmd_roundtrip(args, T):
    c = _load_problem(args)
    p = args.N if args.p is None else args.p
    if not 1 <= p <= args.N:
        raise ValidationError("need 1 <= p <= N")
    if c.M != args.M:
        raise ValidationError(f"--M {args.M} does not match the grid of the problem (M = {c.M})")
    d = _timed(T, "forward", lambda: forward(c, args.N, args.threads))
    rec = _timed(T, "inverse", lambda: reconstruct_full(d.truncate(p), _opts(args), args.threads))
    return {"N": args.N, "p": p, "errors": _coefficient_errors(rec.coefficients, c),
            "diagnostics": {"hermitian_defect": rec.hermitian_defect, "max_cond": rec.max_cond}}


def _partition_for(args, A, B) -> Partition:
    if args.partition in (None, "auto"):
        return auto_partition(A, B, args.gap)
    return Partition.from_json(_read_json(args.partition))


def _spectra_pair(args):
    cls = GraphSpectralData if args.graph else SpectralData
    A = _load_spectra(args.spectra_a, cls)
    B = _load_spectra(args.spectra_b, cls)
    if A.m != B.m:
        raise ValidationError("spectral data have different m")
    N = min(A.N, B.N)
    return A.truncate(N), B.truncate(N)


def cmd_stability(args, T):
    if args.problem_a or args.problem_b:
        if not (args.problem_a and args.problem_b):
            raise ValidationError("--problem-a and --problem-b go together")
        a = Coefficients.from_json(_read_json(args.problem_a))
        b = Coefficients.from_json(_read_json(args.problem_b))
        require_valid(a), require_valid(b)
        if a.m != b.m or a.M != b.M:
            raise ValidationError("problems must share m and M")
        part = None if args.partition in (None, "auto") else Partition.from_json(_read_json(args.partition))
        r = _timed(T, "ratio", lambda: stability_ratio(a, b, part, args.N, args.gap, args.threads, args.weight))
        return {"stability_ratio": r.to_json()}
    if not (args.spectra_a and args.spectra_b):
        raise ValidationError("give --spectra-a/--spectra-b or --problem-a/--problem-b")
    A, B = _spectra_pair(args)
    part = _partition_for(args, A, B)
    diag = None if args.edge is None else args.edge - 1
    if diag is not None:
        if not args.graph:
            raise ValidationError("--edge needs --graph spectral data")
        zeta, Z = graph_Zj(part, A, B, diag, args.weight)
    else:
        zeta, Z = zeta_Z(part, A, B, weight=args.weight, tail=args.tail)
    out = {"partition": part.to_json(), "zeta": [float(z) for z in zeta], "Z": Z}
    if part.sub is not None:
        theta, Theta = theta_Theta(part, A, B, weight=args.weight, tail=args.tail)
        out.update(theta=[float(t) for t in theta], Theta=Theta)
    riesz = graph_riesz if args.graph else riesz_lower_bound
    for tag, d in (("a", A), ("b", B)):
        entry = {"eps_hat": riesz(d)}
        if not args.graph:
            r = remainder_norms(d)
            entry.update(kappa_norm=r.kappa_norm, K_norm=r.K_norm)
            if args.omega_bound is not None and args.eps is not None:
                entry["membership"] = membership(d, args.omega_bound, args.eps)[1].to_json()
        out[f"spectra_{tag}"] = entry
    return out


def cmd_partition(args, T):
    A, B = _spectra_pair(args)
    return {"partition": auto_partition(A, B, args.gap).to_json()}


def cmd_sweep(args, T):
    c = _load_problem(args)
    ps = sorted({int(s) for s in args.ps.split(",") if s.strip()})
    if not ps or ps[0] < 1:
        raise ValidationError("--ps must list positive band counts")
    N = max(args.N, ps[-1])
    d = _timed(T, "forward", lambda: forward(c, N, args.threads))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p", "error_Q", "error_h", "error_H"])
    for p in ps:
        opts = InverseOptions(N=N, M=c.M, cond_limit=args.cond_limit)
        rec = _timed(T, f"inverse_p{p}", lambda: reconstruct_full(d.truncate(p), opts, args.threads))
        e = _coefficient_errors(rec.coefficients, c)
        w.writerow([p, repr(e["Q_L2"]), repr(e["h"]), repr(e["H"])])
    return buf.getvalue()


def _graph_errors(rec, g: StarGraphProblem) -> dict:
    if rec.q.shape != g.q.shape:
        raise ValidationError("--M must match the grid of the problem file")
    err = [l2_norm(rec.q[j] - g.q[j], g.dx) for j in range(g.m)]
    return {"edge_L2": [float(e) for e in err], "max_edge_L2": float(max(err)),
            "offdiag_residual": rec.offdiag_residual}


def cmd_graph(args, T):
    opts = _opts(args)
    if args.graph_command == "forward":
        g = _load_graph(args)
        return _timed(T, "forward", lambda: graph_forward(g, args.N, args.threads)).to_json()
    if args.graph_command == "inverse":
        d = _load_spectra(args.spectra, GraphSpectralData)
        if args.edges and d.m != args.edges:
            raise ValidationError(f"--edges {args.edges} does not match the spectral data (m = {d.m})")
        rec = _timed(T, "inverse", lambda: graph_reconstruct(d, opts, args.threads))
        art = rec.problem().to_json()
        art["diagnostics"] = {"offdiag_residual": rec.offdiag_residual,
                              "hermitian_defect": rec.hermitian_defect, "max_cond": rec.max_cond}
        return art
    g = _load_graph(args)
    if g.M != args.M:
        raise ValidationError(f"--M {args.M} does not match the grid of the problem (M = {g.M})")
    d = _timed(T, "forward", lambda: graph_forward(g, args.N, args.threads))
    rec = _timed(T, "inverse", lambda: graph_reconstruct(d, opts, args.threads))
    return {"N": args.N, "errors": _graph_errors(rec, g),
            "diagnostics": {"hermitian_defect": rec.hermitian_defect, "max_cond": rec.max_cond}}


# ---------------------------------------------------------------------------
# parser


def _common(p, inverse=False):
    p.add_argument("--N", "--bands", dest="N", type=int, default=DEFAULTS["N"], help="number of bands (default %(default)s)")
    p.add_argument("--M", "--grid", dest="M", type=int, default=DEFAULTS["M"], help="grid intervals on [0, pi] (default %(default)s)")
    p.add_argument("--cond-limit", type=float, default=DEFAULTS["cond_limit"],
                   help="abort when a node's condition estimate exceeds this (default %(default)g)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: MATSPEC_THREADS or 1); never changes results")
    p.add_argument("--seed", type=int, default=DEFAULTS["seed"], help="seed for generated problems")
    p.add_argument("--out", required=True, help="output artifact path")
    p.add_argument("--manifest", default=None, help="run manifest path (default: OUT.manifest.json)")


def _problem_source(p):
    p.add_argument("--problem", help="coefficients JSON {m, M, Q, h, H} with complex entries as [re, im]")
    p.add_argument("--random", type=int, metavar="m",
                   help="generate a random trigonometric Q of size m instead of reading --problem")
    p.add_argument("--radius", type=float, default=1.0, help="L2 norm of the generated Q")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="matspec", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("forward", help="eigenvalues and norming vectors of (Q, h, H)")
    _problem_source(p)
    p.add_argument("--weights", action="store_true", help="also write the weight matrices")
    _common(p)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("inverse", help="reconstruct (Q, h, H) from spectral data")
    p.add_argument("--spectra", required=True, help="spectral data JSON as written by forward")
    p.add_argument("--dump-system", type=float, default=None, metavar="x",
                   help="include the assembled linear system at x in the artifact")
    p.add_argument("--no-symmetrize", action="store_true", help="keep the raw (non-Hermitian) reconstruction")
    _common(p)
    p.set_defaults(func=cmd_inverse)

    p = sub.add_parser("roundtrip", help="forward then inverse, report L2 errors")
    _problem_source(p)
    p.add_argument("--p", type=int, default=None, help="use only the first p bands (default N)")
    _common(p)
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("stability", help="distances zeta/Z/Theta, Riesz bounds, or a stability ratio")
    p.add_argument("--spectra-a", help="first spectral data JSON")
    p.add_argument("--spectra-b", help="second spectral data JSON")
    p.add_argument("--problem-a", help="first coefficients JSON (stability-ratio mode)")
    p.add_argument("--problem-b", help="second coefficients JSON (stability-ratio mode)")
    p.add_argument("--partition", default="auto", help="'auto' or a JSON list of groups of [n, k]")
    p.add_argument("--gap", type=float, default=DEFAULTS["gap"], help="auto-partition gap (default %(default)s)")
    p.add_argument("--weight", choices=["ordinal", "band"], default="ordinal",
                   help="weight s of zeta_s: group position or band index")
    p.add_argument("--tail", choices=["inverse_square"], default=None,
                   help="add the l2 tail of a zeta_s ~ c/s^2 continuation")
    p.add_argument("--graph", action="store_true", help="inputs are star-graph spectral data")
    p.add_argument("--edge", type=int, default=None, help="per-edge distance Z_j for edge j (1-based)")
    p.add_argument("--omega-bound", type=float, default=None, help="Omega for the membership test")
    p.add_argument("--eps", type=float, default=None, help="epsilon for the membership test")
    _common(p)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("partition", help="automatic partition of two spectral data sets")
    p.add_argument("--spectra-a", required=True)
    p.add_argument("--spectra-b", required=True)
    p.add_argument("--gap", type=float, default=DEFAULTS["gap"])
    p.add_argument("--graph", action="store_true", help="inputs are star-graph spectral data")
    _common(p)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("sweep", help="reconstruction error against the number p of given bands (CSV)")
    _problem_source(p)
    p.add_argument("--ps", default="5,10,20,25", help="comma-separated band counts")
    _common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("graph", help="star-graph problems")
    gsub = p.add_subparsers(dest="graph_command", required=True, parser_class=_Parser)
    for name, text in (("forward", "spectral data of a star graph"),
                       ("inverse", "reconstruct the edge potentials"),
                       ("roundtrip", "forward then inverse, report per-edge errors")):
        g = gsub.add_parser(name, help=text)
        g.add_argument("--edges", type=int, default=None, help="number of edges m")
        if name == "inverse":
            g.add_argument("--spectra", required=True, help="graph spectral data JSON")
        else:
            g.add_argument("--problem", help='graph JSON {"m", "M", "q": [[...] per edge]}')
        g.add_argument("--no-symmetrize", action="store_true", help=argparse.SUPPRESS)
        _common(g)
        g.set_defaults(func=cmd_graph)
    return ap


def _check(args):
    if args.N < 1 or args.M < 8:
        raise ValidationError("need N >= 1 and M >= 8")
    if args.cond_limit <= 0:
        raise ValidationError("--cond-limit must be positive")
    if args.threads is None:
        args.threads = default_threads()
    elif args.threads < 1:
        raise ValidationError("--threads must be positive")


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _check(args)
        cfg = config_of(args)
        chash = config_hash(cfg)
        timings: Dict[str, float] = {}
        t0 = time.perf_counter()
        result = args.func(args, timings)
        timings["total"] = round(time.perf_counter() - t0, 6)
        if isinstance(result, str):
            text = f"# config_hash={chash}\n" + result
        else:
            result["config_hash"] = chash
            text = _dumps(result)
        _write_atomic(args.out, text)
        _write_atomic(args.manifest or args.out + ".manifest.json",
                      _dumps(_manifest(args, cfg, chash, timings)))
        return 0
    except MatspecError as exc:
        sys.stderr.write(json.dumps(exc.to_dict() | {"exit_code": exc.exit_code}) + "\n")
        return exc.exit_code
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "kind": "numerical",
                                     "message": str(exc), "exit_code": 3}) + "\n")
        return 3


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
