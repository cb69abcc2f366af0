"""Sturm-Liouville operators on a star graph of m equal edges.

Each edge carries -y_j'' + q_j y_j = lam y_j with a Dirichlet condition at
the pendant vertex (x = 0) and standard matching (continuity, zero sum of
derivatives) at the centre (x = pi). In matrix form Q = diag(q_j) and the
matching conditions read T Y'(pi) - T^perp Y(pi) = 0 with T the rank-one
projector onto (1, ..., 1).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .core import SpectralData, hermitian_defect, l2_norm, matrix_l2_norm, trapezoid
from .direct import (CountingSolver, Shooter, _assemble_spectrum, _check_windows,
                     _kernel_and_gram, _near_singular, _vectors_for)
from .errors import BandIncomplete, NearEigenvalue, ValidationError
from .inverse import InverseOptions, compute_E0, solve_equation
from .kernels import (MainEquation, S_dd, Wsin, Wsin_dx, sin_over, sin_product_integral,
                      sin_product_integral_dx, wtilde)
from .parallel import pmap
from .stability import zeta_Z

ZERO_MEAN_TOL = 1e-8


def projector(m: int):
    T = np.full((m, m), 1.0 / m)
    return T, np.eye(m) - T


@dataclass(frozen=True, eq=False)
class StarGraphProblem:
    """Edge potentials ``q[j]`` sampled on x_i = i*pi/M."""

    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.ndim != 2 or q.shape[1] < 3:
            raise ValidationError(f"q must have shape (m, M+1) with M >= 2, got {q.shape}")
        object.__setattr__(self, "q", q)

    @property
    def m(self) -> int:
        return self.q.shape[0]

    @property
    def M(self) -> int:
        return self.q.shape[1] - 1

    @property
    def dx(self) -> float:
        return np.pi / self.M

    @property
    def grid(self):
        return np.linspace(0.0, np.pi, self.M + 1)

    @cached_property
    def Q(self) -> np.ndarray:
        Q = np.zeros((self.M + 1, self.m, self.m))
        idx = np.arange(self.m)
        Q[:, idx, idx] = self.q.T
        return Q

    @property
    def means(self):
        return trapezoid(self.q, self.dx, axis=1)

    def validate(self):
        if np.max(np.abs(self.means)) > ZERO_MEAN_TOL:
            raise ValidationError(f"edge potentials must have zero mean (max {np.max(np.abs(self.means)):.2e})")

    @classmethod
    def from_functions(cls, fns, M: int):
        x = np.linspace(0.0, np.pi, M + 1)
        return cls(np.array([np.broadcast_to(f(x), x.shape) for f in fns], dtype=float))

    @classmethod
    def zero(cls, m: int, M: int):
        return cls(np.zeros((m, M + 1)))

    def to_json(self) -> dict:
        return {"m": self.m, "M": self.M, "q": self.q.tolist()}

    @classmethod
    def from_json(cls, obj) -> "StarGraphProblem":
        try:
            m, M = int(obj["m"]), int(obj["M"])
            q = np.asarray(obj["q"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed graph record: {exc}") from exc
        if q.shape != (m, M + 1):
            raise ValidationError("q shape does not match m and M")
        return cls(q)


def band_scale(N: int, m: int) -> np.ndarray:
    """(n - 1/2) for k = 1 and n for k >= 2, shape (N, m)."""
    n = np.arange(1, N + 1, dtype=float)[:, None]
    s = np.repeat(n, m, axis=1)
    s[:, 0] -= 0.5
    return s


class GraphSpectralData(SpectralData):
    """Spectral data with the graph scaling beta_{n1} = (n-1/2)^2 v v^*, beta_{nk} = n^2 v v^*."""

    @cached_property
    def beta(self) -> np.ndarray:
        v = np.swapaxes(self.V, 1, 2)
        s = band_scale(self.N, self.m) ** 2
        return s[..., None, None] * (v[..., :, None] * np.conj(v[..., None, :]))

    @cached_property
    def beta_band(self) -> np.ndarray:
        """sum_{k >= 2} beta_{nk} (the k = 1 sum is beta[:, 0])."""
        return self.beta[:, 1:].sum(axis=1)


def graph_model_rho(N: int, m: int) -> np.ndarray:
    r = np.repeat(np.arange(1, N + 1, dtype=float)[:, None], m, axis=1)
    r[:, 0] -= 0.5
    return r


def graph_model_data(N: int, m: int) -> GraphSpectralData:
    # orthonormal basis whose first vector is (1, ..., 1)/sqrt(m)
    e = np.ones(m) / np.sqrt(m)
    U = np.linalg.qr(np.column_stack([e, np.eye(m)]))[0][:, :m]
    U = U * np.sign(U[0, 0])
    V = np.sqrt(2.0 / np.pi) * np.repeat(U[None].astype(complex), N, axis=0)
    return GraphSpectralData(graph_model_rho(N, m) ** 2, V)


def graph_model_beta(N: int, m: int):
    """(beta~_{n1}, beta~_n) stacks, each (N, m, m)."""
    T, Tp = projector(m)
    n = np.arange(1, N + 1, dtype=float)
    return ((2 / np.pi) * ((n - 0.5) ** 2)[:, None, None] * T,
            (2 / np.pi) * (n ** 2)[:, None, None] * Tp)


class GraphBC:
    """T Y'(pi) - T^perp Y(pi) = 0."""

    def __init__(self, m):
        self.T, self.Tp = projector(m)

    def pair(self, Y, Z, s):
        return self.T @ Z - s * (self.Tp @ Y), self.Tp @ Z + s * (self.T @ Y)

    def newton(self, Y, Z, W, Wd):
        return self.T @ Z - self.Tp @ Y, self.T @ Wd - self.Tp @ W

    def matrix(self, Y, Z):
        return self.T @ Z - self.Tp @ Y


def _graph_lambda_low(g: StarGraphProblem) -> float:
    return -(l2_norm(g.Q, g.dx) * np.sqrt(np.pi) + 1.0) ** 2


def graph_eigenvalues(g: StarGraphProblem, N: int, threads=None):
    m = g.m
    sh = Shooter(g.Q, np.zeros((m, m)), np.eye(m), threads=threads)
    solver = CountingSolver(sh, GraphBC(m), m)
    roots = solver.lowest(N * m, _graph_lambda_low(g))
    spec = _assemble_spectrum(roots, N, m)
    n0 = int(np.ceil(4.0 * l2_norm(g.Q, g.dx) * np.sqrt(np.pi))) + 2
    rho = np.real(np.sqrt(spec.lam.astype(complex)))

    def ok(n, row):
        if n < n0:
            return True
        if not (n - 0.9 <= row[0] <= n - 0.1):
            return False
        return bool(np.all((row[1:] >= n - 0.1) & (row[1:] <= n + 0.4)))

    _check_windows(rho, ok)
    return spec, sh


def graph_norming_vectors(g: StarGraphProblem, lam: float, mult: int = 1, refine: Optional[int] = None):
    """Kernel vectors u with phi(., lam) u orthonormal (before the band scaling)."""
    m = g.m
    sh = Shooter(g.Q, np.zeros((m, m)), np.eye(m), threads=1)
    r = sh.refinement(lam) if refine is None else refine
    Y, Z, W, Wd, _ = sh.run([lam], r, variational=True)
    A = GraphBC(m).matrix(Y[0], Z[0])
    return _kernel_and_gram(A, Y[0], Z[0], W[0], Wd[0], mult, lam)


def graph_forward(g: StarGraphProblem, N: int, threads=None) -> GraphSpectralData:
    """Eigenvalues and norming vectors v_{nk} (graph scaling) of the first N bands."""
    g.validate()
    spec, _ = graph_eigenvalues(g, N, threads)
    V = _vectors_for(spec, g.m, lambda rt: graph_norming_vectors(g, rt.lam, rt.mult, rt.r), threads)
    V = V / band_scale(N, g.m)[:, None, :]
    return GraphSpectralData(spec.lam, V)


def graph_weyl_matrix(g: StarGraphProblem, lam, refine: Optional[int] = None, cond_limit: float = 1e12):
    """M(lam) = Phi'(0, lam) with Phi(0) = I and the matching conditions at pi."""
    m = g.m
    Y0 = np.hstack([np.zeros((m, m)), np.eye(m)])
    Z0 = np.hstack([np.eye(m), np.zeros((m, m))])
    sh = Shooter(g.Q, Y0, Z0, threads=1)
    r = sh.refinement(lam) if refine is None else refine
    Y, Z, *_ = sh.run([lam], r)
    A = GraphBC(m).matrix(Y[0], Z[0])
    A_phi, A_c = A[:, :m], A[:, m:]
    if _near_singular(A_phi, A, cond_limit):
        raise NearEigenvalue(f"boundary matrix nearly singular at lambda={complex(lam)}")
    return -np.linalg.solve(A_phi, A_c)


# ---------------------------------------------------------------------------
# main equation


def graph_equation(d: GraphSpectralData) -> MainEquation:
    N, m = d.N, d.m
    rho = d.rho
    rho_t = graph_model_rho(N, m).astype(complex)
    rho_hat = rho - rho_t
    beta = d.beta
    bt1, btn = graph_model_beta(N, m)
    nn = np.arange(1, N + 1, dtype=float)
    half, full = nn - 0.5, nn
    S = P = m + 2
    theta = np.concatenate([rho, half[:, None], full[:, None]], axis=1).astype(complex)
    inv_l = (1.0 / nn)[:, None, None]
    C = np.zeros((N, S, P, m, m), dtype=complex)
    for s in range(m):
        C[:, s, s] = rho_hat[:, s, None, None] * beta[:, s] * inv_l
    C[:, m, 0] = beta[:, 0] * inv_l
    C[:, m, m] = -bt1 * inv_l
    for s in range(1, m):
        C[:, m + 1, s] = beta[:, s] * inv_l
    C[:, m + 1, m + 1] = -btn * inv_l

    def kernels(xs):
        x4 = xs[:, None, None, None]
        th = theta[None, :, :, None, None]
        rk = rho[None, None, None]
        rt = rho_t[None, None, None]
        x5 = xs[:, None, None, None, None]
        nfac = nn[None, None, None, :, None]
        Kc = nfac * Wsin(x5, th, rk, rt)
        dKc = nfac * Wsin_dx(x5, th, rk, rt)
        th4 = theta[None, :, :, None]
        n4 = nn[None, None, None, :]
        K1 = n4 * sin_product_integral(x4, th4, half[None, None, None, :])
        K2 = n4 * sin_product_integral(x4, th4, full[None, None, None, :])
        dK1 = n4 * sin_product_integral_dx(x4, th4, half[None, None, None, :])
        dK2 = n4 * sin_product_integral_dx(x4, th4, full[None, None, None, :])
        K = np.concatenate([Kc, K1[..., None], K2[..., None]], axis=-1)
        dK = np.concatenate([dKc, dK1[..., None], dK2[..., None]], axis=-1)
        xx = xs[:, None, None]
        n3 = nn[None, :, None]
        pt = np.concatenate([n3 * S_dd(rho[None], rho_t[None], xx),
                             n3 * sin_over(half[None, :, None], xx),
                             n3 * sin_over(full[None, :, None], xx)], axis=-1)
        dpt = np.concatenate([n3 * wtilde(xx, rho[None], rho_t[None]),
                              n3 * np.cos(half[None, :, None] * xx),
                              n3 * np.cos(full[None, :, None] * xx)], axis=-1)
        return K, dK, pt, dpt

    T = m + 2
    Wt = np.zeros((N, T, S), dtype=complex)
    for k in range(m):
        Wt[:, k, k] = rho_hat[:, k] / nn
        Wt[:, k, m if k == 0 else m + 1] = 1.0 / nn
    Wt[:, m, m] = 1.0 / nn
    Wt[:, m + 1, m + 1] = 1.0 / nn
    E = np.zeros((N, T, m, m), dtype=complex)
    E[:, :m] = beta
    E[:, m] = -bt1
    E[:, m + 1] = -btn
    freq = np.concatenate([rho, half[:, None], full[:, None]], axis=1).astype(complex)

    def e0_model(xs):
        xx = xs[:, None, None]
        f = np.conj(freq)[None]
        return sin_over(f, xx), np.cos(f * xx)

    return MainEquation(theta, C, kernels, Wt, E, e0_model)


def complete_graph_tail(partial: GraphSpectralData, N: int) -> GraphSpectralData:
    p = min(partial.N, N)
    model = graph_model_data(N, partial.m)
    lam, V = model.lam.copy(), model.V.copy()
    lam[:p] = partial.lam[:p]
    V[:p] = partial.V[:p]
    return GraphSpectralData(lam, V)


def graph_assemble(x, d: GraphSpectralData, N: Optional[int] = None, derivative: bool = False):
    d = d if N is None else d.truncate(N)
    return graph_equation(d).system(x, derivative)


@dataclass(frozen=True, eq=False)
class GraphReconstruction:
    Q: np.ndarray            # full matrix potential on the grid
    q: np.ndarray            # (m, M+1) diagonal entries
    offdiag_residual: float  # sum of L2 norms of the off-diagonal entries
    hermitian_defect: float
    max_cond: float

    def problem(self) -> StarGraphProblem:
        return StarGraphProblem(self.q)


def graph_reconstruct(d: GraphSpectralData, opts: InverseOptions = InverseOptions(), threads=None) -> GraphReconstruction:
    data = complete_graph_tail(d, opts.N)
    sol = solve_equation(graph_equation(data), opts.M, opts.cond_limit, threads)
    _, dE0 = compute_E0(sol)
    Q = -2.0 * dE0
    defect = hermitian_defect(Q)
    if opts.symmetrize:
        Q = 0.5 * (Q + np.conj(np.swapaxes(Q, -1, -2)))
    m = d.m
    idx = np.arange(m)
    q = np.real(Q[:, idx, idx]).T.copy()
    off = Q.copy()
    off[:, idx, idx] = 0.0
    return GraphReconstruction(Q, q, matrix_l2_norm(off, np.pi / opts.M), defect, float(sol.cond.max()))


def graph_riesz(d: SpectralData, N: Optional[int] = None) -> float:
    """sqrt of the smallest eigenvalue of the Gram matrix of chi_{nk} = v_{nk} sin(rho_{nk} x)."""
    d = d if N is None else d.truncate(N)
    rho = d.rho.ravel()
    v = np.swapaxes(d.V, 1, 2).reshape(-1, d.m)
    zero = np.abs(rho) < 1e-8
    # sin(rho x) = rho * S(rho, x); the rho = 0 branch uses x = S(0, x)
    f = np.where(zero, 1.0, rho)
    D = sin_product_integral(np.pi, np.conj(rho)[:, None], rho[None, :])
    G = (np.conj(v) @ v.T) * np.conj(f)[:, None] * f[None, :] * D
    G = 0.5 * (G + np.conj(G).T)
    lo = np.linalg.eigvalsh(G)[0]
    return float(np.sqrt(max(lo, 0.0)))


def graph_Zj(part, A: GraphSpectralData, B: GraphSpectralData, j: int, weight: str = "ordinal"):
    """Per-edge distance Z_j: only the (j, j) entries of the group beta sums enter."""
    if not 0 <= j < A.m:
        raise ValidationError(f"edge index {j} outside 0..{A.m - 1}")
    return zeta_Z(part, A, B, weight=weight, diag=j)
