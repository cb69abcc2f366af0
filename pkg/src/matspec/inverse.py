"""Inverse problem: solve the truncated main equation and recover (Q, h, H).

Bands beyond the supplied ones are taken equal to the model data, so the
truncated system is the exact main equation of the finite-data
approximation. Every node is an independent dense solve.
"""
from __future__ import annotations

from dataclasses import dataclass
import warnings
from typing import Optional

import numpy as np
from scipy.linalg import get_lapack_funcs, lu_factor, lu_solve

from .core import Coefficients, SpectralData, hermitian_defect, model_data
from .errors import IllConditioned, ValidationError
from .kernels import MainEquation, interval_equation
from .parallel import chunks, default_threads, pmap
from .stability import riesz_lower_bound

# data with a smaller truncated Riesz bound are flagged before solving
SCREEN_EPS = 1e-3


@dataclass(frozen=True)
class InverseOptions:
    N: int = 25
    M: int = 200
    cond_limit: float = 1e12
    symmetrize: bool = True

    def __post_init__(self):
        if self.N < 1 or self.M < 8:
            raise ValidationError("need N >= 1 and M >= 8")


@dataclass(frozen=True, eq=False)
class PsiSolution:
    """Solution of the main equation on the grid.

    ``psi[i, n, s]`` is the m x m block psi_{ns}(x_i); ``phi[i, n, t]`` are the
    recovered phi-values in the order used by the E_0 series.
    """

    x: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    cond: np.ndarray
    equation: MainEquation


def complete_with_model_tail(partial: SpectralData, N: int) -> SpectralData:
    """First p bands from ``partial``, model bands up to N."""
    p = min(partial.N, N)
    model = model_data(N, partial.m)
    lam = model.lam.copy()
    V = model.V.copy()
    lam[:p] = partial.lam[:p]
    V[:p] = partial.V[:p]
    rho = None
    if partial.rho_given is not None:
        rho = np.sqrt(model.lam.astype(complex))
        rho[:p] = partial.rho_given[:p]
    return SpectralData(lam, V, rho)


def _gecon(lu, anorm):
    gecon = get_lapack_funcs("gecon", (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    return np.inf if rcond == 0 else 1.0 / rcond


def _solve_nodes(eq: MainEquation, xs: np.ndarray, cond_limit: float):
    K, dK, pt, dpt = eq.kernels(xs)
    N, S, m = eq.N, eq.S, eq.m
    n = N * S * m
    eye = np.eye(m)
    psi = np.empty((len(xs), N, S, m, m), dtype=complex)
    dpsi = np.empty_like(psi)
    cond = np.empty(len(xs))
    for i in range(len(xs)):
        R = eq.blocks(K[i])
        A = np.eye(n) + R.transpose(0, 1, 4, 2, 3, 5).reshape(n, n)
        lu = lu_factor(A, check_finite=False)
        # condition estimate of the transposed system we actually solve
        cond[i] = _gecon(lu[0], np.abs(A).sum(axis=0).max())
        if not np.isfinite(cond[i]) or cond[i] > cond_limit:
            raise IllConditioned(float(xs[i]), float(cond[i]), cond_limit)
        # rows r of psi are independent: u_r (I + R) = u~_r, solve A^T u_r^T
        rhs = (pt[i][:, :, None, None] * eye).transpose(0, 1, 3, 2).reshape(n, m)
        u = lu_solve(lu, rhs, trans=1, check_finite=False)
        P = u.reshape(N, S, m, m).transpose(0, 1, 3, 2)
        dR = eq.blocks(dK[i])
        drhs = (dpt[i][:, :, None, None] * eye) - np.einsum("lsri,lsnkij->nkrj", P, dR)
        du = lu_solve(lu, drhs.transpose(0, 1, 3, 2).reshape(n, m), trans=1, check_finite=False)
        psi[i] = P
        dpsi[i] = du.reshape(N, S, m, m).transpose(0, 1, 3, 2)
    return psi, dpsi, cond


def solve_equation(eq: MainEquation, M: int, cond_limit: float = 1e12, threads=None) -> PsiSolution:
    xs = np.linspace(0.0, np.pi, M + 1)
    threads = default_threads() if threads is None else threads
    parts = chunks(len(xs), threads)
    res = pmap(lambda sl: _solve_nodes(eq, xs[sl], cond_limit), parts, threads)
    psi = np.concatenate([r[0] for r in res])
    dpsi = np.concatenate([r[1] for r in res])
    cond = np.concatenate([r[2] for r in res])
    W = eq.phi_weights
    phi = np.einsum("nts,xnsij->xntij", W, psi)
    dphi = np.einsum("nts,xnsij->xntij", W, dpsi)
    return PsiSolution(xs, psi, dpsi, phi, dphi, cond, eq)


def solve_main_equation(d: SpectralData, opts: InverseOptions = InverseOptions(), threads=None) -> PsiSolution:
    """psi(x) (I + R~(x)) = psi~(x) on the grid, with model data beyond the given bands."""
    data = complete_with_model_tail(d, opts.N)
    return solve_equation(interval_equation(data), opts.M, opts.cond_limit, threads)


def compute_E0(sol: PsiSolution, d: Optional[SpectralData] = None):
    """E_0 and E_0' on the grid, term by term (product rule, no differencing).

    The spectral data are already carried by ``sol.equation``; the argument
    is accepted for symmetry with the other entry points.
    """
    eq = sol.equation
    f, df = eq.e0_model(sol.x)
    G = eq.e0_coef
    # sum over n and t in a fixed order for bit-stable results
    E0 = np.einsum("xntij,ntjk,xnt->xik", sol.phi, G, f)
    dE0 = (np.einsum("xntij,ntjk,xnt->xik", sol.dphi, G, f)
           + np.einsum("xntij,ntjk,xnt->xik", sol.phi, G, df))
    return E0, dE0


def _herm(A):
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


@dataclass(frozen=True, eq=False)
class Reconstruction:
    coefficients: Coefficients
    hermitian_defect: float
    max_cond: float


def screen(d: SpectralData) -> bool:
    """Warn when the data look outside the solvable class; never raises."""
    ok = d.check_order() and riesz_lower_bound(d) >= SCREEN_EPS
    if not ok:
        warnings.warn("spectral data fail the ordering or Riesz-bound screen; "
                      "the reconstruction may be meaningless", RuntimeWarning, stacklevel=3)
    return ok


def reconstruct_full(d: SpectralData, opts: InverseOptions = InverseOptions(), threads=None) -> Reconstruction:
    screen(d)
    sol = solve_main_equation(d, opts, threads)
    E0, dE0 = compute_E0(sol, d)
    Q, h, H = -2.0 * dE0, -E0[0], E0[-1]
    defect = max(hermitian_defect(Q), hermitian_defect(h), hermitian_defect(H))
    if opts.symmetrize:
        Q, h, H = _herm(Q), _herm(h), _herm(H)
    return Reconstruction(Coefficients(Q, h, H), defect, float(sol.cond.max()))


def reconstruct(d: SpectralData, opts: InverseOptions = InverseOptions(), threads=None) -> Coefficients:
    """(Q, h, H) from Q = -2 E_0', h = -E_0(0), H = E_0(pi)."""
    return reconstruct_full(d, opts, threads).coefficients
