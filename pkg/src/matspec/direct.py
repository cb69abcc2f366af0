"""Forward problem: phi(x, lam), eigenvalues, norming vectors, Weyl matrix.

Eigenvalues are located by counting. For real lam the boundary pair (A, B)
with A = phi'(pi) + H phi(pi) and B = s*phi(pi) has A^*B Hermitian, so
Omega = (A + iB)(A - iB)^{-1} is unitary, and lam is an eigenvalue exactly
when Omega has the eigenvalue -1 (with the same multiplicity). Tracking the
eigenphases of Omega gives an exact count of eigenvalues between two mesh
points. Clusters are isolated by bisection on that count and polished by a
multiplicity-aware Newton iteration on det A, using the variational
solution dphi/dlam for the derivative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from . import _backend
from .core import Coefficients, SpectralData, l2_norm, opnorm, require_valid
from .errors import BandIncomplete, NearEigenvalue, RankMismatch
from .parallel import chunks, default_threads, pmap

TWO_PI = 2.0 * np.pi

# integration step is chosen so that |rho| * h stays below this value
RK_TARGET = 0.004


def lam_of_tau(tau):
    return tau * abs(tau)


def tau_of_lam(lam):
    return math.copysign(math.sqrt(abs(lam)), lam)


class Shooter:
    """Integrates Y'' = (Q - lam) Y from x = 0 with fixed initial data.

    Q is given on the coefficient grid; finer integration grids take their
    values from a cubic spline through the grid samples.
    """

    def __init__(self, Q, Y0, Z0, threads=None):
        self.Q = np.ascontiguousarray(Q, dtype=complex)
        self.M = self.Q.shape[0] - 1
        self.hgrid = np.pi / self.M
        self.Y0 = np.asarray(Y0, dtype=complex)
        self.Z0 = np.asarray(Z0, dtype=complex)
        self.threads = default_threads() if threads is None else threads
        self._spline = None
        self._cache = {}

    def _fine(self, r):
        if r not in self._cache:
            if self._spline is None:
                self._spline = CubicSpline(np.linspace(0, np.pi, self.M + 1), self.Q, axis=0)
            K = self.M * r
            h = np.pi / K
            x = np.linspace(0.0, np.pi, K + 1)
            Qn = self.Q if r == 1 else np.ascontiguousarray(self._spline(x))
            Qm = np.ascontiguousarray(self._spline(x[:-1] + 0.5 * h))
            if len(self._cache) > 8:
                self._cache.clear()
            self._cache[r] = (Qn, Qm, h)
        return self._cache[r]

    def refinement(self, lam, target=RK_TARGET):
        rho = abs(np.sqrt(complex(lam)))
        return max(1, int(math.ceil(self.hgrid * max(1.0, rho) / target)))

    def run(self, lams, r, stride=0, variational=False):
        Qn, Qm, h = self._fine(r)
        lams = np.atleast_1d(np.asarray(lams, dtype=complex))
        parts = chunks(len(lams), self.threads)

        def job(sl):
            return _backend.rk4_batch(Qn, Qm, lams[sl], self.Y0, self.Z0, h, stride, variational)

        res = pmap(job, parts, self.threads)
        if len(res) == 1:
            return res[0]
        return tuple(None if res[0][i] is None else np.concatenate([p[i] for p in res])
                     for i in range(5))


@dataclass(frozen=True)
class MatrixTrajectory:
    x: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray


def integrate_phi(c: Coefficients, lam, refine: Optional[int] = None) -> MatrixTrajectory:
    """phi with phi(0) = I, phi'(0) = h, sampled on the coefficient grid."""
    sh = Shooter(c.Q, np.eye(c.m), c.h, threads=1)
    r = sh.refinement(lam) if refine is None else refine
    _, _, _, _, traj = sh.run([lam], r, stride=r)
    return MatrixTrajectory(c.grid, traj[0, :, 0], traj[0, :, 1])


def boundary_matrix(c: Coefficients, lam, refine: Optional[int] = None) -> np.ndarray:
    sh = Shooter(c.Q, np.eye(c.m), c.h, threads=1)
    r = sh.refinement(lam) if refine is None else refine
    Y, Z, *_ = sh.run([lam], r)
    return Z[0] + c.H @ Y[0]


# ---------------------------------------------------------------------------
# boundary conditions at pi, in the form needed by the counting solver


class IntervalBC:
    """Y'(pi) + H Y(pi) = 0."""

    def __init__(self, H):
        self.H = np.asarray(H, dtype=complex)

    def pair(self, Y, Z, s):
        return Z + self.H @ Y, s * Y

    def newton(self, Y, Z, W, Wd):
        return Z + self.H @ Y, Wd + self.H @ W


def phase_sums(A, B):
    """(sum of eigenphases, sum of eigenphases shifted to [0, 2pi) from pi)."""
    Om = np.linalg.solve(A - 1j * B, A + 1j * B)
    th = np.angle(np.linalg.eigvals(Om))
    return th.sum(axis=-1), np.mod(th - np.pi, TWO_PI).sum(axis=-1)


def _wrap(a):
    return (a + np.pi) % TWO_PI - np.pi


def crossings(pa, pb) -> int:
    """Number of eigenvalues between two parameter values with phase sums pa, pb."""
    return int(round((pa[1] + _wrap(pb[0] - pa[0]) - pb[1]) / TWO_PI))


@dataclass(frozen=True)
class Root:
    lam: float
    mult: int
    r: int  # integration refinement used for the final iterate


class CountingSolver:
    """Finds the lowest eigenvalues of a shooting problem with multiplicities."""

    def __init__(self, shooter: Shooter, bc, m: int, cluster_tol=1e-6,
                 target=RK_TARGET, iso_width=0.02):
        self.sh = shooter
        self.bc = bc
        self.m = m
        self.cluster_tol = cluster_tol
        self.target = target
        self.iso_width = iso_width
        self.step = min(0.1, 0.25 / m)
        self.evaluations = 0

    def _phases(self, taus, r):
        lams = np.array([lam_of_tau(t) for t in taus])
        Y, Z, *_ = self.sh.run(lams, r)
        self.evaluations += len(lams)
        s = np.maximum(1.0, np.abs(np.asarray(taus)))[:, None, None]
        A, B = self.bc.pair(Y, Z, s)
        s1, s2 = phase_sums(A, B)
        return [(s1[i], s2[i]) for i in range(len(taus))]

    def _count_step(self, a, b, pa, pb, r, depth=0):
        """Yield (a, b, pa, pb, count) sub-steps small enough for unwrapping."""
        d = _wrap(pb[0] - pa[0])
        c = crossings(pa, pb)
        if (abs(d) > 0.8 * np.pi or c < 0) and depth < 8:
            mid = 0.5 * (a + b)
            pm = self._phases([mid], r)[0]
            return (self._count_step(a, mid, pa, pm, r, depth + 1)
                    + self._count_step(mid, b, pm, pb, r, depth + 1))
        return [(a, b, pa, pb, c)]

    def _isolate(self, a, b, pa, pb, c, r):
        if c <= 0:
            return []
        la, lb = lam_of_tau(a), lam_of_tau(b)
        if c == 1 and b - a <= self.iso_width:
            return [(a, b, pa, c)]
        if c > 1 and lb - la <= 0.5 * self.cluster_tol * (1.0 + abs(lb)):
            return [(a, b, pa, c)]
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            return [(a, b, pa, c)]
        pm = self._phases([mid], r)[0]
        c1 = crossings(pa, pm)
        c1 = min(max(c1, 0), c)
        return self._isolate(a, mid, pa, pm, c1, r) + self._isolate(mid, b, pm, pb, c - c1, r)

    def _polish(self, a, b, pa, c, r) -> Root:
        lo, hi = lam_of_tau(a), lam_of_tau(b)
        p_lo = pa
        lamk = 0.5 * (lo + hi)
        for _ in range(80):
            Y, Z, W, Wd, _t = self.sh.run([lamk], r, variational=True)
            self.evaluations += 1
            s = max(1.0, math.sqrt(abs(lamk)))
            A, B = self.bc.pair(Y, Z, s)
            s1, s2 = phase_sums(A, B)
            pk = (s1[0], s2[0])
            cnt = crossings(p_lo, pk)
            if cnt <= 0:
                lo, p_lo = lamk, pk
            elif cnt >= c:
                hi = lamk
            else:
                break  # iterate sits inside a numerically split cluster
            Au, dAu = self.bc.newton(Y[0], Z[0], W[0], Wd[0])
            try:
                t = np.trace(np.linalg.solve(Au, dAu))
                new = lamk - (c / t).real if t != 0 else lamk
            except np.linalg.LinAlgError:
                break
            if not (lo < new < hi) or not np.isfinite(new):
                new = 0.5 * (lo + hi)
            tol = 1e-12 * max(1.0, 2.0 * math.sqrt(abs(new)))
            done = abs(new - lamk) <= tol or hi - lo <= tol
            lamk = new
            if done:
                break
        return Root(float(lamk), c, r)

    def lowest(self, count: int, lam_low: float, tau_max: Optional[float] = None) -> List[Root]:
        """Roots (with multiplicity) covering at least the lowest ``count`` eigenvalues."""
        tau = tau_of_lam(lam_low)
        # zone edges are offset from the integer and half-integer model roots
        off = 0.2371
        tau_max = tau_max if tau_max is not None else count / self.m + 20.0
        roots: List[Root] = []
        found = 0
        while found < count:
            if tau > tau_max:
                raise BandIncomplete(f"found only {found} of {count} eigenvalues below rho={tau_max:.2f}")
            edge = math.floor(tau - off) + 1 + off
            if edge - tau < 0.3 * self.step:
                edge += 1.0
            r = self.sh.refinement(lam_of_tau(max(abs(tau), abs(edge))), self.target)
            npts = max(1, int(math.ceil((edge - tau) / self.step)))
            taus = np.linspace(tau, edge, npts + 1)
            ph = self._phases(taus, r)
            for i in range(npts):
                for a, b, pa, pb, c in self._count_step(taus[i], taus[i + 1], ph[i], ph[i + 1], r):
                    for ia, ib, ipa, ic in self._isolate(a, b, pa, pb, c, r):
                        root = self._polish(ia, ib, ipa, ic, r)
                        roots.append(root)
                        found += root.mult
            tau = edge
        return roots


def lambda_low(c: Coefficients) -> float:
    return -(float(opnorm(c.h)) + float(opnorm(c.H)) + l2_norm(c.Q, c.dx) * math.sqrt(math.pi) + 1.0) ** 2


@dataclass(frozen=True)
class Spectrum:
    lam: np.ndarray                      # (N, m)
    roots: Tuple[Root, ...]
    slots: Tuple[Tuple[int, int], ...]   # (root index, member index) per flattened slot


def _assemble_spectrum(roots: List[Root], N: int, m: int) -> Spectrum:
    roots = sorted(roots, key=lambda r: r.lam)
    flat, slots = [], []
    for i, rt in enumerate(roots):
        for j in range(rt.mult):
            flat.append(rt.lam)
            slots.append((i, j))
    need = N * m
    return Spectrum(np.array(flat[:need]).reshape(N, m), tuple(roots), tuple(slots[:need]))


def _check_windows(rho_bands, windows_ok):
    for n, row in enumerate(rho_bands, start=1):
        if not windows_ok(n, row):
            raise BandIncomplete(f"band {n} does not have the expected root pattern: {row}")


def _low_energy_bands(c: Coefficients) -> int:
    bound = float(opnorm(c.h)) + float(opnorm(c.H)) + l2_norm(c.Q, c.dx) * math.sqrt(math.pi)
    return int(math.ceil(4.0 * bound)) + 2


def find_eigenvalues(c: Coefficients, N: int, threads=None) -> Spectrum:
    """Lowest N*m eigenvalues grouped into bands of m."""
    require_valid(c)
    sh = Shooter(c.Q, np.eye(c.m), c.h, threads=threads)
    solver = CountingSolver(sh, IntervalBC(c.H), c.m)
    roots = solver.lowest(N * c.m, lambda_low(c))
    spec = _assemble_spectrum(roots, N, c.m)
    n0 = _low_energy_bands(c)
    rho = np.real(np.sqrt(spec.lam.astype(complex)))

    def ok(n, row):
        if n < n0:
            return True
        return bool(np.all((row >= n - 1.5) & (row < n - 0.5)))

    _check_windows(rho, ok)
    return spec


def _kernel_and_gram(A, Y, Z, W, Wd, mult, lam):
    """Orthonormalising vectors for the kernel of A, via the Gram identity.

    For real lam, int_0^pi phi^* phi dx = phi'(pi)^* w(pi) - phi(pi)^* w'(pi)
    where w = dphi/dlam; both initial values of w vanish.
    """
    _, sv, Vh = np.linalg.svd(A)
    tol = KERNEL_TOL * (1.0 + abs(lam))
    # a distinct neighbour closer than the kernel tolerance leaves a small but
    # clearly nonzero singular value; only near-exact extra kernels are rejected
    if mult > len(sv) or sv[-mult] >= tol or (mult < len(sv) and sv[-mult - 1] < EXTRA_KERNEL_TOL * (1.0 + abs(lam))):
        small = int(np.sum(sv < tol))
        raise RankMismatch(f"kernel dimension {small} != multiplicity {mult} at lambda={lam:.12g}")
    Wk = np.conj(Vh[-mult:]).T
    G_full = np.conj(Z).T @ W - np.conj(Y).T @ Wd
    G = np.conj(Wk).T @ G_full @ Wk
    G = 0.5 * (G + np.conj(G).T)
    ev, U = np.linalg.eigh(G)
    if np.any(ev <= 0):
        raise RankMismatch(f"non-positive Gram matrix at lambda={lam:.12g}")
    return Wk @ (U * ev ** -0.5) @ np.conj(U).T


def norming_vectors(c: Coefficients, lam: float, mult: int = 1, refine: Optional[int] = None) -> np.ndarray:
    """m x mult matrix whose columns v give orthonormal Y = phi(., lam) v."""
    sh = Shooter(c.Q, np.eye(c.m), c.h, threads=1)
    r = sh.refinement(lam) if refine is None else refine
    Y, Z, W, Wd, _ = sh.run([lam], r, variational=True)
    A = Z[0] + c.H @ Y[0]
    return _kernel_and_gram(A, Y[0], Z[0], W[0], Wd[0], mult, lam)


def _vectors_for(spec: Spectrum, m: int, vec_fn, threads=None) -> np.ndarray:
    used = sorted({i for i, _ in spec.slots})
    mats = pmap(lambda i: vec_fn(spec.roots[i]), used, threads)
    by_root = dict(zip(used, mats))
    cols = [by_root[i][:, j] for i, j in spec.slots]
    N = spec.lam.shape[0]
    V = np.array(cols).reshape(N, m, m)
    return np.swapaxes(V, 1, 2)


def forward(c: Coefficients, N: int, threads=None) -> SpectralData:
    """Eigenvalues and norming vectors of the first N bands."""
    spec = find_eigenvalues(c, N, threads)
    V = _vectors_for(spec, c.m, lambda rt: norming_vectors(c, rt.lam, rt.mult, rt.r), threads)
    return SpectralData(spec.lam, V)


def weight_matrices(d: SpectralData, tol: float = 1e-6) -> np.ndarray:
    """alpha_{nk}: sum of beta over the group of equal eigenvalues, shape (N, m, m, m)."""
    lam = d.lam.ravel()
    beta = d.beta.reshape(-1, d.m, d.m)
    alpha = np.empty_like(beta)
    for i, li in enumerate(lam):
        grp = np.abs(lam - li) <= tol * (1.0 + abs(li))
        alpha[i] = beta[grp].sum(axis=0)
    return alpha.reshape(d.N, d.m, d.m, d.m)


NEAR_SINGULAR_FLOOR = 1e-9
KERNEL_TOL = 1e-6
EXTRA_KERNEL_TOL = 1e-9


def _near_singular(A_phi, A_full, cond_limit: float) -> bool:
    """sigma_min(A_phi) small relative to the scale of the full boundary matrix.

    The threshold never drops below NEAR_SINGULAR_FLOOR: the integrated
    boundary values carry an absolute error around 1e-11, so smaller
    singular values are indistinguishable from zero.
    """
    sv = np.linalg.svd(A_phi, compute_uv=False)
    scale = np.linalg.norm(A_full, 2)
    tol = max(1.0 / cond_limit, NEAR_SINGULAR_FLOOR)
    return not np.isfinite(sv[-1]) or sv[-1] <= tol * scale


def weyl_matrix(c: Coefficients, lam, refine: Optional[int] = None, cond_limit: float = 1e12) -> np.ndarray:
    """M(lam) = Phi(0, lam) for the solution Phi obeying Phi'(0) - h Phi(0) = I and the condition at pi."""
    m = c.m
    Y0 = np.hstack([np.eye(m), np.zeros((m, m))])
    Z0 = np.hstack([c.h, np.eye(m)])
    sh = Shooter(c.Q, Y0, Z0, threads=1)
    r = sh.refinement(lam) if refine is None else refine
    Y, Z, *_ = sh.run([lam], r)
    A = Z[0] + c.H @ Y[0]
    A_phi, A_S = A[:, :m], A[:, m:]
    if _near_singular(A_phi, A, cond_limit):
        raise NearEigenvalue(f"boundary matrix nearly singular at lambda={complex(lam)}")
    return -np.linalg.solve(A_phi, A_S)


def contour_residue(fn, center: float, radius: float, npts: int = 64) -> np.ndarray:
    """(1 / 2 pi i) * contour integral of fn over a circle; trapezoid rule."""
    t = TWO_PI * (np.arange(npts) + 0.5) / npts
    z = center + radius * np.exp(1j * t)
    vals = np.array([fn(zj) for zj in z])
    return np.tensordot(z - center, vals, axes=(0, 0)) / npts
