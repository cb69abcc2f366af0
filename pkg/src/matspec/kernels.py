"""Closed-form model kernels and assembly of the main equation.

The model problem has Q = h = H = 0, so its solution is cos(rho x) I (or
sin(rho x)/rho I with Dirichlet data at 0) and every kernel of the main
equation is an elementary function. All of them are built from

    S(a, x)        = sin(a x) / a              (= x at a = 0)
    S[a1, a2](x)   = (S(a1, x) - S(a2, x)) / (a1 - a2)

evaluated without cancellation near coincident or small arguments.

The main equation is  psi~(x) = psi(x) (I + R~(x))  for a row of m x m
blocks psi_{nk}. Each block R~_{ls,nk} is an m x m matrix times a scalar
kernel, so a system is fully described by per-row-block "sources" theta,
coefficient matrices and scalar column kernels; :class:`MainEquation`
stores that description and both the interval and graph solvers share it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import SpectralData, encode_complex, model_beta, model_rho, opnorm

_SINC_SERIES = 1e-4
_N_SERIES = 14


def _prep(*args):
    arrs = np.broadcast_arrays(*[np.asarray(a, dtype=complex) for a in args])
    return arrs[0].shape, [a.ravel() for a in arrs]


def _finish(out, shape, real):
    out = out.reshape(shape)
    return out.real if real else out


def _all_real(*args):
    return all(np.isrealobj(a) or not np.any(np.imag(a)) for a in args)


def sinc(z):
    """sin(z)/z with the removable point filled in (unnormalised)."""
    z = np.asarray(z)
    small = np.abs(z) < _SINC_SERIES
    zs = np.where(small, 1.0, z)
    z2 = z * z
    series = 1.0 - z2 / 6.0 * (1.0 - z2 / 20.0 * (1.0 - z2 / 42.0))
    return np.where(small, series, np.sin(zs) / zs)


def sin_over(a, x):
    """S(a, x) = sin(a x)/a."""
    return x * sinc(a * x)


def _dd_powers(a1, a2, nmax):
    """Divided differences of a**n over (a1, a2) for n = 0..nmax."""
    d = [np.zeros_like(a1)]
    p2 = np.ones_like(a2)
    for _ in range(nmax):
        d.append(a1 * d[-1] + p2)
        p2 = p2 * a2
    return d


def _fact(n):
    return float(np.prod(np.arange(1, n + 1))) if n > 0 else 1.0


def _sdd_series(a1, a2, x):
    d = _dd_powers(a1, a2, 2 * _N_SERIES)
    out = np.zeros_like(a1)
    for j in range(_N_SERIES):
        out = out + (-1) ** j * d[2 * j] * x ** (2 * j + 1) / _fact(2 * j + 1)
    return out


def S_dd(a1, a2, x):
    """(S(a1, x) - S(a2, x)) / (a1 - a2), continuous across a1 = a2."""
    real = _all_real(a1, a2, x)
    shape, (a1, a2, x) = _prep(a1, a2, x)
    out = np.empty_like(a1)
    dlt = a1 - a2
    big = np.abs(dlt * x) >= 0.5
    amax = np.maximum(np.abs(a1), np.abs(a2))
    ser = ~big & (amax * np.abs(x) <= 1.0)
    mid = ~big & ~ser
    if big.any():
        b = big
        out[b] = (sin_over(a1[b], x[b]) - sin_over(a2[b], x[b])) / dlt[b]
    if ser.any():
        out[ser] = _sdd_series(a1[ser], a2[ser], x[ser])
    if mid.any():
        u, v, t, dd = a1[mid], a2[mid], x[mid], dlt[mid]
        out[mid] = t * np.cos(0.5 * (u + v) * t) * sinc(0.5 * dd * t) / u - np.sin(v * t) / (u * v)
    return _finish(out, shape, real)


# ---------------------------------------------------------------------------
# cosine family (interval problem, phi(0) = I)


def cos_product_integral(x, theta, rho):
    """D(x, theta^2, rho^2) = int_0^x cos(theta t) cos(rho t) dt."""
    return 0.5 * (sin_over(rho - theta, x) + sin_over(rho + theta, x))


def cos_product_integral_dx(x, theta, rho):
    return np.cos(theta * x) * np.cos(rho * x)


def wtilde(x, rho, rho_t):
    """(cos(rho x) - cos(rho_t x)) / (rho - rho_t)."""
    return -x * np.sin(0.5 * (rho + rho_t) * x) * sinc(0.5 * (rho - rho_t) * x)


def wtilde_dx(x, rho, rho_t):
    return -(np.sin(rho * x) + rho_t * x * np.cos(0.5 * (rho + rho_t) * x) * sinc(0.5 * (rho - rho_t) * x))


def Wtilde(x, theta, rho, rho_t):
    """(D(x, theta^2, rho^2) - D(x, theta^2, rho_t^2)) / (rho - rho_t)."""
    return 0.5 * (S_dd(rho - theta, rho_t - theta, x) + S_dd(rho + theta, rho_t + theta, x))


def Wtilde_dx(x, theta, rho, rho_t):
    return np.cos(theta * x) * wtilde(x, rho, rho_t)


# ---------------------------------------------------------------------------
# sine family (star graph, phi(0) = 0, phi'(0) = I)


def _dsin_series(th, rh, x):
    out = np.zeros_like(th)
    c = [(-1) ** i / _fact(2 * i + 1) for i in range(_N_SERIES)]
    for i in range(_N_SERIES):
        for j in range(_N_SERIES - i):
            e = 2 * i + 2 * j + 3
            out = out + c[i] * c[j] * th ** (2 * i) * rh ** (2 * j) * x ** e / e
    return out


def sin_product_integral(x, theta, rho):
    """int_0^x S(theta, t) S(rho, t) dt."""
    real = _all_real(x, theta, rho)
    shape, (x, th, rh) = _prep(x, theta, rho)
    out = np.empty_like(th)
    ser = np.maximum(np.abs(th), np.abs(rh)) * np.abs(x) <= 1.0
    swap = np.abs(rh) > np.abs(th)
    big_t = np.where(swap, rh, th)
    other = np.where(swap, th, rh)
    rest = ~ser
    if ser.any():
        out[ser] = _dsin_series(th[ser], rh[ser], x[ser])
    if rest.any():
        a, b, t = big_t[rest], other[rest], x[rest]
        out[rest] = -S_dd(a + b, a - b, t) / a
    return _finish(out, shape, real)


def sin_product_integral_dx(x, theta, rho):
    return sin_over(theta, x) * sin_over(rho, x)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


def _wsin_series(th, r1, r2, x):
    d = _dd_powers(r1, r2, 2 * _N_SERIES)
    out = np.zeros_like(th)
    c = [(-1) ** i / _fact(2 * i + 1) for i in range(_N_SERIES)]
    for i in range(_N_SERIES):
        for j in range(_N_SERIES - i):
            e = 2 * i + 2 * j + 3
            out = out + c[i] * c[j] * th ** (2 * i) * d[2 * j] * x ** e / e
    return out


def _wsin_quadrature(th, r1, r2, x):
    t = 0.5 * x[:, None] * (_GL_X[None, :] + 1.0)
    f = sin_over(th[:, None], t) * S_dd(r1[:, None], r2[:, None], t)
    return 0.5 * x * (f * _GL_W[None, :]).sum(axis=1)


def Wsin(x, theta, rho, rho_t):
    """(Dsin(x, theta, rho) - Dsin(x, theta, rho_t)) / (rho - rho_t) for the sine kernel."""
    real = _all_real(x, theta, rho, rho_t)
    shape, (x, th, r1, r2) = _prep(x, theta, rho, rho_t)
    out = np.empty_like(th)
    dlt = r1 - r2
    direct = (np.abs(dlt) >= 0.25) | (np.abs(dlt * x) >= 0.5)
    amax = np.maximum(np.maximum(np.abs(th), np.abs(r1)), np.abs(r2))
    ser = ~direct & (amax * np.abs(x) <= 1.0)
    quad = ~direct & ~ser & (np.abs(th) < 1e-3)
    closed = ~direct & ~ser & ~quad
    if direct.any():
        b = direct
        out[b] = (sin_product_integral(x[b], th[b], r1[b])
                  - sin_product_integral(x[b], th[b], r2[b])) / dlt[b]
    if ser.any():
        out[ser] = _wsin_series(th[ser], r1[ser], r2[ser], x[ser])
    if quad.any():
        out[quad] = _wsin_quadrature(th[quad], r1[quad], r2[quad], x[quad])
    if closed.any():
        t, a, u, v = th[closed], x[closed], r1[closed], r2[closed]
        p_dd = 0.5 * (S_dd(u - t, v - t, a) - S_dd(u + t, v + t, a))
        p_v = 0.5 * (sin_over(v - t, a) - sin_over(v + t, a))
        out[closed] = (p_dd / u - p_v / (u * v)) / t
    return _finish(out, shape, real)


def Wsin_dx(x, theta, rho, rho_t):
    return sin_over(theta, x) * S_dd(rho, rho_t, x)


# ---------------------------------------------------------------------------


def xi_sequence(d: SpectralData) -> np.ndarray:
    """xi_n = sum_k |rho_nk - (n-1)| + ||beta_n - beta~_n||."""
    rho_t = model_rho(d.N)
    spread = np.abs(d.rho - rho_t[:, None]).sum(axis=1)
    return spread + opnorm(d.beta_band - model_beta(d.N, d.m))


@dataclass(frozen=True)
class AssembledSystem:
    """psi~(x) (scalar multiples of I) and the block operator R~(x).

    ``R[l, s, n, k]`` is the m x m block R~_{ls,nk}; ``matrix()`` flattens it
    to the square matrix acting on rows indexed by (l, s, i).
    """

    x: float
    psi_tilde: np.ndarray
    R: np.ndarray
    dpsi_tilde: Optional[np.ndarray] = None
    dR: Optional[np.ndarray] = None

    @staticmethod
    def _flat(R):
        N, S, _, _, m, _ = R.shape
        return R.transpose(0, 1, 4, 2, 3, 5).reshape(N * S * m, N * S * m)

    def matrix(self) -> np.ndarray:
        return self._flat(self.R)

    def to_json(self) -> dict:
        out = {"x": float(self.x), "psi_tilde": encode_complex(self.psi_tilde),
               "R_blocks": encode_complex(self.R)}
        if self.dR is not None:
            out["dpsi_tilde"] = encode_complex(self.dpsi_tilde)
            out["dR_blocks"] = encode_complex(self.dR)
        return out


@dataclass(frozen=True, eq=False)
class MainEquation:
    """Data-dependent description of a truncated main equation.

    ``theta[l, p]`` are the spectral parameters entering row block l and
    ``C[l, s, p]`` the m x m coefficients, so that

        R~_{ls,nk}(x) = sum_p C[l, s, p] * K(x, theta[l, p], column (n, k)).

    ``kernels(xs)`` returns K, dK/dx, psi~ and dpsi~/dx on the nodes. The
    remaining fields reconstruct phi-values and the E_0 series.
    """

    theta: np.ndarray                 # (N, P)
    C: np.ndarray                     # (N, S, P, m, m)
    kernels: Callable                 # xs -> (K, dK, pt, dpt)
    phi_weights: np.ndarray           # (N, T, S): phi-term t is sum_s w psi_s
    e0_coef: np.ndarray               # (N, T, m, m)
    e0_model: Callable                # xs -> (conj phi~_t, d/dx), each (X, N, T)

    @property
    def N(self):
        return self.C.shape[0]

    @property
    def S(self):
        return self.C.shape[1]

    @property
    def m(self):
        return self.C.shape[3]

    def blocks(self, K):
        """R blocks (N, S, N, S, m, m) from one node's kernel tensor K (N, P, N, S)."""
        return np.einsum("lspij,lpnk->lsnkij", self.C, K, optimize=True)

    def system(self, x, derivative=False) -> AssembledSystem:
        K, dK, pt, dpt = self.kernels(np.array([float(x)]))
        R = self.blocks(K[0])
        if not derivative:
            return AssembledSystem(float(x), pt[0], R)
        return AssembledSystem(float(x), pt[0], R, dpt[0], self.blocks(dK[0]))


def _stack(*cols):
    return np.stack(cols, axis=-1)


def interval_equation(d: SpectralData) -> MainEquation:
    """Main equation for the interval problem against the model L(0, 0, 0)."""
    N, m = d.N, d.m
    rho = d.rho
    rho_t = model_rho(N).astype(complex)
    rho_hat = rho - rho_t[:, None]
    beta = d.beta
    beta_t = model_beta(N, m)
    P = S = m + 1
    theta = np.concatenate([rho, rho_t[:, None]], axis=1)
    C = np.zeros((N, S, P, m, m), dtype=complex)
    for s in range(m):
        C[:, s, s] = rho_hat[:, s, None, None] * beta[:, s]
        C[:, m, s] = beta[:, s]
    C[:, m, m] = -beta_t

    def kernels(xs):
        x = xs[:, None, None, None, None]
        th = theta[None, :, :, None, None]
        rk = rho[None, None, None, :, :]
        rt = rho_t[None, None, None, :, None]
        Kc = Wtilde(x, th, rk, rt)
        dKc = Wtilde_dx(x, th, rk, rt)
        rt1 = rho_t[None, None, None, :]
        Km = cos_product_integral(xs[:, None, None, None], theta[None, :, :, None], rt1)
        dKm = cos_product_integral_dx(xs[:, None, None, None], theta[None, :, :, None], rt1)
        K = np.concatenate([Kc, Km[..., None]], axis=-1)
        dK = np.concatenate([dKc, dKm[..., None]], axis=-1)
        xx = xs[:, None, None]
        pt = np.concatenate([wtilde(xx, rho[None], rho_t[None, :, None]),
                             np.cos(rho_t[None, :, None] * xx)], axis=-1)
        dpt = np.concatenate([wtilde_dx(xx, rho[None], rho_t[None, :, None]),
                              -rho_t[None, :, None] * np.sin(rho_t[None, :, None] * xx)], axis=-1)
        return K, dK, pt, dpt

    # phi_nk = psi_{n,m+1} + rho_hat psi_nk; phi_{n,m+1} = psi_{n,m+1}
    T = m + 1
    W = np.zeros((N, T, S), dtype=complex)
    for k in range(m):
        W[:, k, k] = rho_hat[:, k]
        W[:, k, m] = 1.0
    W[:, m, m] = 1.0
    E = np.zeros((N, T, m, m), dtype=complex)
    E[:, :m] = beta
    E[:, m] = -beta_t
    freq = np.concatenate([rho, rho_t[:, None]], axis=1)

    def e0_model(xs):
        xx = xs[:, None, None]
        f = np.conj(freq)[None]
        return np.cos(f * xx), -f * np.sin(f * xx)

    return MainEquation(theta, C, kernels, W, E, e0_model)


def assemble(x, d: SpectralData, N: Optional[int] = None, derivative: bool = False) -> AssembledSystem:
    """psi~(x) and R~(x) for the first N bands of d (interval problem)."""
    d = d if N is None else d.truncate(N)
    return interval_equation(d).system(x, derivative)
