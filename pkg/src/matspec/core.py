"""Domain types shared by every module: coefficients, spectral data, ordering.

Matrices are numpy arrays. Stacks of matrices use a leading axis, so a
potential sampled on ``M+1`` nodes is an array of shape ``(M+1, m, m)``.
Spectral data store ``V`` with ``V[n-1][:, k-1] = v_{nk}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, total_ordering
from typing import Callable, Optional

import numpy as np

from .errors import ValidationError

HERMITIAN_TOL = 1e-10
OMEGA_TOL = 1e-8


def opnorm(A):
    """Largest singular value; works on stacks of matrices."""
    return np.linalg.norm(A, ord=2, axis=(-2, -1))


def hermitian_defect(A):
    return float(np.max(opnorm(A - np.conj(np.swapaxes(A, -1, -2)))))


def trapezoid(y, dx, axis=0):
    y = np.moveaxis(np.asarray(y), axis, 0)
    return dx * (0.5 * (y[0] + y[-1]) + y[1:-1].sum(axis=0))


def cumulative_trapezoid(y, dx):
    y = np.asarray(y)
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * dx * (y[1:] + y[:-1]), axis=0)
    return out


def l2_norm(f, dx):
    """L2 norm on (0, pi) of a gridded scalar or matrix function (Frobenius pointwise)."""
    f = np.asarray(f)
    sq = np.abs(f) ** 2
    if sq.ndim > 1:
        sq = sq.reshape(sq.shape[0], -1).sum(axis=1)
    return float(np.sqrt(trapezoid(sq, dx)))


def matrix_l2_norm(F, dx):
    """Sum over entries of the L2 norms of a gridded matrix function (M+1, m, m)."""
    F = np.asarray(F)
    return float(np.sqrt(trapezoid(np.abs(F) ** 2, dx)).sum())


def principal_sqrt(lam):
    """sqrt with arg in (-pi/2, pi/2]; negative reals map to +i|.|."""
    return np.sqrt(np.asarray(lam, dtype=complex))


@total_ordering
@dataclass(frozen=True)
class IndexPair:
    n: int
    k: int

    def __lt__(self, other):
        return (self.n, self.k) < (other.n, other.k)

    def as_tuple(self):
        return (self.n, self.k)


@dataclass(frozen=True, eq=False)
class Coefficients:
    """The triple (Q, h, H) with Q sampled on x_i = i*pi/M."""

    Q: np.ndarray
    h: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=complex)
        if Q.ndim == 1:
            Q = Q[:, None, None]
        if Q.ndim != 3 or Q.shape[1] != Q.shape[2]:
            raise ValidationError(f"Q must have shape (M+1, m, m), got {Q.shape}")
        m = Q.shape[1]
        if Q.shape[0] < 3:
            raise ValidationError("grid needs M >= 2")
        h = np.asarray(self.h, dtype=complex).reshape(m, m)
        H = np.asarray(self.H, dtype=complex).reshape(m, m)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "H", H)

    @property
    def m(self) -> int:
        return self.Q.shape[1]

    @property
    def M(self) -> int:
        return self.Q.shape[0] - 1

    @property
    def dx(self) -> float:
        return np.pi / self.M

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, np.pi, self.M + 1)

    @cached_property
    def omega(self) -> np.ndarray:
        return self.h + self.H + 0.5 * trapezoid(self.Q, self.dx)

    @classmethod
    def from_function(cls, q: Callable, M: int, h=None, H=None, m: Optional[int] = None):
        """Sample ``q(x)`` (scalar or m x m valued) on the uniform grid."""
        x = np.linspace(0.0, np.pi, M + 1)
        Q = np.array([np.atleast_2d(q(t)) for t in x], dtype=complex)
        m = Q.shape[1] if m is None else m
        h = np.zeros((m, m)) if h is None else np.atleast_2d(h)
        H = np.zeros((m, m)) if H is None else np.atleast_2d(H)
        return cls(Q, h, H)

    @classmethod
    def zero(cls, m: int, M: int):
        return cls(np.zeros((M + 1, m, m)), np.zeros((m, m)), np.zeros((m, m)))

    def to_json(self) -> dict:
        return {"m": self.m, "M": self.M, "Q": encode_complex(self.Q),
                "h": encode_complex(self.h), "H": encode_complex(self.H)}

    @classmethod
    def from_json(cls, obj: dict) -> "Coefficients":
        try:
            m, M = int(obj["m"]), int(obj["M"])
            Q = decode_complex(obj["Q"])
            h = decode_complex(obj["h"])
            H = decode_complex(obj["H"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed coefficients record: {exc}") from exc
        if Q.shape != (M + 1, m, m) or h.shape != (m, m) or H.shape != (m, m):
            raise ValidationError("coefficient shapes do not match m and M")
        return cls(Q, h, H)


@dataclass(frozen=True)
class ImpedanceForm:
    sigma: np.ndarray
    Hcheck: np.ndarray


@dataclass(frozen=True)
class ValidationReport:
    hermitian_defect: float
    omega_norm: float
    grid_uniform: bool
    valid: bool
    in_class_P: bool

    def to_json(self):
        return dict(self.__dict__)


def validate_coefficients(c: Coefficients) -> ValidationReport:
    defect = max(hermitian_defect(c.Q), hermitian_defect(c.h), hermitian_defect(c.H))
    w = float(opnorm(c.omega))
    valid = defect <= HERMITIAN_TOL and c.M >= 2
    return ValidationReport(defect, w, True, valid, valid and w <= OMEGA_TOL)


def require_valid(c: Coefficients, class_P: bool = False) -> ValidationReport:
    rep = validate_coefficients(c)
    if not rep.valid:
        raise ValidationError(f"coefficients are not Hermitian (defect {rep.hermitian_defect:.2e})")
    if class_P and not rep.in_class_P:
        raise ValidationError(f"omega = h + H + 1/2 int Q is nonzero (norm {rep.omega_norm:.2e})")
    return rep


def to_impedance_form(c: Coefficients) -> ImpedanceForm:
    sigma = c.h[None] + cumulative_trapezoid(c.Q, c.dx)
    return ImpedanceForm(sigma, c.H + sigma[-1])


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Bands of eigenvalues ``lam[n-1, k-1]`` and norming vectors ``V[n-1][:, k-1]``.

    ``rho`` defaults to the principal square root of ``lam``; data built with
    :meth:`from_rho` keep the supplied values (used by synthetic families whose
    first band sits on the negative real axis).
    """

    lam: np.ndarray
    V: np.ndarray
    rho_given: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim == 1:
            lam = lam[:, None]
        V = np.asarray(self.V, dtype=complex)
        if V.ndim == 1:
            V = V[:, None, None]
        if V.shape != (lam.shape[0], lam.shape[1], lam.shape[1]):
            raise ValidationError(f"vector array shape {V.shape} does not match lambda {lam.shape}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "V", V)
        if self.rho_given is not None:
            object.__setattr__(self, "rho_given", np.asarray(self.rho_given, dtype=complex).reshape(lam.shape))

    @classmethod
    def from_rho(cls, rho, V):
        rho = np.asarray(rho, dtype=complex)
        return cls(np.real(rho * rho), V, rho_given=rho)

    @property
    def N(self) -> int:
        return self.lam.shape[0]

    @property
    def m(self) -> int:
        return self.lam.shape[1]

    @cached_property
    def rho(self) -> np.ndarray:
        if self.rho_given is not None:
            return self.rho_given
        return principal_sqrt(self.lam)

    @cached_property
    def beta(self) -> np.ndarray:
        """beta[n, k] = v_{nk} v_{nk}^*, shape (N, m, m, m)."""
        v = np.swapaxes(self.V, 1, 2)
        return v[..., :, None] * np.conj(v[..., None, :])

    @cached_property
    def beta_band(self) -> np.ndarray:
        return self.V @ np.conj(np.swapaxes(self.V, 1, 2))

    def truncate(self, N: int) -> "SpectralData":
        rg = None if self.rho_given is None else self.rho_given[:N]
        return type(self)(self.lam[:N], self.V[:N], rg)

    def pairs(self):
        return [IndexPair(n + 1, k + 1) for n in range(self.N) for k in range(self.m)]

    def check_order(self, tol: float = 1e-9) -> bool:
        flat = self.lam.ravel()
        return bool(np.all(np.diff(flat) >= -tol * (1 + np.abs(flat[1:]))))

    def to_json(self) -> dict:
        return {"m": self.m, "bands": [
            {"n": n + 1, "lambda": [float(v) for v in self.lam[n]],
             "vectors": encode_complex(np.swapaxes(self.V[n], 0, 1))}
            for n in range(self.N)]}

    @classmethod
    def from_json(cls, obj: dict) -> "SpectralData":
        try:
            m = int(obj["m"])
            bands = sorted(obj["bands"], key=lambda b: int(b["n"]))
            lam = np.array([[float(v) for v in b["lambda"]] for b in bands])
            V = np.array([np.swapaxes(decode_complex(b["vectors"]), 0, 1) for b in bands])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed spectral data record: {exc}") from exc
        if [int(b["n"]) for b in bands] != list(range(1, len(bands) + 1)):
            raise ValidationError("bands must be numbered 1..N without gaps")
        if lam.shape[1:] != (m,) or V.shape[1:] != (m, m):
            raise ValidationError("band sizes do not match m")
        return cls(lam, V)


def beta_aggregates(d: SpectralData):
    """Return (beta_nk, V_n, beta_n)."""
    return d.beta, d.V, d.beta_band


def model_rho(N: int) -> np.ndarray:
    return np.arange(N, dtype=float)


def model_beta(N: int, m: int) -> np.ndarray:
    b = np.full(N, 2.0 / np.pi)
    b[0] = 1.0 / np.pi
    return b[:, None, None] * np.eye(m)[None]


def model_data(N: int, m: int) -> SpectralData:
    """Spectral data of the problem with Q = h = H = 0."""
    lam = np.repeat((np.arange(N, dtype=float) ** 2)[:, None], m, axis=1)
    scale = np.full(N, np.sqrt(2.0 / np.pi))
    scale[0] = np.sqrt(1.0 / np.pi)
    V = scale[:, None, None] * np.eye(m)[None].astype(complex)
    return SpectralData(lam, V)


def encode_complex(a) -> list:
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def decode_complex(obj) -> np.ndarray:
    arr = np.asarray(obj, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError("complex entries must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def random_trig_coefficients(m: int, M: int, seed: int, terms: int = 3, radius: float = 1.0) -> Coefficients:
    """Q(x) = sum_j A_j cos(j x) with random Hermitian A_j, scaled to ||Q||_L2 = radius; h = H = 0."""
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, np.pi, M + 1)
    Q = np.zeros((M + 1, m, m), dtype=complex)
    for j in range(1, terms + 1):
        A = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
        Q += np.cos(j * x)[:, None, None] * (0.5 * (A + np.conj(A).T)) / j
    Q *= radius / matrix_l2_norm(Q, np.pi / M)
    return Coefficients(Q, np.zeros((m, m)), np.zeros((m, m)))
