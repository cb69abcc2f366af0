"""Quantitative stability diagnostics for spectral data.

Remainders of the eigenvalue and norming-vector asymptotics, a Riesz lower
bound estimated from a truncated Gram matrix, partitions of the index set
into finite groups and the distances zeta_s, Z, theta_s, Theta between two
spectral data sequences.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import polygamma

from .core import (Coefficients, IndexPair, SpectralData, matrix_l2_norm, model_beta,
                   opnorm)
from .errors import DegenerateZ, ValidationError
from .kernels import cos_product_integral, xi_sequence

Group = Tuple[IndexPair, ...]


@dataclass(frozen=True)
class Partition:
    """Disjoint finite groups of index pairs, optionally refined into subgroups."""

    groups: Tuple[Group, ...]
    sub: Optional[Tuple[Tuple[Group, ...], ...]] = None

    def __post_init__(self):
        groups = tuple(tuple(sorted(g)) for g in self.groups)
        if any(len(g) == 0 for g in groups):
            raise ValidationError("partition groups must be non-empty")
        seen = [p for g in groups for p in g]
        if len(seen) != len(set(seen)):
            raise ValidationError("partition groups overlap")
        object.__setattr__(self, "groups", groups)
        if self.sub is not None:
            sub = tuple(tuple(tuple(sorted(h)) for h in gs) for gs in self.sub)
            if len(sub) != len(groups):
                raise ValidationError("refinement must list subgroups for every group")
            for g, gs in zip(groups, sub):
                if sorted(p for h in gs for p in h) != list(g):
                    raise ValidationError("subgroups must partition their group")
            object.__setattr__(self, "sub", sub)

    def covers(self, N: int, m: int) -> bool:
        want = {IndexPair(n, k) for n in range(1, N + 1) for k in range(1, m + 1)}
        return {p for g in self.groups for p in g} == want

    def require_cover(self, N: int, m: int):
        if not self.covers(N, m):
            raise ValidationError(f"partition does not cover the {N} x {m} index set")

    @classmethod
    def one_element(cls, N: int, m: int) -> "Partition":
        return cls(tuple((IndexPair(n, k),) for n in range(1, N + 1) for k in range(1, m + 1)))

    @classmethod
    def bands(cls, N: int, m: int) -> "Partition":
        return cls(tuple(tuple(IndexPair(n, k) for k in range(1, m + 1)) for n in range(1, N + 1)))

    @classmethod
    def graph_families(cls, N: int, m: int) -> "Partition":
        """{(n,1)} and {(n,k): k >= 2} for every band."""
        groups = []
        for n in range(1, N + 1):
            groups.append((IndexPair(n, 1),))
            if m > 1:
                groups.append(tuple(IndexPair(n, k) for k in range(2, m + 1)))
        return cls(tuple(groups))

    @classmethod
    def canonical_refinement(cls, N: int, omega) -> "Partition":
        """Band groups J_s split by equal diagonal entries of omega."""
        w = _omega_diag(omega, None)
        levels = sorted(set(np.round(w, 12)))
        groups, sub = [], []
        for n in range(1, N + 1):
            groups.append(tuple(IndexPair(n, k + 1) for k in range(len(w))))
            sub.append(tuple(tuple(IndexPair(n, k + 1) for k in range(len(w)) if round(w[k], 12) == lv)
                             for lv in levels))
        return cls(tuple(groups), tuple(sub))

    def to_json(self):
        out = [[[p.n, p.k] for p in g] for g in self.groups]
        if self.sub is None:
            return out
        return {"groups": out, "subgroups": [[[[p.n, p.k] for p in h] for h in gs] for gs in self.sub]}

    @classmethod
    def from_json(cls, obj) -> "Partition":
        if isinstance(obj, dict) and "partition" in obj:  # artifact of the partition command
            obj = obj["partition"]
        try:
            if isinstance(obj, dict):
                groups = [tuple(IndexPair(int(a), int(b)) for a, b in g) for g in obj["groups"]]
                sub = [tuple(tuple(IndexPair(int(a), int(b)) for a, b in h) for h in gs)
                       for gs in obj["subgroups"]]
                return cls(tuple(groups), tuple(sub))
            return cls(tuple(tuple(IndexPair(int(a), int(b)) for a, b in g) for g in obj))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed partition: {exc}") from exc


def _omega_diag(omega, m):
    if omega is None:
        return np.zeros(m)
    w = np.asarray(omega)
    if w.ndim == 2:
        if np.max(np.abs(w - np.diag(np.diag(w)))) > 1e-12:
            raise ValidationError("omega must be diagonal (apply a unitary transform first)")
        w = np.diag(w)
    w = np.real(w).astype(float)
    if np.any(np.diff(w) < 0):
        raise ValidationError("omega diagonal must be non-decreasing")
    return w


# ---------------------------------------------------------------------------
# asymptotic remainders and the Riesz bound


@dataclass(frozen=True)
class RemainderNorms:
    kappa_norm: float
    K_norm: float
    kappa: np.ndarray = field(repr=False)
    K: np.ndarray = field(repr=False)
    group_norms: Optional[np.ndarray] = None


def _band_levels(N: int, first_band: str):
    c = np.full(N, 2.0 / np.pi)
    if first_band == "model":
        c[0] = 1.0 / np.pi
    elif first_band != "asymptotic":
        raise ValidationError("first_band must be 'model' or 'asymptotic'")
    return c


def remainder_norms(d: SpectralData, omega=None, first_band: str = "model") -> RemainderNorms:
    """l2 norms of kappa_{nk} = n(rho_{nk} - (n-1) - omega_k/(pi n)) and K_n = n(V_n^* V_n - c_n I).

    ``first_band="model"`` compares band 1 with the model value 1/pi, so the
    zero problem has vanishing remainders; ``"asymptotic"`` uses 2/pi for all n.
    With a non-zero omega the per-level remainders of sum_{omega_s = w} v v^*
    against (2/pi) I_<w> are also returned (one l2 norm per distinct level).
    """
    N, m = d.N, d.m
    w = _omega_diag(omega, m)
    n = np.arange(1, N + 1, dtype=float)[:, None]
    kappa = n * (d.rho - (n - 1) - w[None, :] / (np.pi * n))
    c = _band_levels(N, first_band)
    VV = np.conj(np.swapaxes(d.V, 1, 2)) @ d.V
    K = n[:, :, None] * (VV - c[:, None, None] * np.eye(m))
    kn = float(np.sqrt(np.sum(np.abs(kappa) ** 2)))
    Kn = float(np.sqrt(np.sum(opnorm(K) ** 2)))
    groups = None
    if np.any(w != 0):
        levels = sorted(set(np.round(w, 12)))
        out = []
        for lv in levels:
            idx = [k for k in range(m) if round(w[k], 12) == lv]
            Ik = np.zeros((m, m))
            Ik[idx, idx] = 1.0
            S = sum(d.beta[:, k] for k in idx)
            out.append(float(np.sqrt(np.sum(opnorm(S - c[:, None, None] * Ik) ** 2))))
        groups = np.array(out)
    return RemainderNorms(kn, Kn, kappa, K, groups)


def riesz_gram(d: SpectralData, N: Optional[int] = None) -> np.ndarray:
    """Gram matrix of chi_{nk} = v_{nk} cos(rho_{nk} x) for the first N bands."""
    d = d if N is None else d.truncate(N)
    rho = d.rho.ravel()
    v = np.swapaxes(d.V, 1, 2).reshape(-1, d.m)
    D = cos_product_integral(np.pi, np.conj(rho)[:, None], rho[None, :])
    G = (np.conj(v) @ v.T) * D
    return 0.5 * (G + np.conj(G).T)


def riesz_lower_bound(d: SpectralData, N: Optional[int] = None) -> float:
    """sqrt of the smallest eigenvalue of the truncated Gram matrix."""
    lo = np.linalg.eigvalsh(riesz_gram(d, N))[0]
    return float(np.sqrt(max(lo, 0.0)))


@dataclass(frozen=True)
class StabilityReport:
    kappa_norm: float
    K_norm: float
    eps_hat: float
    xi: np.ndarray
    member: bool
    group_norms: Optional[np.ndarray] = None
    caveat: str = ("eps_hat is computed from a truncated Gram matrix and remainder norms "
                   "from the supplied bands only; both are surrogates for the infinite sequences")

    def to_json(self) -> dict:
        return {"kappa_norm": self.kappa_norm, "K_norm": self.K_norm, "eps_hat": self.eps_hat,
                "xi": [float(v) for v in self.xi], "member": self.member,
                "group_norms": None if self.group_norms is None else [float(v) for v in self.group_norms],
                "caveat": self.caveat}


def membership(d: SpectralData, Omega: float, eps: float, omega=None,
               first_band: str = "model") -> Tuple[bool, StabilityReport]:
    if Omega <= 0 or eps <= 0:
        raise ValidationError("Omega and eps must be positive")
    r = remainder_norms(d, omega, first_band)
    e = riesz_lower_bound(d)
    ok = r.kappa_norm <= Omega and r.K_norm <= Omega and e >= eps
    if r.group_norms is not None:
        ok = ok and bool(np.all(r.group_norms <= Omega))
    return ok, StabilityReport(r.kappa_norm, r.K_norm, e, xi_sequence(d), bool(ok), r.group_norms)


# ---------------------------------------------------------------------------
# partitions and distances


def _require_in_range(part: Partition, N: int, m: int):
    for g in part.groups:
        for p in g:
            if not (1 <= p.n <= N and 1 <= p.k <= m):
                raise ValidationError(f"index pair ({p.n}, {p.k}) outside the supplied data")


def _ordered_groups(part: Partition, A: SpectralData):
    def key(ig):
        g = ig[1]
        return (min(float(np.real(A.rho[p.n - 1, p.k - 1])) for p in g), g[0].as_tuple())
    return sorted(enumerate(part.groups), key=key)


def _group_terms(g: Group, A: SpectralData, B: SpectralData, diag: Optional[int]):
    ia = [(p.n - 1, p.k - 1) for p in g]
    ra = np.array([A.rho[i] for i in ia])
    rb = np.array([B.rho[i] for i in ia])
    ba = sum(A.beta[i] for i in ia)
    bb = sum(B.beta[i] for i in ia)
    if diag is None:
        dbeta = float(opnorm(ba - bb))
    else:
        dbeta = float(abs(ba[diag, diag] - bb[diag, diag]))
    first = float(abs(ra[0] - rb[0]))
    spread = float(np.sum(np.abs(ra[1:] - ra[0])) + np.sum(np.abs(rb[1:] - rb[0])))
    return first, dbeta, spread


def _weights(ordered, weight):
    if weight == "ordinal":
        return np.arange(1, len(ordered) + 1, dtype=float)
    if weight == "band":
        return np.array([min(p.n for p in g) for _, g in ordered], dtype=float)
    raise ValidationError("weight must be 'ordinal' or 'band'")


def _l2_with_tail(w, vals, tail):
    Z2 = float(np.sum((w * vals) ** 2))
    if tail is None or len(vals) == 0:
        return float(np.sqrt(Z2))
    if tail != "inverse_square":
        raise ValidationError("tail must be None or 'inverse_square'")
    # continue the last term as c / s^2 and add sum_{s > S} (c / s)^2
    S = w[-1]
    c = S * S * vals[-1]
    return float(np.sqrt(Z2 + c * c * float(polygamma(1, S + 1))))


def zeta_Z(part: Partition, A: SpectralData, B: SpectralData, weight: str = "ordinal",
           tail: Optional[str] = None, diag: Optional[int] = None):
    """(zeta_s in group order, Z = ||{s zeta_s}||_l2).

    ``weight="ordinal"`` uses the group position s; ``"band"`` uses the band
    index of the group's first pair. ``tail="inverse_square"`` adds the l2
    tail of a sequence continuing as zeta_s ~ c / s^2. ``diag=j`` replaces the
    operator norm of the beta difference by its (j, j) entry (per-edge Z_j).
    """
    if A.m != B.m:
        raise ValidationError("spectral data must have the same m")
    _require_in_range(part, min(A.N, B.N), A.m)
    ordered = _ordered_groups(part, A)
    zeta = np.array([sum(_group_terms(g, A, B, diag)) for _, g in ordered])
    w = _weights(ordered, weight)
    return zeta, _l2_with_tail(w, zeta, tail)


def theta_Theta(part: Partition, A: SpectralData, B: SpectralData, weight: str = "ordinal",
                tail: Optional[str] = None):
    """(theta_s, Theta) for a refined partition; unrefined groups count as one subgroup."""
    _require_in_range(part, min(A.N, B.N), A.m)
    ordered = _ordered_groups(part, A)
    w = _weights(ordered, weight)
    theta = np.empty(len(ordered))
    for pos, (i, g) in enumerate(ordered):
        subs = part.sub[i] if part.sub is not None else (g,)
        s = w[pos]
        acc = 0.0
        for h in subs:
            first, dbeta, spread = _group_terms(h, A, B, None)
            acc += first + spread + dbeta / s
        acc += _group_terms(g, A, B, None)[1]
        theta[pos] = acc
    return theta, _l2_with_tail(w, theta, tail)


def auto_partition(A: SpectralData, B: SpectralData, gap: float) -> Partition:
    """Greedy grouping along the index order.

    A new group starts when consecutive rho values (in A or in B) differ by
    more than gap / n, n the band of the current pair. Exact ties stay together.
    """
    if gap <= 0:
        raise ValidationError("gap must be positive")
    N, m = min(A.N, B.N), A.m
    pairs = [IndexPair(n, k) for n in range(1, N + 1) for k in range(1, m + 1)]
    groups: List[List[IndexPair]] = [[pairs[0]]]
    for prev, cur in zip(pairs, pairs[1:]):
        i0, i1 = (prev.n - 1, prev.k - 1), (cur.n - 1, cur.k - 1)
        da = abs(A.rho[i1] - A.rho[i0])
        db = abs(B.rho[i1] - B.rho[i0])
        if max(da, db) > gap / cur.n and not (da == 0 and db == 0):
            groups.append([cur])
        else:
            groups[-1].append(cur)
    return Partition(tuple(tuple(g) for g in groups))


@dataclass(frozen=True)
class StabilityRatio:
    ratio: float
    numerator: float
    Z: float
    dQ: float
    dh: float
    dH: float

    def to_json(self):
        return dict(self.__dict__)


def coefficient_distance(a: Coefficients, b: Coefficients):
    dQ = matrix_l2_norm(a.Q - b.Q, a.dx)
    dh = float(opnorm(a.h - b.h))
    dH = float(opnorm(a.H - b.H))
    return dQ, dh, dH


def stability_ratio(probA: Coefficients, probB: Coefficients, part=None, N: int = 25,
                    gap: float = 0.5, threads=None, weight: str = "ordinal") -> StabilityRatio:
    """(||Q_A - Q_B||_L2 + ||h_A - h_B|| + ||H_A - H_B||) / Z from two forward solves."""
    from .direct import forward
    dA = forward(probA, N, threads)
    dB = forward(probB, N, threads)
    if part is None or part == "auto":
        part = auto_partition(dA, dB, gap)
    _, Z = zeta_Z(part, dA, dB, weight=weight)
    dQ, dh, dH = coefficient_distance(probA, probB)
    num = dQ + dh + dH
    if Z < 1e-14:
        if num > 1e-10:
            raise DegenerateZ(f"Z = {Z:.3e} while the coefficient difference is {num:.3e}")
        return StabilityRatio(0.0, num, Z, dQ, dh, dH)
    return StabilityRatio(num / Z, num, Z, dQ, dh, dH)


# ---------------------------------------------------------------------------
# synthetic families


def splitting_family(delta: float, N: int, which: int) -> SpectralData:
    """m = 2 data rho_{n1,2} = n - 1 -/+ delta/n^2 with two different vector bases.

    ``which=1`` uses sqrt(2/pi) e_1, e_2; ``which=2`` uses (1, +-1)/sqrt(pi).
    The first value rho_{11} = -delta is kept as given (not re-derived from lambda).
    """
    n = np.arange(1, N + 1, dtype=float)
    rho = np.stack([n - 1 - delta / n ** 2, n - 1 + delta / n ** 2], axis=1)
    if which == 1:
        B = np.sqrt(2.0 / np.pi) * np.eye(2)
    elif which == 2:
        B = np.sqrt(1.0 / np.pi) * np.array([[1.0, 1.0], [1.0, -1.0]])
    else:
        raise ValidationError("which must be 1 or 2")
    V = np.repeat(B[None].astype(complex), N, axis=0)
    return SpectralData.from_rho(rho, V)


def ex_fail_data(N: int, lam11: float = 0.0, lam12: float = 0.25) -> SpectralData:
    """m = 2 data with both first-band vectors along e_1; the rest equals the zero problem."""
    if lam11 == lam12:
        raise ValidationError("the first two eigenvalues must differ")
    lam = np.array([[min(lam11, lam12), max(lam11, lam12)]] + [[(n - 1) ** 2] * 2 for n in range(2, N + 1)], float)
    V = [np.sqrt(1.0 / np.pi) * np.array([[1.0, 1.0], [0.0, 0.0]])]
    V += [np.sqrt(2.0 / np.pi) * np.eye(2)] * (N - 1)
    return SpectralData(lam, np.array(V, dtype=complex))


def duplicate_rho_data(N: int) -> SpectralData:
    """Scalar data with lambda_1 = lambda_2 (violates eigenvalue separation)."""
    lam = np.array([(n - 1) ** 2 for n in range(1, N + 1)], float)
    lam[1] = lam[0]
    V = np.full(N, np.sqrt(2.0 / np.pi))
    V[0] = np.sqrt(1.0 / np.pi)
    return SpectralData(lam[:, None], V[:, None, None].astype(complex))
