"""Independent reference solvers used only by the tests.

None of these share code with the package: eigenvalues come from
finite differences or Chebyshev collocation, kernels from mpmath.
"""
import mpmath as mp
import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla


def fd_neumann_eigs(q, count, n):
    """Lowest eigenvalues of -y'' + q y on (0, pi), y'(0) = y'(pi) = 0.

    Cell-centred second-order differences; the ghost-cell reflection makes
    the Neumann conditions exact for the scheme.
    """
    dx = np.pi / n
    x = (np.arange(n) + 0.5) * dx
    d = 2.0 / dx ** 2 + q(x)
    d[0] -= 1.0 / dx ** 2
    d[-1] -= 1.0 / dx ** 2
    e = -np.ones(n - 1) / dx ** 2
    return sla.eigh_tridiagonal(d, e, select="i", select_range=(0, count - 1), eigvals_only=True)


def fd_richardson(q, count, n=2000):
    """Richardson extrapolation of two cell-centred grids (error O(dx^4))."""
    a = fd_neumann_eigs(q, count, n)
    b = fd_neumann_eigs(q, count, 2 * n)
    return (4.0 * b - a) / 3.0


def _cheb(n):
    """Chebyshev points on [-1, 1] and the differentiation matrix (Trefethen)."""
    x = np.cos(np.pi * np.arange(n + 1) / n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n + 1)
    X = np.tile(x, (n + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(n + 1))
    D -= np.diag(D.sum(axis=1))
    return x, D


def cheb_matrix_eigs(Qfun, h, H, count, n=96):
    """Lowest eigenvalues of -Y'' + Q Y with Y'(0) - hY(0) = 0, Y'(pi) + HY(pi) = 0.

    Chebyshev collocation; the boundary rows are replaced by the Robin
    conditions, giving a generalized problem with infinite eigenvalues that
    are discarded.
    """
    m = np.atleast_2d(h).shape[0]
    t, D = _cheb(n)
    x = 0.5 * np.pi * (1.0 - t)          # x from 0 to pi
    D = -(2.0 / np.pi) * D
    D2 = D @ D
    I = np.eye(m)
    A = -np.kron(D2, I) + sp.block_diag([np.atleast_2d(Qfun(xi)) for xi in x]).toarray()
    B = np.eye((n + 1) * m)
    rows0 = slice(0, m)
    rowsN = slice(n * m, (n + 1) * m)
    A[rows0] = np.kron(D[0:1], I) - np.kron(np.eye(n + 1)[0:1], np.atleast_2d(h))
    A[rowsN] = np.kron(D[n:n + 1], I) + np.kron(np.eye(n + 1)[n:n + 1], np.atleast_2d(H))
    B[rows0] = 0.0
    B[rowsN] = 0.0
    w = sla.eig(A, B, right=False)
    w = w[np.isfinite(w)]
    w = np.sort(w.real[np.abs(w.imag) < 1e-6 * (1 + np.abs(w.real))])
    return w[:count]


def fd_star_graph_eigs(qs, count, n):
    """Star graph: edges [0, pi], y_j(0) = 0, matched at x = pi (continuity, sum y_j' = 0).

    Vertex-centred differences on each edge; the shared vertex gets a
    finite-volume row of width m*dx/2. Symmetrised by the square root of the
    lumped mass.
    """
    m = len(qs)
    dx = np.pi / n
    x = np.arange(1, n) * dx
    ni = n - 1
    size = m * ni + 1
    v = size - 1
    rows, cols, vals = [], [], []
    mass = np.ones(size)
    for j, q in enumerate(qs):
        off = j * ni
        qv = q(x)
        for i in range(ni):
            rows.append(off + i); cols.append(off + i); vals.append(2.0 / dx ** 2 + qv[i])
            if i > 0:
                rows.append(off + i); cols.append(off + i - 1); vals.append(-1.0 / dx ** 2)
            if i < ni - 1:
                rows.append(off + i); cols.append(off + i + 1); vals.append(-1.0 / dx ** 2)
        rows.append(off + ni - 1); cols.append(v); vals.append(-1.0 / dx ** 2)
        # vertex row: flux from edge j, scaled so the mass entry is m/2
        rows.append(v); cols.append(off + ni - 1); vals.append(-1.0 / dx ** 2)
    qpi = np.mean([q(np.array([np.pi]))[0] for q in qs])
    rows.append(v); cols.append(v); vals.append(m / dx ** 2 + 0.5 * m * qpi)
    mass[v] = 0.5 * m
    A = sp.csr_matrix((vals, (rows, cols)), shape=(size, size))
    s = sp.diags(1.0 / np.sqrt(mass))
    S = s @ A @ s
    w = spla.eigsh(S, k=count, sigma=-5.0, which="LM", return_eigenvectors=False)
    return np.sort(w)


def fd_graph_richardson(qs, count, n=1500):
    a = fd_star_graph_eigs(qs, count, n)
    b = fd_star_graph_eigs(qs, count, 2 * n)
    return (4.0 * b - a) / 3.0


# ---------------------------------------------------------------------------
# mpmath kernel references

mp.mp.dps = 40


def mp_cos_product(x, theta, rho):
    x, theta, rho = mp.mpf(x), mp.mpf(theta), mp.mpf(rho)
    return mp.quad(lambda t: mp.cos(theta * t) * mp.cos(rho * t), [0, x])


def mp_sin_product(x, theta, rho):
    """int_0^x sin(theta t) sin(rho t) / (theta rho) dt."""
    x, theta, rho = mp.mpf(x), mp.mpf(theta), mp.mpf(rho)
    f = lambda t: (mp.sin(theta * t) / theta if theta != 0 else t) * (mp.sin(rho * t) / rho if rho != 0 else t)
    return mp.quad(f, [0, x])


def mp_quotient(f, a, b):
    """(f(a) - f(b)) / (a - b) in high precision."""
    a, b = mp.mpf(a), mp.mpf(b)
    if a == b:
        return mp.diff(f, a)
    return (f(a) - f(b)) / (a - b)
