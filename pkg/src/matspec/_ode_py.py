"""Pure numpy RK4 integrator, vectorised over the spectral parameter.

Same contract as the compiled ``_ode.rk4_batch``.
"""
import numpy as np


def rk4_batch(Qn, Qm, lam, Y0, Z0, h, stride=0, variational=False):
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    Y0 = np.asarray(Y0, dtype=complex)
    Z0 = np.asarray(Z0, dtype=complex)
    B = lam.shape[0]
    m, p = Y0.shape
    K = Qm.shape[0]
    L = lam[:, None, None]

    Y = np.broadcast_to(Y0, (B, m, p)).copy()
    Z = np.broadcast_to(Z0, (B, m, p)).copy()
    W = np.zeros_like(Y) if variational else None
    Wd = np.zeros_like(Y) if variational else None

    nodes = K // stride + 1 if stride > 0 else 1
    traj = np.zeros((B, nodes, 2, m, p), dtype=complex) if stride > 0 else None
    if stride > 0:
        traj[:, 0, 0], traj[:, 0, 1] = Y, Z

    def rhs(Qx, y, z, w, wd):
        dz = Qx @ y - L * y
        if not variational:
            return z, dz, None, None
        return z, dz, wd, Qx @ w - L * w - y

    half = 0.5 * h
    for step in range(K):
        q0, q1, q2 = Qn[step], Qm[step], Qn[step + 1]
        a = rhs(q0, Y, Z, W, Wd)
        s = [u + half * k if k is not None else None for u, k in zip((Y, Z, W, Wd), a)]
        b = rhs(q1, *s)
        s = [u + half * k if k is not None else None for u, k in zip((Y, Z, W, Wd), b)]
        c = rhs(q1, *s)
        s = [u + h * k if k is not None else None for u, k in zip((Y, Z, W, Wd), c)]
        d = rhs(q2, *s)
        Y = Y + (h / 6.0) * (a[0] + 2 * b[0] + 2 * c[0] + d[0])
        Z = Z + (h / 6.0) * (a[1] + 2 * b[1] + 2 * c[1] + d[1])
        if variational:
            W = W + (h / 6.0) * (a[2] + 2 * b[2] + 2 * c[2] + d[2])
            Wd = Wd + (h / 6.0) * (a[3] + 2 * b[3] + 2 * c[3] + d[3])
        if stride > 0 and (step + 1) % stride == 0:
            j = (step + 1) // stride
            traj[:, j, 0], traj[:, j, 1] = Y, Z
    return Y, Z, W, Wd, traj
