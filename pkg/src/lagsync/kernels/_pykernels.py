"""Pure numpy implementation of the batched model kernels.

Every function operates on a batch of ``p`` robots of the same model kind.
Shapes: ``a`` is (p, k) base parameters, ``grav`` is (p,) gravitational
acceleration (0.0 when gravity is switched off), joint arrays are (p, n).

Kind codes
----------
0 : planar two-link arm, a = (a1, a2, a3, a4)
1 : cart with double inverted pendulum, a = (A0, d1, d2, J1, d3, J2)
"""

import numpy as np

ARM2 = 0
CARTPEND3 = 1

NDOF = {ARM2: 2, CARTPEND3: 3}
NPARAM = {ARM2: 4, CARTPEND3: 6}


def _arm2_mcg(a, grav, q, qd):
    p = q.shape[0]
    c2 = np.cos(q[:, 1])
    s2 = np.sin(q[:, 1])
    a1, a2, a3, a4 = a[:, 0], a[:, 1], a[:, 2], a[:, 3]
    M = np.empty((p, 2, 2))
    M[:, 0, 0] = a1 + 2.0 * a3 * c2 + 2.0 * a4 * s2
    M[:, 0, 1] = a2 + a3 * c2 + a4 * s2
    M[:, 1, 0] = M[:, 0, 1]
    M[:, 1, 1] = a2
    h = a3 * s2 - a4 * c2
    C = np.empty((p, 2, 2))
    C[:, 0, 0] = -h * qd[:, 1]
    C[:, 0, 1] = -h * (qd[:, 0] + qd[:, 1])
    C[:, 1, 0] = h * qd[:, 0]
    C[:, 1, 1] = 0.0
    g = np.zeros((p, 2))
    return M, C, g


def _cartpend3_mcg(a, grav, q, qd):
    p = q.shape[0]
    A0, d1, d2, J1, d3, J2 = (a[:, i] for i in range(6))
    c1, s1 = np.cos(q[:, 1]), np.sin(q[:, 1])
    c2, s2 = np.cos(q[:, 2]), np.sin(q[:, 2])
    c12, s12 = np.cos(q[:, 1] - q[:, 2]), np.sin(q[:, 1] - q[:, 2])
    M = np.empty((p, 3, 3))
    M[:, 0, 0] = A0
    M[:, 0, 1] = M[:, 1, 0] = d1 * c1
    M[:, 0, 2] = M[:, 2, 0] = d2 * c2
    M[:, 1, 1] = J1
    M[:, 1, 2] = M[:, 2, 1] = d3 * c12
    M[:, 2, 2] = J2
    C = np.zeros((p, 3, 3))
    C[:, 0, 1] = -d1 * s1 * qd[:, 1]
    C[:, 0, 2] = -d2 * s2 * qd[:, 2]
    C[:, 1, 2] = d3 * s12 * qd[:, 2]
    C[:, 2, 1] = -d3 * s12 * qd[:, 1]
    g = np.zeros((p, 3))
    g[:, 1] = -d1 * grav * s1
    g[:, 2] = -d2 * grav * s2
    return M, C, g


_MCG = {ARM2: _arm2_mcg, CARTPEND3: _cartpend3_mcg}


def mcg(kind, a, grav, q, qd):
    """Return (M, C, g) for every robot in the batch."""
    return _MCG[kind](a, grav, q, qd)


def inverse_dynamics(kind, a, grav, q, qd, v, acc):
    """M(q) acc + C(q, qd) v + g(q), batched."""
    M, C, g = _MCG[kind](a, grav, q, qd)
    return (np.einsum("pij,pj->pi", M, acc) + np.einsum("pij,pj->pi", C, v)
            + g)


def forward_dynamics(kind, a, grav, q, qd, tau):
    """Solve M(q) qdd = tau - C(q, qd) qd - g(q) for qdd, batched."""
    M, C, g = _MCG[kind](a, grav, q, qd)
    rhs = tau - np.einsum("pij,pj->pi", C, qd) - g
    return np.linalg.solve(M, rhs[..., None])[..., 0]


def regressor(kind, grav, q, qd, v, acc):
    """Regressor Y with Y @ a == M acc + C v + g, shape (p, n, k)."""
    p = q.shape[0]
    if kind == ARM2:
        c2 = np.cos(q[:, 1])
        s2 = np.sin(q[:, 1])
        Y = np.zeros((p, 2, 4))
        w = qd[:, 1] * v[:, 0] + (qd[:, 0] + qd[:, 1]) * v[:, 1]
        Y[:, 0, 0] = acc[:, 0]
        Y[:, 0, 1] = acc[:, 1]
        Y[:, 0, 2] = c2 * (2.0 * acc[:, 0] + acc[:, 1]) - s2 * w
        Y[:, 0, 3] = s2 * (2.0 * acc[:, 0] + acc[:, 1]) + c2 * w
        Y[:, 1, 1] = acc[:, 0] + acc[:, 1]
        Y[:, 1, 2] = c2 * acc[:, 0] + s2 * qd[:, 0] * v[:, 0]
        Y[:, 1, 3] = s2 * acc[:, 0] - c2 * qd[:, 0] * v[:, 0]
        return Y
    if kind == CARTPEND3:
        c1, s1 = np.cos(q[:, 1]), np.sin(q[:, 1])
        c2, s2 = np.cos(q[:, 2]), np.sin(q[:, 2])
        c12, s12 = np.cos(q[:, 1] - q[:, 2]), np.sin(q[:, 1] - q[:, 2])
        Y = np.zeros((p, 3, 6))
        Y[:, 0, 0] = acc[:, 0]
        Y[:, 0, 1] = c1 * acc[:, 1] - s1 * qd[:, 1] * v[:, 1]
        Y[:, 0, 2] = c2 * acc[:, 2] - s2 * qd[:, 2] * v[:, 2]
        Y[:, 1, 1] = c1 * acc[:, 0] - grav * s1
        Y[:, 1, 3] = acc[:, 1]
        Y[:, 1, 4] = c12 * acc[:, 2] + s12 * qd[:, 2] * v[:, 2]
        Y[:, 2, 2] = c2 * acc[:, 0] - grav * s2
        Y[:, 2, 4] = c12 * acc[:, 1] - s12 * qd[:, 1] * v[:, 1]
        Y[:, 2, 5] = acc[:, 2]
        return Y
    raise ValueError(f"unknown model kind code {kind}")


FF_INVERSE = 0
FF_NONE = 1
FF_GRAVITY = 2


def closed_loop(kind, a, grav, q, qd, qdes, qdes_d, qdes_dd, lam, L, ff_mode, dist):
    """Fused right-hand side of ``p`` robots under ``tau = ff - L s``.

    ``lam`` is the diagonal of Lambda (n,), ``L`` the (p n, p n) modified
    Laplacian and ``dist`` an additive torque (p, n) or None. ``ff_mode``
    selects exact inverse dynamics, no feed-forward or gravity only.

    Returns
    -------
    acc, tau, s : arrays of shape (p, n)
        Joint accelerations, control torque (without ``dist``) and the
        composite variable.
    """
    p, n = q.shape
    qr_d = qdes_d - lam * (q - qdes)
    qr_dd = qdes_dd - lam * (qd - qdes_d)
    s = qd - qr_d
    if ff_mode == FF_INVERSE:
        ff = inverse_dynamics(kind, a, grav, q, qd, qr_d, qr_dd)
    elif ff_mode == FF_GRAVITY:
        ff = _MCG[kind](a, grav, q, qd)[2]
    else:
        ff = np.zeros((p, n))
    tau = ff - (L @ s.reshape(-1)).reshape(p, n)
    applied = tau if dist is None else tau + dist
    return forward_dynamics(kind, a, grav, q, qd, applied), tau, s
