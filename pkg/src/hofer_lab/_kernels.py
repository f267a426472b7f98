"""Compiled inner loops: cubic B-spline derivatives and particle advection.

Fields are represented by the coefficients of their interpolating cubic
B-spline, periodic in theta and extended by zero across the boundary circles.
The velocity is the exact symplectic gradient of that spline, so it is
divergence free; the only area error left is the time integrator's.

Every integrator optionally carries a tangent matrix per point (an ``(n, 4)``
array holding a row-major 2x2 matrix). It is advanced with the linearization
of the same Runge-Kutta stages, so it is the exact Jacobian of the discrete
map rather than a finite-difference estimate.
"""

import math

import numpy as np
from numba import njit
from scipy.ndimage import spline_filter1d

NO_TANGENT = np.zeros((0, 4))


def spline_coefficients(values: np.ndarray) -> np.ndarray:
    c = spline_filter1d(np.asarray(values, dtype=float), order=3, axis=1, mode="grid-wrap")
    c = spline_filter1d(c, order=3, axis=0, mode="grid-constant")
    # pad: one column before / two after (periodic), three zero rows each side
    c = np.concatenate([c[:, -1:], c, c[:, :2]], axis=1)
    c = np.pad(c, ((3, 3), (0, 0)))
    return np.ascontiguousarray(c)


def periodic_coefficients(samples: np.ndarray) -> np.ndarray:
    """Padded 1D spline coefficients of periodic cell-centre samples."""
    c = spline_filter1d(np.asarray(samples, dtype=float), order=3, mode="grid-wrap")
    return np.ascontiguousarray(np.concatenate([c[-1:], c, c[:2]]))


def clamped_coefficients(samples: np.ndarray) -> np.ndarray:
    """Padded 1D spline coefficients of cell-centre samples on (0, 1), zero outside."""
    c = spline_filter1d(np.asarray(samples, dtype=float), order=3, mode="grid-constant")
    return np.ascontiguousarray(np.pad(c, 3))


# -- spline evaluation -----------------------------------------------------------

@njit(cache=True, inline="always")
def _bspline(t):
    s = 1.0 - t
    t2 = t * t
    t3 = t2 * t
    w0 = s * s * s / 6.0
    w1 = (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0
    w2 = (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0
    w3 = t3 / 6.0
    d0 = -0.5 * s * s
    d1 = 1.5 * t2 - 2.0 * t
    d2 = -1.5 * t2 + t + 0.5
    d3 = 0.5 * t2
    return w0, w1, w2, w3, d0, d1, d2, d3


@njit(cache=True, inline="always")
def _bspline2(t):
    return 1.0 - t, 3.0 * t - 2.0, 1.0 - 3.0 * t, t


@njit(cache=True, inline="always")
def _dot4(c, j, i, a0, a1, a2, a3):
    return c[j, i] * a0 + c[j, i + 1] * a1 + c[j, i + 2] * a2 + c[j, i + 3] * a3


@njit(cache=True, inline="always")
def _cell(c, theta, h):
    nh = c.shape[0] - 6
    nt = c.shape[1] - 3
    x = theta * nt - 0.5
    y = h * nh - 0.5
    fx = math.floor(x)
    fy = math.floor(y)
    ix = int(fx) % nt
    iy = int(fy)
    if iy < -2:
        iy = -2
    elif iy > nh:
        iy = nh
    return ix, iy + 2, x - fx, y - fy, nt, nh


@njit(cache=True, fastmath=True)
def grad(c, theta, h):
    """(dH/dtheta, dH/dh) of the padded spline ``c`` at one point."""
    ix, j, tx, ty, nt, nh = _cell(c, theta, h)
    wx0, wx1, wx2, wx3, dx0, dx1, dx2, dx3 = _bspline(tx)
    wy0, wy1, wy2, wy3, dy0, dy1, dy2, dy3 = _bspline(ty)
    gt = (_dot4(c, j, ix, dx0, dx1, dx2, dx3) * wy0 + _dot4(c, j + 1, ix, dx0, dx1, dx2, dx3) * wy1
          + _dot4(c, j + 2, ix, dx0, dx1, dx2, dx3) * wy2 + _dot4(c, j + 3, ix, dx0, dx1, dx2, dx3) * wy3)
    gh = (_dot4(c, j, ix, wx0, wx1, wx2, wx3) * dy0 + _dot4(c, j + 1, ix, wx0, wx1, wx2, wx3) * dy1
          + _dot4(c, j + 2, ix, wx0, wx1, wx2, wx3) * dy2 + _dot4(c, j + 3, ix, wx0, wx1, wx2, wx3) * dy3)
    return gt * nt, gh * nh


@njit(cache=True, fastmath=True)
def hess(c, theta, h):
    """Gradient and Hessian ``(H_t, H_h, H_tt, H_th, H_hh)`` of the spline at one point."""
    ix, j, tx, ty, nt, nh = _cell(c, theta, h)
    wx0, wx1, wx2, wx3, dx0, dx1, dx2, dx3 = _bspline(tx)
    wy0, wy1, wy2, wy3, dy0, dy1, dy2, dy3 = _bspline(ty)
    ex0, ex1, ex2, ex3 = _bspline2(tx)
    ey0, ey1, ey2, ey3 = _bspline2(ty)
    gt = gh = gtt = gth = ghh = 0.0
    for k in range(4):
        if k == 0:
            wy, dy, ey = wy0, dy0, ey0
        elif k == 1:
            wy, dy, ey = wy1, dy1, ey1
        elif k == 2:
            wy, dy, ey = wy2, dy2, ey2
        else:
            wy, dy, ey = wy3, dy3, ey3
        v = _dot4(c, j + k, ix, wx0, wx1, wx2, wx3)
        d = _dot4(c, j + k, ix, dx0, dx1, dx2, dx3)
        e = _dot4(c, j + k, ix, ex0, ex1, ex2, ex3)
        gt += d * wy
        gh += v * dy
        gtt += e * wy
        gth += d * dy
        ghh += v * ey
    return gt * nt, gh * nh, gtt * nt * nt, gth * nt * nh, ghh * nh * nh


@njit(cache=True, fastmath=True, inline="always")
def _eval1(c, i, t, n):
    w0, w1, w2, w3, d0, d1, d2, d3 = _bspline(t)
    e0, e1, e2, e3 = _bspline2(t)
    a, b, p, q = c[i], c[i + 1], c[i + 2], c[i + 3]
    return (a * w0 + b * w1 + p * w2 + q * w3,
            (a * d0 + b * d1 + p * d2 + q * d3) * n,
            (a * e0 + b * e1 + p * e2 + q * e3) * n * n)


@njit(cache=True, fastmath=True, inline="always")
def _periodic1(c, x):
    n = c.size - 3
    y = x * n - 0.5
    fy = math.floor(y)
    return _eval1(c, int(fy) % n, y - fy, n)


@njit(cache=True, fastmath=True, inline="always")
def _clamped1(c, x):
    n = c.size - 6
    y = x * n - 0.5
    fy = math.floor(y)
    i = int(fy)
    if i < -2:
        i = -2
    elif i > n:
        i = n
    return _eval1(c, i + 2, y - fy, n)


# -- velocities and their gradients ------------------------------------------------
# Both return (v_theta, v_h, Dv00, Dv01, Dv10, Dv11) for v = (s H_h, -s H_t).

@njit(cache=True, fastmath=True, inline="always")
def _spline_vel(c, x, y, scale):
    gt, gh, gtt, gth, ghh = hess(c, x, y)
    return scale * gh, -scale * gt, scale * gth, scale * ghh, -scale * gtt, -scale * gth


@njit(cache=True, fastmath=True, inline="always")
def _separable_vel(cf, cg, x, y, scale):
    f, df, ddf = _periodic1(cf, x)
    g, dg, ddg = _clamped1(cg, y)
    return (scale * f * dg, -scale * df * g,
            scale * df * dg, scale * f * ddg, -scale * ddf * g, -scale * df * dg)


@njit(cache=True, inline="always")
def _tangent(v, m, s, k):
    """Dv @ (m + s k) for 2x2 matrices stored as 4-tuples."""
    b0 = m[0] + s * k[0]
    b1 = m[1] + s * k[1]
    b2 = m[2] + s * k[2]
    b3 = m[3] + s * k[3]
    return (v[2] * b0 + v[3] * b2, v[2] * b1 + v[3] * b3,
            v[4] * b0 + v[5] * b2, v[4] * b1 + v[5] * b3)


@njit(cache=True, fastmath=True)
def velocity_many(c, theta, h, scale):
    n = theta.size
    vt = np.empty(n)
    vh = np.empty(n)
    for p in range(n):
        gt, gh = grad(c, theta[p], h[p])
        vt[p] = scale * gh
        vh[p] = -scale * gt
    return vt, vh


# -- integrators -------------------------------------------------------------------

@njit(cache=True, fastmath=True, inline="always")
def _combine(m, dt, K1, K2, K3, K4):
    s = dt / 6.0
    return (m[0] + s * (K1[0] + 2.0 * K2[0] + 2.0 * K3[0] + K4[0]),
            m[1] + s * (K1[1] + 2.0 * K2[1] + 2.0 * K3[1] + K4[1]),
            m[2] + s * (K1[2] + 2.0 * K2[2] + 2.0 * K3[2] + K4[2]),
            m[3] + s * (K1[3] + 2.0 * K2[3] + 2.0 * K3[3] + K4[3]))


@njit(cache=True, fastmath=True)
def _step_spline(c, x, y, scale, dt, m, tangent):
    v1 = _spline_vel(c, x, y, scale)
    v2 = _spline_vel(c, x + 0.5 * dt * v1[0], y + 0.5 * dt * v1[1], scale)
    v3 = _spline_vel(c, x + 0.5 * dt * v2[0], y + 0.5 * dt * v2[1], scale)
    v4 = _spline_vel(c, x + dt * v3[0], y + dt * v3[1], scale)
    dx = dt * (v1[0] + 2.0 * v2[0] + 2.0 * v3[0] + v4[0]) / 6.0
    dy = dt * (v1[1] + 2.0 * v2[1] + 2.0 * v3[1] + v4[1]) / 6.0
    if tangent:
        K1 = _tangent(v1, m, 0.0, m)
        K2 = _tangent(v2, m, 0.5 * dt, K1)
        K3 = _tangent(v3, m, 0.5 * dt, K2)
        K4 = _tangent(v4, m, dt, K3)
        m = _combine(m, dt, K1, K2, K3, K4)
    return dx, dy, m


@njit(cache=True, fastmath=True)
def _step_separable(cf, cg, x, y, scale, dt, m, tangent):
    v1 = _separable_vel(cf, cg, x, y, scale)
    v2 = _separable_vel(cf, cg, x + 0.5 * dt * v1[0], y + 0.5 * dt * v1[1], scale)
    v3 = _separable_vel(cf, cg, x + 0.5 * dt * v2[0], y + 0.5 * dt * v2[1], scale)
    v4 = _separable_vel(cf, cg, x + dt * v3[0], y + dt * v3[1], scale)
    dx = dt * (v1[0] + 2.0 * v2[0] + 2.0 * v3[0] + v4[0]) / 6.0
    dy = dt * (v1[1] + 2.0 * v2[1] + 2.0 * v3[1] + v4[1]) / 6.0
    if tangent:
        K1 = _tangent(v1, m, 0.0, m)
        K2 = _tangent(v2, m, 0.5 * dt, K1)
        K3 = _tangent(v3, m, 0.5 * dt, K2)
        K4 = _tangent(v4, m, dt, K3)
        m = _combine(m, dt, K1, K2, K3, K4)
    return dx, dy, m


@njit(cache=True, fastmath=True)
def _step_spline_plain(c, x, y, scale, dt):
    g1t, g1h = grad(c, x, y)
    k1x = scale * g1h
    k1y = -scale * g1t
    g2t, g2h = grad(c, x + 0.5 * dt * k1x, y + 0.5 * dt * k1y)
    k2x = scale * g2h
    k2y = -scale * g2t
    g3t, g3h = grad(c, x + 0.5 * dt * k2x, y + 0.5 * dt * k2y)
    k3x = scale * g3h
    k3y = -scale * g3t
    g4t, g4h = grad(c, x + dt * k3x, y + dt * k3y)
    k4x = scale * g4h
    k4y = -scale * g4t
    return (dt * (k1x + 2.0 * k2x + 2.0 * k3x + k4x) / 6.0,
            dt * (k1y + 2.0 * k2y + 2.0 * k3y + k4y) / 6.0)


@njit(cache=True, fastmath=True)
def rk4_advect(c, theta, h, scale, dt, nsteps, limit, M):
    """Advance points in place under the flow of ``scale * H``.

    Returns the largest per-step displacement measured in cells; stops early
    (leaving points partially advanced) once it exceeds ``limit``. ``M`` is
    the tangent array, or an empty ``(0, 4)`` array to skip tangents.
    """
    nh = c.shape[0] - 6
    nt = c.shape[1] - 3
    tangent = M.shape[0] > 0
    worst = 0.0
    for p in range(theta.size):
        x = theta[p]
        y = h[p]
        if tangent:
            m = (M[p, 0], M[p, 1], M[p, 2], M[p, 3])
        else:
            m = (1.0, 0.0, 0.0, 1.0)
        for _ in range(nsteps):
            if tangent:
                dx, dy, m = _step_spline(c, x, y, scale, dt, m, True)
            else:
                dx, dy = _step_spline_plain(c, x, y, scale, dt)
            d = max(abs(dx) * nt, abs(dy) * nh)
            if d > worst:
                worst = d
                if worst > limit:
                    theta[p] = x
                    h[p] = y
                    return worst
            x += dx
            y += dy
        theta[p] = x
        h[p] = y
        if tangent:
            M[p, 0] = m[0]
            M[p, 1] = m[1]
            M[p, 2] = m[2]
            M[p, 3] = m[3]
    return worst


@njit(cache=True, fastmath=True)
def rk4_separable(cf, cg, theta, h, scale, dt, nsteps, nt, nh, limit, resolve, M):
    """RK4 for H = scale * f(theta) * g(h) with 1D spline profiles f, g.

    Each step of length ``dt`` is split into ``1 + floor(G * dt * resolve)``
    equal substeps, G being the size of the velocity gradient at the start
    of the step. Displacements are measured in cells of an ``nt`` x ``nh``
    grid; see :func:`rk4_advect` for the early exit and ``M``.
    """
    tangent = M.shape[0] > 0
    worst = 0.0
    for p in range(theta.size):
        x = theta[p]
        y = h[p]
        if tangent:
            m = (M[p, 0], M[p, 1], M[p, 2], M[p, 3])
        else:
            m = (1.0, 0.0, 0.0, 1.0)
        for _ in range(nsteps):
            v = _separable_vel(cf, cg, x, y, scale)
            G = abs(v[2]) + abs(v[3]) + abs(v[4])
            k = 1 + int(G * dt * resolve)
            sub = dt / k
            for _s in range(k):
                dx, dy, m = _step_separable(cf, cg, x, y, scale, sub, m, tangent)
                d = max(abs(dx) * nt, abs(dy) * nh)
                if d > worst:
                    worst = d
                    if worst > limit:
                        theta[p] = x
                        h[p] = y
                        return worst
                x += dx
                y += dy
        theta[p] = x
        h[p] = y
        if tangent:
            M[p, 0] = m[0]
            M[p, 1] = m[1]
            M[p, 2] = m[2]
            M[p, 3] = m[3]
    return worst
