"""Compiled inner loops: Riccati backward pass, Dubins rollouts, multilinear lookups."""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _cholesky(M, L):
    n = M.shape[0]
    for i in range(n):
        for j in range(n):
            L[i, j] = 0.0
    for j in range(n):
        s = M[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not s > 0.0:
            return False
        L[j, j] = math.sqrt(s)
        for i in range(j + 1, n):
            s = M[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
    return True


@njit(cache=True)
def _chol_solve(L, b, out):
    n = L.shape[0]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * out[k]
        out[i] = s / L[i, i]
    for i in range(n - 1, -1, -1):
        s = out[i]
        for k in range(i + 1, n):
            s -= L[k, i] * out[k]
        out[i] = s / L[i, i]


@njit(cache=True)
def _qp_obj(H, g, x):
    m = len(x)
    f = 0.0
    for i in range(m):
        f += g[i] * x[i]
        for j in range(m):
            f += 0.5 * x[i] * H[i, j] * x[j]
    return f


@njit(cache=True)
def box_qp(H, g, lo, hi, x, free):
    """Projected-Newton solve of min 0.5 x'Hx + g'x on [lo, hi]; False if H is not PD."""
    m = len(g)
    L = np.empty((m, m))
    if not _cholesky(H, L):
        return False
    neg = -g
    _chol_solve(L, neg, x)
    inside = True
    for i in range(m):
        if x[i] < lo[i] or x[i] > hi[i]:
            inside = False
    for i in range(m):
        free[i] = True
    if inside:
        return True
    for i in range(m):
        x[i] = min(max(x[i], lo[i]), hi[i])
    grad = np.empty(m)
    target = np.empty(m)
    trial = np.empty(m)
    for _ in range(50):
        for i in range(m):
            s = g[i]
            for j in range(m):
                s += H[i, j] * x[j]
            grad[i] = s
        nf = 0
        for i in range(m):
            free[i] = not ((x[i] <= lo[i] and grad[i] > 0) or (x[i] >= hi[i] and grad[i] < 0))
            if free[i]:
                nf += 1
        if nf == 0:
            break
        idx = np.empty(nf, dtype=np.int64)
        c = 0
        for i in range(m):
            if free[i]:
                idx[c] = i
                c += 1
        Hf = np.empty((nf, nf))
        rhs = np.empty(nf)
        for a in range(nf):
            s = g[idx[a]]
            for j in range(m):
                if not free[j]:
                    s += H[idx[a], j] * x[j]
            rhs[a] = -s
            for b in range(nf):
                Hf[a, b] = H[idx[a], idx[b]]
        Lf = np.empty((nf, nf))
        if not _cholesky(Hf, Lf):
            return False
        sol = np.empty(nf)
        _chol_solve(Lf, rhs, sol)
        for i in range(m):
            target[i] = x[i]
        for a in range(nf):
            target[idx[a]] = sol[a]
        f0 = _qp_obj(H, g, x)
        moved = False
        alpha = 1.0
        for _ls in range(10):
            for i in range(m):
                trial[i] = min(max(x[i] + alpha * (target[i] - x[i]), lo[i]), hi[i])
            if _qp_obj(H, g, trial) <= f0 + 1e-14 * abs(f0):
                dmax = 0.0
                for i in range(m):
                    dmax = max(dmax, abs(trial[i] - x[i]))
                    x[i] = trial[i]
                moved = dmax > 1e-13
                break
            alpha *= 0.5
        if not moved:
            break
    for i in range(m):
        s = g[i]
        for j in range(m):
            s += H[i, j] * x[j]
        free[i] = not ((x[i] <= lo[i] and s >= 0) or (x[i] >= hi[i] and s <= 0))
    return True


@njit(cache=True)
def backward_pass(A, B, Lx, Lu, Lxx, Luu, Lux, U, lo, hi, reg, kff, K):
    """Box-constrained Riccati sweep. Fills kff/K; returns (ok, d1, d2) for the expected change."""
    h, m = U.shape
    n = A.shape[1]
    Vx = Lx[h].copy()
    Vxx = Lxx[h].copy()
    d1 = 0.0
    d2 = 0.0
    du = np.empty(m)
    free = np.empty(m, dtype=np.bool_)
    for k in range(h - 1, -1, -1):
        Ak = A[k]
        Bk = B[k]
        Qx = Lx[k] + Ak.T @ Vx
        Qu = Lu[k] + Bk.T @ Vx
        VA = Vxx @ Ak
        Qxx = Lxx[k] + Ak.T @ VA
        Quu = Luu[k] + Bk.T @ (Vxx @ Bk)
        Qux = Lux[k] + Bk.T @ VA
        Qreg = Quu.copy()
        for i in range(m):
            Qreg[i, i] += reg
        if not box_qp(Qreg, Qu, lo - U[k], hi - U[k], du, free):
            return False, 0.0, 0.0
        nf = 0
        for i in range(m):
            if free[i]:
                nf += 1
        Kk = np.zeros((m, n))
        if nf > 0:
            idx = np.empty(nf, dtype=np.int64)
            c = 0
            for i in range(m):
                if free[i]:
                    idx[c] = i
                    c += 1
            Hf = np.empty((nf, nf))
            for a in range(nf):
                for b in range(nf):
                    Hf[a, b] = Qreg[idx[a], idx[b]]
            Lf = np.empty((nf, nf))
            if not _cholesky(Hf, Lf):
                return False, 0.0, 0.0
            col = np.empty(nf)
            sol = np.empty(nf)
            for j in range(n):
                for a in range(nf):
                    col[a] = -Qux[idx[a], j]
                _chol_solve(Lf, col, sol)
                for a in range(nf):
                    Kk[idx[a], j] = sol[a]
        for i in range(m):
            kff[k, i] = du[i]
        K[k] = Kk
        Quu_du = Quu @ du
        Vx = Qx + Kk.T @ Quu_du + Kk.T @ Qu + Qux.T @ du
        Vxx = Qxx + Kk.T @ Quu @ Kk + Kk.T @ Qux + Qux.T @ Kk
        Vxx = 0.5 * (Vxx + Vxx.T)
        d1 += du @ Qu
        d2 += 0.5 * (du @ Quu_du)
    return True, d1, d2


@njit(cache=True)
def adjoint_gradient(A, B, Lx, Lu):
    h = A.shape[0]
    g = np.empty_like(Lu)
    p = Lx[h].copy()
    for k in range(h - 1, -1, -1):
        g[k] = Lu[k] + B[k].T @ p
        p = Lx[k] + A[k].T @ p
    return g


# ---------------------------------------------------------------- Dubins 4D

@njit(cache=True)
def _dubins_flow(x0, x1, x2, x3, u0, u1):
    return x3 * math.cos(x2), x3 * math.sin(x2), u0, u1


@njit(cache=True)
def _dubins_finish(x, lo, hi):
    period = hi[2] - lo[2]
    w = (x[2] - lo[2]) % period + lo[2]
    if w >= hi[2]:
        w = lo[2]
    x[2] = w
    x[3] = min(max(x[3], lo[3]), hi[3])


@njit(cache=True)
def dubins_step(x, u, dt, lo, hi, out):
    h2 = 0.5 * dt
    a0, a1, a2, a3 = _dubins_flow(x[0], x[1], x[2], x[3], u[0], u[1])
    b0, b1, b2, b3 = _dubins_flow(x[0] + h2 * a0, x[1] + h2 * a1, x[2] + h2 * a2, x[3] + h2 * a3, u[0], u[1])
    c0, c1, c2, c3 = _dubins_flow(x[0] + h2 * b0, x[1] + h2 * b1, x[2] + h2 * b2, x[3] + h2 * b3, u[0], u[1])
    d0, d1, d2, d3 = _dubins_flow(x[0] + dt * c0, x[1] + dt * c1, x[2] + dt * c2, x[3] + dt * c3, u[0], u[1])
    s = dt / 6.0
    out[0] = x[0] + s * (a0 + 2.0 * b0 + 2.0 * c0 + d0)
    out[1] = x[1] + s * (a1 + 2.0 * b1 + 2.0 * c1 + d1)
    out[2] = x[2] + s * (a2 + 2.0 * b2 + 2.0 * c2 + d2)
    out[3] = x[3] + s * (a3 + 2.0 * b3 + 2.0 * c3 + d3)
    _dubins_finish(out, lo, hi)


@njit(cache=True)
def dubins_rollout(x0, U, dt, lo, hi):
    h = U.shape[0]
    X = np.empty((h + 1, 4))
    X[0] = x0
    for k in range(h):
        dubins_step(X[k], U[k], dt, lo, hi, X[k + 1])
    return X


@njit(cache=True)
def dubins_forward(X, U, kff, K, alpha, ulo, uhi, dt, lo, hi):
    """Closed-loop rollout u = clip(U + alpha kff + K (x - X)) with heading differences wrapped."""
    h, m = U.shape
    Xn = np.empty_like(X)
    Un = np.empty_like(U)
    Xn[0] = X[0]
    dx = np.empty(4)
    period = hi[2] - lo[2]
    for k in range(h):
        for i in range(4):
            dx[i] = Xn[k, i] - X[k, i]
        dx[2] = (dx[2] + 0.5 * period) % period - 0.5 * period
        for j in range(m):
            v = U[k, j] + alpha * kff[k, j]
            for i in range(4):
                v += K[k, j, i] * dx[i]
            Un[k, j] = min(max(v, ulo[j]), uhi[j])
        dubins_step(Xn[k], Un[k], dt, lo, hi, Xn[k + 1])
    return Xn, Un


@njit(cache=True)
def dubins_jacobians(X, U, dt):
    """Exact Jacobians of the (unclamped) RK4 map, batched over rows of X/U."""
    N = U.shape[0]
    A = np.empty((N, 4, 4))
    B = np.empty((N, 4, 2))
    h2 = 0.5 * dt
    s = dt / 6.0
    for r in range(N):
        th, v = X[r, 2], X[r, 3]
        u0, u1 = U[r, 0], U[r, 1]
        # stage states for heading/speed are affine in u, independent of x,y
        th2, v2 = th + h2 * u0, v + h2 * u1
        th4, v4 = th + dt * u0, v + dt * u1
        ths = (th, th2, th2, th4)
        vs = (v, v2, v2, v4)
        taus = (0.0, h2, h2, dt)
        wts = (1.0, 2.0, 2.0, 1.0)
        a02 = 0.0
        a03 = 0.0
        a12 = 0.0
        a13 = 0.0
        b00 = 0.0
        b01 = 0.0
        b10 = 0.0
        b11 = 0.0
        for st in range(4):
            c, sn = math.cos(ths[st]), math.sin(ths[st])
            vv = vs[st]
            w = wts[st] * s
            t = taus[st]
            # k_x = v_s cos(th_s): d/dth = -v_s sin, d/dv = cos; th_s = th + t u0, v_s = v + t u1
            a02 += w * (-vv * sn)
            a03 += w * c
            a12 += w * (vv * c)
            a13 += w * sn
            b00 += w * (-vv * sn * t)
            b01 += w * (c * t)
            b10 += w * (vv * c * t)
            b11 += w * (sn * t)
        A[r, 0, 0] = 1.0
        A[r, 0, 1] = 0.0
        A[r, 0, 2] = a02
        A[r, 0, 3] = a03
        A[r, 1, 0] = 0.0
        A[r, 1, 1] = 1.0
        A[r, 1, 2] = a12
        A[r, 1, 3] = a13
        A[r, 2, 0] = 0.0
        A[r, 2, 1] = 0.0
        A[r, 2, 2] = 1.0
        A[r, 2, 3] = 0.0
        A[r, 3, 0] = 0.0
        A[r, 3, 1] = 0.0
        A[r, 3, 2] = 0.0
        A[r, 3, 3] = 1.0
        B[r, 0, 0] = b00
        B[r, 0, 1] = b01
        B[r, 1, 0] = b10
        B[r, 1, 1] = b11
        B[r, 2, 0] = dt
        B[r, 2, 1] = 0.0
        B[r, 3, 0] = 0.0
        B[r, 3, 1] = dt
    return A, B


# ---------------------------------------------------------------- multilinear lookups

@njit(cache=True)
def _snap(s):
    # node coordinates rarely divide exactly; a few ulps off must still hit the node
    r = math.floor(s + 0.5)
    if abs(s - r) <= 8.0 * 2.220446049250313e-16 * max(1.0, abs(s)):
        return r
    return s


@njit(cache=True)
def multilinear(values_flat, shape, lo, dx, periodic, points, want_grad):
    """Value (and gradient) of the multilinear interpolant at each row of ``points``.

    Non-periodic coordinates are clamped into the box; a point on a cell face
    uses the lower-indexed cell.  Returns (values, gradients, clamped flags).
    """
    P, n = points.shape
    vals = np.empty(P)
    grads = np.zeros((P, n))
    clamped = np.zeros(P, dtype=np.bool_)
    strides = np.empty(n, dtype=np.int64)
    acc = 1
    for a in range(n - 1, -1, -1):
        strides[a] = acc
        acc *= shape[a]
    i0 = np.empty(n, dtype=np.int64)
    i1 = np.empty(n, dtype=np.int64)
    t = np.empty(n)
    ncorner = 1 << n
    corner = np.empty(ncorner, dtype=np.int64)
    for p in range(P):
        for a in range(n):
            x = points[p, a]
            cnt = shape[a]
            if periodic[a]:
                s = _snap((x - lo[a]) / dx[a])
                j = math.ceil(s) - 1.0
                t[a] = s - j
                jj = int(j) % cnt
                i0[a] = jj
                i1[a] = (jj + 1) % cnt
            else:
                hi_a = lo[a] + dx[a] * (cnt - 1)
                xc = min(max(x, lo[a]), hi_a)
                if xc != x:
                    clamped[p] = True
                s = _snap((xc - lo[a]) / dx[a])
                j = math.ceil(s) - 1.0
                j = min(max(j, 0.0), cnt - 2.0)
                t[a] = s - j
                i0[a] = int(j)
                i1[a] = int(j) + 1
        total = 0.0
        for c in range(ncorner):
            flat = 0
            w = 1.0
            for a in range(n):
                bit = (c >> (n - 1 - a)) & 1
                if bit:
                    flat += i1[a] * strides[a]
                    w *= t[a]
                else:
                    flat += i0[a] * strides[a]
                    w *= 1.0 - t[a]
            corner[c] = flat
            total += w * values_flat[flat]
        if want_grad:
            # weighted differences across each axis, so flat data give an exact zero
            for a in range(n):
                mask = 1 << (n - 1 - a)
                g = 0.0
                for c in range(ncorner):
                    if c & mask:
                        continue
                    wa = 1.0
                    for b in range(n):
                        if b != a:
                            wa *= t[b] if (c >> (n - 1 - b)) & 1 else 1.0 - t[b]
                    g += wa * (values_flat[corner[c | mask]] - values_flat[corner[c]])
                grads[p, a] = g / dx[a]
        vals[p] = total
    return vals, grads, clamped
