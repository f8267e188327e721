"""JIT-compiled inner kernels for the planner hot path.

The pure-numpy implementations in dynamics.py and solver.py stay the
reference versions (and the fallback when numba is unavailable); these
kernels reproduce them exactly and are cross-checked by the test suite.
"""

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap


_GIMBAL_MARGIN = 1e-3


@njit(cache=True)
def hkd_step(x, u, s, dt, mass, inertia, iinv, gravity):
    """Forward-Euler step of the hybrid kinodynamic model.

    Returns an all-NaN state when pitch is inside the gimbal-lock margin so
    the caller's divergence guard rejects the rollout.
    """
    out = np.empty(24)
    sr, cr = np.sin(x[0]), np.cos(x[0])
    sp, cp = np.sin(x[1]), np.cos(x[1])
    sy, cy = np.sin(x[2]), np.cos(x[2])
    if abs(cp) < _GIMBAL_MARGIN:
        out[:] = np.nan
        return out
    w0, w1, w2 = x[6], x[7], x[8]
    tp = sp / cp
    out[0] = x[0] + dt * (w0 + sr * tp * w1 + cr * tp * w2)
    out[1] = x[1] + dt * (cr * w1 - sr * w2)
    out[2] = x[2] + dt * ((sr * w1 + cr * w2) / cp)
    out[3] = x[3] + dt * x[9]
    out[4] = x[4] + dt * x[10]
    out[5] = x[5] + dt * x[11]

    mx = my = mz = 0.0
    fx = fy = fz = 0.0
    for j in range(4):
        base = 12 + 3 * j
        if s[j]:
            lx = u[3 * j]
            ly = u[3 * j + 1]
            lz = u[3 * j + 2]
            rx = x[base] - x[3]
            ry = x[base + 1] - x[4]
            rz = x[base + 2] - x[5]
            mx += ry * lz - rz * ly
            my += rz * lx - rx * lz
            mz += rx * ly - ry * lx
            fx += lx
            fy += ly
            fz += lz
            out[base] = x[base]
            out[base + 1] = x[base + 1]
            out[base + 2] = x[base + 2]
        else:
            out[base] = x[base] + dt * u[base]
            out[base + 1] = x[base + 1] + dt * u[base + 1]
            out[base + 2] = x[base + 2] + dt * u[base + 2]

    # body-frame moment: R^T (world moment), R world-from-body
    r00, r01, r02 = cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr
    r10, r11, r12 = sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr
    r20, r21, r22 = -sp, cp * sr, cp * cr
    mbx = r00 * mx + r10 * my + r20 * mz
    mby = r01 * mx + r11 * my + r21 * mz
    mbz = r02 * mx + r12 * my + r22 * mz

    iw0 = inertia[0, 0] * w0 + inertia[0, 1] * w1 + inertia[0, 2] * w2
    iw1 = inertia[1, 0] * w0 + inertia[1, 1] * w1 + inertia[1, 2] * w2
    iw2 = inertia[2, 0] * w0 + inertia[2, 1] * w1 + inertia[2, 2] * w2
    tx = mbx - (w1 * iw2 - w2 * iw1)
    ty = mby - (w2 * iw0 - w0 * iw2)
    tz = mbz - (w0 * iw1 - w1 * iw0)
    out[6] = w0 + dt * (iinv[0, 0] * tx + iinv[0, 1] * ty + iinv[0, 2] * tz)
    out[7] = w1 + dt * (iinv[1, 0] * tx + iinv[1, 1] * ty + iinv[1, 2] * tz)
    out[8] = w2 + dt * (iinv[2, 0] * tx + iinv[2, 1] * ty + iinv[2, 2] * tz)
    out[9] = x[9] + dt * (gravity[0] + fx / mass)
    out[10] = x[10] + dt * (gravity[1] + fy / mass)
    out[11] = x[11] + dt * (gravity[2] + fz / mass)
    return out


@njit(cache=True)
def hkd_linearize(xs, us, s, dt, inertia, iinv, mass):
    """Batched exact Jacobians of hkd_step over one constant-contact phase."""
    m = xs.shape[0]
    A = np.zeros((m, 24, 24))
    B = np.zeros((m, 24, 24))
    for i in range(m):
        x = xs[i]
        u = us[i]
        sr, cr = np.sin(x[0]), np.cos(x[0])
        sp, cp = np.sin(x[1]), np.cos(x[1])
        sy, cy = np.sin(x[2]), np.cos(x[2])
        cp2 = cp * cp
        tp = sp / cp
        w0, w1, w2 = x[6], x[7], x[8]

        # Euler-rate rows
        A[i, 0, 0] = 1.0 + dt * (cr * tp * w1 - sr * tp * w2)
        A[i, 0, 1] = dt * (sr * w1 + cr * w2) / cp2
        A[i, 1, 0] = dt * (-sr * w1 - cr * w2)
        A[i, 1, 1] = 1.0
        A[i, 2, 0] = dt * (cr * w1 - sr * w2) / cp
        A[i, 2, 1] = dt * (sr * w1 + cr * w2) * sp / cp2
        A[i, 2, 2] = 1.0
        A[i, 0, 6] = dt
        A[i, 0, 7] = dt * sr * tp
        A[i, 0, 8] = dt * cr * tp
        A[i, 1, 7] = dt * cr
        A[i, 1, 8] = -dt * sr
        A[i, 2, 7] = dt * sr / cp
        A[i, 2, 8] = dt * cr / cp

        # CoM position rows
        A[i, 3, 3] = A[i, 4, 4] = A[i, 5, 5] = 1.0
        A[i, 3, 9] = A[i, 4, 10] = A[i, 5, 11] = dt

        r00, r01, r02 = cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr
        r10, r11, r12 = sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr
        r20, r21, r22 = -sp, cp * sr, cp * cr

        # angular velocity rows: gyroscopic part d/domega
        iw0 = inertia[0, 0] * w0 + inertia[0, 1] * w1 + inertia[0, 2] * w2
        iw1 = inertia[1, 0] * w0 + inertia[1, 1] * w1 + inertia[1, 2] * w2
        iw2 = inertia[2, 0] * w0 + inertia[2, 1] * w1 + inertia[2, 2] * w2
        # M = skew(Iw) - skew(w) @ I
        m00 = -(w1 * inertia[2, 0] - w2 * inertia[1, 0])
        m01 = -iw2 - (w1 * inertia[2, 1] - w2 * inertia[1, 1])
        m02 = iw1 - (w1 * inertia[2, 2] - w2 * inertia[1, 2])
        m10 = iw2 - (w2 * inertia[0, 0] - w0 * inertia[2, 0])
        m11 = -(w2 * inertia[0, 1] - w0 * inertia[2, 1])
        m12 = -iw0 - (w2 * inertia[0, 2] - w0 * inertia[2, 2])
        m20 = -iw1 - (w0 * inertia[1, 0] - w1 * inertia[0, 0])
        m21 = iw0 - (w0 * inertia[1, 1] - w1 * inertia[0, 1])
        m22 = -(w0 * inertia[1, 2] - w1 * inertia[0, 2])
        for r in range(3):
            A[i, 6 + r, 6] = dt * (iinv[r, 0] * m00 + iinv[r, 1] * m10 + iinv[r, 2] * m20)
            A[i, 6 + r, 7] = dt * (iinv[r, 0] * m01 + iinv[r, 1] * m11 + iinv[r, 2] * m21)
            A[i, 6 + r, 8] = dt * (iinv[r, 0] * m02 + iinv[r, 1] * m12 + iinv[r, 2] * m22)
        A[i, 6, 6] += 1.0
        A[i, 7, 7] += 1.0
        A[i, 8, 8] += 1.0

        mx = my = mz = 0.0
        fx = fy = fz = 0.0
        for j in range(4):
            base = 12 + 3 * j
            if s[j]:
                lx = u[3 * j]
                ly = u[3 * j + 1]
                lz = u[3 * j + 2]
                rx = x[base] - x[3]
                ry = x[base + 1] - x[4]
                rz = x[base + 2] - x[5]
                mx += ry * lz - rz * ly
                my += rz * lx - rx * lz
                mz += rx * ly - ry * lx
                fx += lx
                fy += ly
                fz += lz
                # d omega_dot rows wrt foothold y_j: -iinv R^T skew(lam)
                # and wrt lambda_j: iinv R^T skew(r)
                for r in range(3):
                    q0 = iinv[r, 0] * r00 + iinv[r, 1] * r01 + iinv[r, 2] * r02
                    q1 = iinv[r, 0] * r10 + iinv[r, 1] * r11 + iinv[r, 2] * r12
                    q2 = iinv[r, 0] * r20 + iinv[r, 1] * r21 + iinv[r, 2] * r22
                    A[i, 6 + r, base] = -dt * (q1 * lz - q2 * ly)
                    A[i, 6 + r, base + 1] = -dt * (q2 * lx - q0 * lz)
                    A[i, 6 + r, base + 2] = -dt * (q0 * ly - q1 * lx)
                    B[i, 6 + r, 3 * j] = dt * (q1 * rz - q2 * ry)
                    B[i, 6 + r, 3 * j + 1] = dt * (q2 * rx - q0 * rz)
                    B[i, 6 + r, 3 * j + 2] = dt * (q0 * ry - q1 * rx)
                B[i, 9, 3 * j] = dt / mass
                B[i, 10, 3 * j + 1] = dt / mass
                B[i, 11, 3 * j + 2] = dt / mass
                A[i, base, base] = 1.0
                A[i, base + 1, base + 1] = 1.0
                A[i, base + 2, base + 2] = 1.0
            else:
                A[i, base, base] = 1.0
                A[i, base + 1, base + 1] = 1.0
                A[i, base + 2, base + 2] = 1.0
                B[i, base, base] = dt
                B[i, base + 1, base + 1] = dt
                B[i, base + 2, base + 2] = dt

        # d omega_dot wrt p: +iinv R^T skew(F_total)
        for r in range(3):
            q0 = iinv[r, 0] * r00 + iinv[r, 1] * r01 + iinv[r, 2] * r02
            q1 = iinv[r, 0] * r10 + iinv[r, 1] * r11 + iinv[r, 2] * r12
            q2 = iinv[r, 0] * r20 + iinv[r, 1] * r21 + iinv[r, 2] * r22
            A[i, 6 + r, 3] = dt * (q1 * fz - q2 * fy)
            A[i, 6 + r, 4] = dt * (q2 * fx - q0 * fz)
            A[i, 6 + r, 5] = dt * (q0 * fy - q1 * fx)

        # d omega_dot wrt theta: iinv @ (dR/dtheta_a)^T m_w
        mbx = r00 * mx + r10 * my + r20 * mz
        mby = r01 * mx + r11 * my + r21 * mz
        mbz = r02 * mx + r12 * my + r22 * mz
        # roll: (R EX)^T m = EX^T (R^T m) = (0, mbz, -mby)
        c0x, c0y, c0z = 0.0, mbz, -mby
        # pitch: Rx^T EY^T Rx (R^T m); v = Rx mb, w = EY^T v = (-v2, 0, v0), out = Rx^T w
        v0 = mbx
        v1 = cr * mby - sr * mbz
        v2 = sr * mby + cr * mbz
        t0, t1, t2 = -v2, 0.0, v0
        c1x = t0
        c1y = cr * t1 + sr * t2
        c1z = -sr * t1 + cr * t2
        # yaw: R^T (EZ^T m_w); EZ^T m_w = (my, -mx, 0)
        g0, g1, g2 = my, -mx, 0.0
        c2x = r00 * g0 + r10 * g1 + r20 * g2
        c2y = r01 * g0 + r11 * g1 + r21 * g2
        c2z = r02 * g0 + r12 * g1 + r22 * g2
        for r in range(3):
            A[i, 6 + r, 0] = dt * (iinv[r, 0] * c0x + iinv[r, 1] * c0y + iinv[r, 2] * c0z)
            A[i, 6 + r, 1] = dt * (iinv[r, 0] * c1x + iinv[r, 1] * c1y + iinv[r, 2] * c1z)
            A[i, 6 + r, 2] = dt * (iinv[r, 0] * c2x + iinv[r, 1] * c2y + iinv[r, 2] * c2z)

        A[i, 9, 9] = A[i, 10, 10] = A[i, 11, 11] = 1.0
    return A, B


@njit(cache=True)
def sweep_phase(As, Bs, lxs, lus, lxxs, luus, act, reg, vx, vxx, gains, ff):
    """Value recursion over one phase; writes gains/feedforward in place.

    Returns (dv1, dv2, fail_index); fail_index >= 0 flags a non-PD control
    Hessian at that step. vx and vxx are updated in place.
    """
    m = As.shape[0]
    n_x = As.shape[1]
    na = act.size
    dv1 = 0.0
    dv2 = 0.0
    ba = np.empty((n_x, na))
    quu = np.empty((na, na))
    chol = np.empty((na, na))
    rhs = np.empty((na, 1 + n_x))
    sol = np.empty((na, 1 + n_x))
    for i in range(m - 1, -1, -1):
        A = As[i]
        B = Bs[i]
        for c in range(na):
            for r in range(n_x):
                ba[r, c] = B[r, act[c]]
        qx = lxs[i] + A.T @ vx
        bav = ba.T @ vx
        qu = np.empty(na)
        for c in range(na):
            qu[c] = lus[i][act[c]] + bav[c]
        w = vxx @ A
        qxx = lxxs[i] + A.T @ w
        qux = ba.T @ w
        vb = vxx @ ba
        quu_full = ba.T @ vb
        luu = luus[i]
        for r in range(na):
            for c in range(na):
                quu[r, c] = quu_full[r, c] + luu[act[r], act[c]]
        for r in range(na):
            for c in range(r + 1, na):
                avg = 0.5 * (quu[r, c] + quu[c, r])
                quu[r, c] = avg
                quu[c, r] = avg
            quu[r, r] += reg

        # Cholesky with failure flag
        ok = True
        for r in range(na):
            ssum = quu[r, r]
            for k in range(r):
                ssum -= chol[r, k] * chol[r, k]
            if ssum <= 0.0 or not np.isfinite(ssum):
                ok = False
                break
            chol[r, r] = np.sqrt(ssum)
            inv = 1.0 / chol[r, r]
            for c in range(r + 1, na):
                t = quu[c, r]
                for k in range(r):
                    t -= chol[c, k] * chol[r, k]
                chol[c, r] = t * inv
        if not ok:
            return dv1, dv2, i

        for r in range(na):
            rhs[r, 0] = qu[r]
            for c in range(n_x):
                rhs[r, 1 + c] = qux[r, c]
        # forward substitution L y = rhs
        for r in range(na):
            for c in range(1 + n_x):
                t = rhs[r, c]
                for k in range(r):
                    t -= chol[r, k] * sol[k, c]
                sol[r, c] = t / chol[r, r]
        # back substitution L^T z = y
        for r in range(na - 1, -1, -1):
            for c in range(1 + n_x):
                t = sol[r, c]
                for k in range(r + 1, na):
                    t -= chol[k, r] * sol[k, c]
                sol[r, c] = t / chol[r, r]

        kff = np.empty(na)
        K = np.empty((na, n_x))
        for r in range(na):
            kff[r] = -sol[r, 0]
            for c in range(n_x):
                K[r, c] = -sol[r, 1 + c]
            ff[i, act[r]] = kff[r]
            for c in range(n_x):
                gains[i, act[r], c] = K[r, c]

        quu_k = quu @ kff
        for r in range(na):
            dv1 += kff[r] * qu[r]
            dv2 += kff[r] * quu_k[r]

        new_vx = qx + K.T @ quu_k + K.T @ qu + qux.T @ kff
        quu_K = quu @ K
        new_vxx = qxx + K.T @ quu_K + K.T @ qux + qux.T @ K
        for r in range(n_x):
            vx[r] = new_vx[r]
        for r in range(n_x):
            for c in range(r, n_x):
                avg = 0.5 * (new_vxx[r, c] + new_vxx[c, r])
                vxx[r, c] = avg
                vxx[c, r] = avg
    return dv1, dv2, -1
