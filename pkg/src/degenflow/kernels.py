"""Compiled inner loops for ensemble simulation.

States are kept per coordinate as (mode, value): the value is ln x in
the lower log chart, x itself between the seams, -ln(1-x) in the upper
log chart.  All coefficient evaluations go through the factored
polynomial representation so boundary ratios are exact; a path can sink
hundreds of log-units deep without underflow.

Each path consumes its own seeded stream, so results are independent of
chunking or threading of the surrounding driver code.
"""

import numpy as np
from numba import njit

from . import poly as _poly
from .chart import cubic_coeffs

LOG_LOWER = 0
IDENTITY = 1
LOG_UPPER = 2

_Y_LO = np.log(0.25)
_Y_UP = -np.log(0.75)

_CUBIC = cubic_coeffs()


def path_seed(master, index):
    """Derived 31-bit seed for path ``index`` of stream ``master``."""
    mask = (1 << 64) - 1
    z = (int(master) * 0x9E3779B97F4A7C15 + int(index) + 1) & mask
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    z = z ^ (z >> 31)
    return int(z % 2147483647) + 1


def pack2d(model):
    """Coefficient stacks (C, CD) for the 2-d kernels.

    C[0], C[1] are the drift factors; C[2 + 2m + i] the noise factors
    q_{mi}.  CD[k, ax] holds the partial of C[k] along axis ax.
    """
    mats = [model.p[0], model.p[1]]
    for m in range(2):
        for i in range(2):
            mats.append(model.q[m][i])
    d1 = max(c.shape[0] for c in mats)
    d2 = max(c.shape[1] for c in mats)
    d1 = max(d1, 2)
    d2 = max(d2, 2)
    C = np.zeros((6, d1, d2))
    CD = np.zeros((6, 2, d1, d2))
    for k, c in enumerate(mats):
        C[k] = _poly.pad_to(c, (d1, d2))
        CD[k, 0] = _poly.pad_to(_poly.deriv2(c, 0), (d1, d2))
        CD[k, 1] = _poly.pad_to(_poly.deriv2(c, 1), (d1, d2))
    return C, CD


def pack1d(model):
    mats = [model.p] + list(model.qs)
    d = max(max(len(c) for c in mats), 2)
    P = np.zeros(d)
    P[: len(model.p)] = model.p
    Q = np.zeros((len(model.qs), d))
    DQ = np.zeros((len(model.qs), d))
    DP = np.zeros(d)
    dp = _poly.deriv1(model.p)
    DP[: len(dp)] = dp
    for m, q in enumerate(model.qs):
        Q[m, : len(q)] = q
        dq = _poly.deriv1(q)
        DQ[m, : len(dq)] = dq
    return P, DP, Q, DQ


@njit(cache=True, inline="always")
def _pv2(c, x1, x2):
    acc = 0.0
    for i in range(c.shape[0] - 1, -1, -1):
        row = 0.0
        for j in range(c.shape[1] - 1, -1, -1):
            row = row * x2 + c[i, j]
        acc = acc * x1 + row
    return acc


@njit(cache=True, inline="always")
def _pv1(c, x):
    acc = 0.0
    for i in range(c.shape[0] - 1, -1, -1):
        acc = acc * x + c[i]
    return acc


@njit(cache=True, inline="always")
def _xval(v, mode):
    if mode == LOG_LOWER:
        return np.exp(v)
    if mode == LOG_UPPER:
        return 1.0 - np.exp(-v)
    return v


@njit(cache=True, inline="always")
def _yval(v, mode, cubic):
    if mode == IDENTITY:
        return cubic[0] + v * (cubic[1] + v * (cubic[2] + v * cubic[3]))
    return v


@njit(cache=True)
def _coeffs2(C, CD, x1, x2, mode1, mode2, drift, noise):
    x = (x1, x2)
    w1 = x1 * (1.0 - x1)
    w2 = x2 * (1.0 - x2)
    w = (w1, w2)
    for i in range(2):
        o = 1 - i
        mi = mode1 if i == 0 else mode2
        pi = _pv2(C[i], x1, x2)
        acc_corr = 0.0
        acc_sq = 0.0
        if mi == IDENTITY:
            for m in range(2):
                qmi = _pv2(C[2 + 2 * m + i], x1, x2)
                s_mi = w[i] * qmi
                s_mo = w[o] * _pv2(C[2 + 2 * m + o], x1, x2)
                ds_ii = (1.0 - 2.0 * x[i]) * qmi + w[i] * _pv2(CD[2 + 2 * m + i, i], x1, x2)
                ds_io = w[i] * _pv2(CD[2 + 2 * m + i, o], x1, x2)
                acc_corr += 0.5 * (ds_ii * s_mi + ds_io * s_mo)
                noise[m, i] = s_mi
            drift[i] = w[i] * pi + acc_corr
        elif mi == LOG_LOWER:
            f = 1.0 - x[i]
            for m in range(2):
                qmi = _pv2(C[2 + 2 * m + i], x1, x2)
                sr = f * qmi
                s_mo = w[o] * _pv2(C[2 + 2 * m + o], x1, x2)
                ds_ii = (1.0 - 2.0 * x[i]) * qmi + w[i] * _pv2(CD[2 + 2 * m + i, i], x1, x2)
                dq_io = _pv2(CD[2 + 2 * m + i, o], x1, x2)
                acc_corr += 0.5 * (ds_ii * sr + f * dq_io * s_mo)
                acc_sq += sr * sr
                noise[m, i] = sr
            drift[i] = f * pi + acc_corr - 0.5 * acc_sq
        else:
            f = x[i]
            for m in range(2):
                qmi = _pv2(C[2 + 2 * m + i], x1, x2)
                ur = f * qmi
                s_mo = w[o] * _pv2(C[2 + 2 * m + o], x1, x2)
                ds_ii = (1.0 - 2.0 * x[i]) * qmi + w[i] * _pv2(CD[2 + 2 * m + i, i], x1, x2)
                dq_io = _pv2(CD[2 + 2 * m + i, o], x1, x2)
                acc_corr += 0.5 * (ds_ii * ur + f * dq_io * s_mo)
                acc_sq += ur * ur
                noise[m, i] = ur
            drift[i] = f * pi + acc_corr + 0.5 * acc_sq


@njit(cache=True)
def _advance2(C, CD, v, mode, dt, max_disp):
    """Advance one base step with internal halving; returns failures."""
    stack = np.empty(48)
    stack[0] = dt
    top = 1
    fails = 0
    drift = np.empty(2)
    noise = np.empty((2, 2))
    h_min = dt * 9.5367431640625e-07  # 2**-20
    while top > 0:
        top -= 1
        h = stack[top]
        x1 = _xval(v[0], mode[0])
        x2 = _xval(v[1], mode[1])
        _coeffs2(C, CD, x1, x2, mode[0], mode[1], drift, noise)
        z1 = np.random.normal()
        z2 = np.random.normal()
        sq = np.sqrt(h)
        ok = True
        dv0 = drift[0] * h + (noise[0, 0] * z1 + noise[1, 0] * z2) * sq
        dv1 = drift[1] * h + (noise[0, 1] * z1 + noise[1, 1] * z2) * sq
        lim0 = max_disp if mode[0] != IDENTITY else 0.25
        lim1 = max_disp if mode[1] != IDENTITY else 0.25
        if abs(dv0) > lim0 or abs(dv1) > lim1:
            ok = False
        if not ok:
            if h <= h_min:
                fails += 1  # forced acceptance, reported to the caller
            else:
                stack[top] = 0.5 * h
                stack[top + 1] = 0.5 * h
                top += 2
                continue
        # commit
        for i in range(2):
            dv = dv0 if i == 0 else dv1
            if mode[i] == IDENTITY:
                xn = v[i] + dv
                if xn < 1e-300:
                    xn = 1e-300
                if xn > 1.0 - 1e-16:
                    xn = 1.0 - 1e-16
                if xn < 0.25:
                    mode[i] = LOG_LOWER
                    v[i] = np.log(xn)
                elif xn > 0.75:
                    mode[i] = LOG_UPPER
                    v[i] = -np.log(1.0 - xn)
                else:
                    v[i] = xn
            elif mode[i] == LOG_LOWER:
                yn = v[i] + dv
                if yn > _Y_LO:
                    xn = np.exp(yn)
                    if xn > 0.75:
                        xn = 0.75
                    mode[i] = IDENTITY
                    v[i] = xn
                else:
                    v[i] = yn
            else:
                yn = v[i] + dv
                if yn < _Y_UP:
                    xn = 1.0 - np.exp(-yn)
                    if xn < 0.25:
                        xn = 0.25
                    mode[i] = IDENTITY
                    v[i] = xn
                else:
                    v[i] = yn
    return fails


@njit(cache=True)
def sim2d(C, CD, v0, mode0, dt, n_steps, record_every, seed, max_disp, cubic):
    """Single 2-d path; returns (x, y, mode, fails) record arrays."""
    np.random.seed(seed)
    v = v0.copy()
    mode = mode0.copy()
    n_rec = n_steps // record_every + 1
    rec_x = np.empty((n_rec, 2))
    rec_y = np.empty((n_rec, 2))
    rec_m = np.empty((n_rec, 2), dtype=np.int8)
    for i in range(2):
        rec_x[0, i] = _xval(v[i], mode[i])
        rec_y[0, i] = _yval(v[i], mode[i], cubic)
        rec_m[0, i] = mode[i]
    idx = 1
    fails = 0
    for n in range(n_steps):
        fails += _advance2(C, CD, v, mode, dt, max_disp)
        if (n + 1) % record_every == 0:
            for i in range(2):
                rec_x[idx, i] = _xval(v[i], mode[i])
                rec_y[idx, i] = _yval(v[i], mode[i], cubic)
                rec_m[idx, i] = mode[i]
            idx += 1
    return rec_x[:idx], rec_y[:idx], rec_m[:idx], fails


@njit(cache=True)
def _coeffs1(P, DP, Q, DQ, x, mode, noise):
    w = x * (1.0 - x)
    p = _pv1(P, x)
    nq = Q.shape[0]
    corr = 0.0
    sq = 0.0
    if mode == IDENTITY:
        for m in range(nq):
            qm = _pv1(Q[m], x)
            s = w * qm
            sp = (1.0 - 2.0 * x) * qm + w * _pv1(DQ[m], x)
            corr += 0.5 * sp * s
            noise[m] = s
        return w * p + corr
    if mode == LOG_LOWER:
        f = 1.0 - x
        for m in range(nq):
            qm = _pv1(Q[m], x)
            sr = f * qm
            sp = (1.0 - 2.0 * x) * qm + w * _pv1(DQ[m], x)
            corr += 0.5 * sp * sr
            sq += sr * sr
            noise[m] = sr
        return f * p + corr - 0.5 * sq
    f = x
    for m in range(nq):
        qm = _pv1(Q[m], x)
        ur = f * qm
        sp = (1.0 - 2.0 * x) * qm + w * _pv1(DQ[m], x)
        corr += 0.5 * sp * ur
        sq += ur * ur
        noise[m] = ur
    return f * p + corr + 0.5 * sq


@njit(cache=True)
def _advance1(P, DP, Q, DQ, state, dt, max_disp):
    stack = np.empty(48)
    stack[0] = dt
    top = 1
    fails = 0
    noise = np.empty(Q.shape[0])
    h_min = dt * 9.5367431640625e-07
    while top > 0:
        top -= 1
        h = stack[top]
        mode = int(state[0])
        v = state[1]
        x = _xval(v, mode)
        drift = _coeffs1(P, DP, Q, DQ, x, mode, noise)
        acc = 0.0
        for m in range(noise.shape[0]):
            acc += noise[m] * np.random.normal()
        dv = drift * h + acc * np.sqrt(h)
        lim = max_disp if mode != IDENTITY else 0.25
        if abs(dv) > lim:
            if h <= h_min:
                fails += 1
            else:
                stack[top] = 0.5 * h
                stack[top + 1] = 0.5 * h
                top += 2
                continue
        if mode == IDENTITY:
            xn = v + dv
            if xn < 1e-300:
                xn = 1e-300
            if xn > 1.0 - 1e-16:
                xn = 1.0 - 1e-16
            if xn < 0.25:
                state[0] = LOG_LOWER
                state[1] = np.log(xn)
            elif xn > 0.75:
                state[0] = LOG_UPPER
                state[1] = -np.log(1.0 - xn)
            else:
                state[1] = xn
        elif mode == LOG_LOWER:
            yn = v + dv
            if yn > _Y_LO:
                xn = np.exp(yn)
                if xn > 0.75:
                    xn = 0.75
                state[0] = IDENTITY
                state[1] = xn
            else:
                state[1] = yn
        else:
            yn = v + dv
            if yn < _Y_UP:
                xn = 1.0 - np.exp(-yn)
                if xn < 0.25:
                    xn = 0.25
                state[0] = IDENTITY
                state[1] = xn
            else:
                state[1] = yn
    return fails


@njit(cache=True)
def sim1d(P, DP, Q, DQ, x0, dt, n_steps, record_every, seed, max_disp, cubic):
    np.random.seed(seed)
    state = np.empty(2)
    if x0 < 0.25:
        state[0] = LOG_LOWER
        state[1] = np.log(x0)
    elif x0 > 0.75:
        state[0] = LOG_UPPER
        state[1] = -np.log(1.0 - x0)
    else:
        state[0] = IDENTITY
        state[1] = x0
    n_rec = n_steps // record_every + 1
    rec_x = np.empty(n_rec)
    rec_y = np.empty(n_rec)
    rec_x[0] = _xval(state[1], int(state[0]))
    rec_y[0] = _yval(state[1], int(state[0]), cubic)
    idx = 1
    fails = 0
    for n in range(n_steps):
        fails += _advance1(P, DP, Q, DQ, state, dt, max_disp)
        if (n + 1) % record_every == 0:
            rec_x[idx] = _xval(state[1], int(state[0]))
            rec_y[idx] = _yval(state[1], int(state[0]), cubic)
            idx += 1
    return rec_x[:idx], rec_y[:idx], fails


@njit(cache=True)
def integrate_poly_1d(P, DP, Q, DQ, G, x0, dt, n_steps, seed, max_disp, n_batches):
    """Path integral of a polynomial observable along a 1-d path.

    Returns (total integral, per-batch time averages) for batch-means
    error estimation.
    """
    np.random.seed(seed)
    state = np.empty(2)
    if x0 < 0.25:
        state[0] = LOG_LOWER
        state[1] = np.log(x0)
    elif x0 > 0.75:
        state[0] = LOG_UPPER
        state[1] = -np.log(1.0 - x0)
    else:
        state[0] = IDENTITY
        state[1] = x0
    batches = np.zeros(n_batches)
    per = max(n_steps // n_batches, 1)
    total = 0.0
    for n in range(n_steps):
        x = _xval(state[1], int(state[0]))
        g = _pv1(G, x)
        total += g * dt
        b = min(n // per, n_batches - 1)
        batches[b] += g * dt
        _advance1(P, DP, Q, DQ, state, dt, max_disp)
    return total, batches / (per * dt)


@njit(cache=True)
def euler_raw1d(B, S, x0, dt, n_steps, n_paths, seed):
    """Plain Euler scheme in x for raw polynomial Ito drift B and noise S.

    Used for weak-order checks against closed-form moments; paths are
    clamped to [0, 1].
    """
    np.random.seed(seed)
    out = np.empty(n_paths)
    for p in range(n_paths):
        x = x0
        for n in range(n_steps):
            b = _pv1(B, x)
            s = _pv1(S, x)
            x = x + b * dt + s * np.sqrt(dt) * np.random.normal()
            if x < 0.0:
                x = 0.0
            if x > 1.0:
                x = 1.0
        out[p] = x
    return out


# --------------------------------------------------------------------------
# hitting-time kernel with region classification
# --------------------------------------------------------------------------

IN_R = 1
IN_SIGMA_O = 2
IN_SIGMA_I = 4


@njit(cache=True, inline="always")
def _rot_y(y1, y2, k):
    a = y1
    b = y2
    for _ in range(k):
        t = a
        a = b
        b = -t
    return a, b


@njit(cache=True)
def classify_y(y1, y2, scen3, ln_rp, ln_r, vertex_in_R, edge_class, has_box,
               ln_a, ln_c, ln_iu, ln_iv, ln_eps_r, ln_edge_iv):
    """Bitmask membership of a point given in global chart coordinates."""
    mask = 0
    min_depth = 1e308
    for k in range(4):
        u, v = _rot_y(y1, y2, k)
        if v < min_depth:
            min_depth = v
        # target region R
        if not scen3:
            if vertex_in_R[k] == 1 and u <= ln_r and v <= ln_r:
                mask |= IN_R
            if edge_class[k] == 2 and u >= ln_r and u <= -ln_r and v <= ln_r:
                mask |= IN_R
        # outer Lyapunov set
        if has_box[k] == 1 and u < ln_a[k] and v < ln_c[k]:
            mask |= IN_SIGMA_O
            if u < ln_iu[k] and v < ln_iv[k]:
                mask |= IN_SIGMA_I
        if edge_class[k] == 1 and u > ln_eps_r and u < -ln_eps_r and v < ln_r:
            mask |= IN_SIGMA_O
            if u > ln_r and u < -ln_r and v < ln_edge_iv:
                mask |= IN_SIGMA_I
    if min_depth >= ln_rp:
        mask |= IN_R
    return mask


@njit(cache=True)
def hit2d(C, CD, v0, mode0, dt, seed, max_steps, max_disp, cubic, target_mask,
          invert, scen3, ln_rp, ln_r, vertex_in_R, edge_class, has_box,
          ln_a, ln_c, ln_iu, ln_iv, ln_eps_r, ln_edge_iv):
    """Run until the state enters any region of ``target_mask``.

    With ``invert`` the stop fires when the mask bits are all absent
    (first exit instead of first entry).  Returns (time, hit flag,
    forced-step count).
    """
    np.random.seed(seed)
    v = v0.copy()
    mode = mode0.copy()
    fails = 0
    for n in range(max_steps):
        y1 = _yval(v[0], mode[0], cubic)
        y2 = _yval(v[1], mode[1], cubic)
        m = classify_y(y1, y2, scen3, ln_rp, ln_r, vertex_in_R, edge_class,
                       has_box, ln_a, ln_c, ln_iu, ln_iv, ln_eps_r, ln_edge_iv)
        hit = (m & target_mask) != 0
        if invert:
            hit = not hit
        if hit:
            return n * dt, True, fails
        fails += _advance2(C, CD, v, mode, dt, max_disp)
    return max_steps * dt, False, fails
