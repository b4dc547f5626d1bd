"""Scalar numeric kernels: control laws, augmented dynamics, integrator.

Everything here operates on flat float64 arrays and a packed parameter vector
(see ``models.params``) so it can run under numba.  The augmented vector for a
model with ``n`` states is ``[state, costates, running-cost integral]`` of
length ``2 n + 1``.

Model ids: 0 quad, 1 ssc, 2 rwsc, 3 tvr.

Throttle switching at ``alpha = 1`` is resolved through a branch flag ``tie``
that holds the sign of the switching function on the current arc; an exact
zero keeps the previous branch, and the integrator flips the flag only at a
located crossing.
"""

import math

import numpy as np

from .accel import maybe_njit
from ._tableau import DP_A, DP_B, DP_C, DP_E, DP_P
from .models import (
    IP_ALPHA, IP_ARM, IP_BANG, IP_FORCE_U1, IP_FORCE_U2, IP_GIMBAL, IP_GRAV,
    IP_MASS, IP_RATE, IP_THRUST, IP_U1HI, IP_U1LO, IP_U2HI, IP_U2LO, IP_U2MODE,
    IP_VEX, IP_W1, IP_W2,
)

# Integrator status codes.
OK = 0
BAD_VALUE = 1       # non-finite dynamics: singular costate, non-positive mass
STEP_UNDERFLOW = 2  # required step below 1e-14 s
OUT_OF_ROOM = 3     # step or event capacity exhausted

MIN_STEP = 1e-14


@maybe_njit(cache=True)
def _clip(v, lo, hi):
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


@maybe_njit(cache=True)
def _bang(tie, lo, hi):
    # Minimizing a term s * u picks the bound opposite to the sign of s; the
    # branch flag carries that sign for the current arc, so stage evaluations
    # near a switch stay on one branch until the crossing is located.
    return hi if tie < 0.0 else lo


@maybe_njit(cache=True)
def sign_flag(s):
    """Branch flag matching the sign of a switching value (0 -> low branch)."""
    return -1.0 if s < 0.0 else 1.0


@maybe_njit(cache=True)
def switching_values(model_id, y, p):
    """Throttle (and, for quad, steering) switching-function values.

    Returns ``(s1, s2)``; ``s2`` is meaningful for the quad only.
    """
    if model_id == 0:
        sth = math.sin(y[4])
        cth = math.cos(y[4])
        s1 = y[7] * sth + y[8] * cth
        s2 = y[9]
        return s1, s2
    if model_id == 1:
        m = y[4]
        ln = math.sqrt(y[7] * y[7] + y[8] * y[8])
        s1 = p[IP_ALPHA] - ln * p[IP_VEX] / m - y[9]
        return s1, 0.0
    if model_id == 2:
        sth = math.sin(y[4])
        cth = math.cos(y[4])
        m = y[5]
        proj = y[8] * sth + y[9] * cth
        s1 = proj * p[IP_VEX] / m - y[11] + p[IP_ALPHA] * p[IP_W2]
        return s1, 0.0
    # tvr
    sth = math.sin(y[4])
    cth = math.cos(y[4])
    m = y[6]
    arm = p[IP_ARM]
    ax = y[9] - y[12] / arm * cth
    az = y[10] + y[12] / arm * sth
    db = -ax * sth - az * cth
    dt = -ax * cth + az * sth
    u2 = _clip(math.atan2(dt, db), -p[IP_GIMBAL], p[IP_GIMBAL])
    tx = math.sin(y[4] + u2)
    tz = math.cos(y[4] + u2)
    q = -(ax * tx + az * tz)
    s1 = p[IP_ALPHA] - y[13] - p[IP_VEX] / m * q
    return s1, 0.0


@maybe_njit(cache=True)
def saturation_margins(model_id, y, p, out):
    """Distance of each unclamped control argument from its bounds.

    Four slots: (u1 - lo, u1 - hi, u2 - lo, u2 - hi) using the raw (pre-clip)
    arguments of the continuous control law.  A sign change marks a clamp
    engaging or releasing, i.e. a derivative kink of the closed dynamics;
    the integrator places a node there.  Unused slots stay at 1.
    """
    alpha = p[IP_ALPHA]
    c1 = p[IP_THRUST]
    out[0] = 1.0
    out[1] = 1.0
    out[2] = 1.0
    out[3] = 1.0
    s1, s2 = switching_values(model_id, y, p)
    if not math.isfinite(s1):
        return
    if alpha < 1.0:
        raw1 = -s1 / (2.0 * p[IP_W1] * (1.0 - alpha) * c1)
        out[0] = raw1 - p[IP_U1LO]
        out[1] = raw1 - p[IP_U1HI]
    if model_id == 0:
        if alpha < 1.0:
            raw2 = -y[9] / (2.0 * p[IP_W2] * (1.0 - alpha) * p[IP_RATE])
            out[2] = raw2 - p[IP_U2LO]
            out[3] = raw2 - p[IP_U2HI]
    elif model_id == 2:
        raw2 = -y[10] / (2.0 * p[IP_RATE])
        out[2] = raw2 - p[IP_U2LO]
        out[3] = raw2 - p[IP_U2HI]
    elif model_id == 3:
        sth = math.sin(y[4])
        cth = math.cos(y[4])
        arm = p[IP_ARM]
        ax = y[9] - y[12] / arm * cth
        az = y[10] + y[12] / arm * sth
        db = -ax * sth - az * cth
        dt = -ax * cth + az * sth
        raw2 = math.atan2(dt, db)
        out[2] = raw2 - (-p[IP_GIMBAL])
        out[3] = raw2 - p[IP_GIMBAL]


@maybe_njit(cache=True)
def control_law(model_id, y, p, tie1, tie2):
    """Hamiltonian-minimizing controls ``(u1, u2)``.

    On bang arcs the branch flags pick the active bound; callers evaluating
    pointwise should derive them from the switching-function signs
    (``sign_flag``), while the integrator holds them fixed along an arc and
    flips them at located crossings.  Returns NaNs on a singular arc
    (vanishing steering costate) or non-positive mass; the integrator turns
    that into a failure status.
    """
    alpha = p[IP_ALPHA]
    bang = p[IP_BANG] != 0.0
    c1 = p[IP_THRUST]
    u1lo = p[IP_U1LO]
    u1hi = p[IP_U1HI]
    f1 = p[IP_FORCE_U1]
    u1_held = f1 == f1  # arc integration with the throttle branch fixed

    if model_id == 0:
        sth = math.sin(y[4])
        cth = math.cos(y[4])
        s1 = y[7] * sth + y[8] * cth
        if u1_held:
            u1 = f1
        elif bang:
            u1 = _bang(tie1, u1lo, u1hi)
        else:
            u1 = _clip(-s1 / (2.0 * p[IP_W1] * (1.0 - alpha) * c1), u1lo, u1hi)
        if p[IP_U2MODE] == 1.0:
            u2 = _clip(p[IP_FORCE_U2], p[IP_U2LO], p[IP_U2HI])
        elif p[IP_U2MODE] == 2.0:
            # Singular attitude arc: the torque that keeps the velocity
            # costate aligned with the thrust axis, so the attitude switching
            # function stays on its zero surface.
            if s1 == 0.0:
                return np.nan, np.nan
            u2 = _clip((y[6] * sth - y[5] * cth) / (p[IP_RATE] * s1),
                       p[IP_U2LO], p[IP_U2HI])
        elif bang:
            u2 = _bang(tie2, p[IP_U2LO], p[IP_U2HI])
        else:
            u2 = _clip(
                -y[9] / (2.0 * p[IP_W2] * (1.0 - alpha) * p[IP_RATE]),
                p[IP_U2LO], p[IP_U2HI],
            )
        return u1, u2

    if model_id == 1:
        m = y[4]
        if m <= 0.0:
            return np.nan, np.nan
        ln = math.sqrt(y[7] * y[7] + y[8] * y[8])
        if ln == 0.0:
            return np.nan, np.nan
        # Thrust opposes the velocity costate; u2 is the angle from vertical.
        u2 = math.atan2(-y[7], -y[8])
        s1 = alpha - ln * p[IP_VEX] / m - y[9]
        if u1_held:
            u1 = f1
        elif bang:
            u1 = _bang(tie1, u1lo, u1hi)
        else:
            u1 = _clip(-s1 / (2.0 * p[IP_W1] * (1.0 - alpha) * c1), u1lo, u1hi)
        return u1, u2

    if model_id == 2:
        m = y[5]
        if m <= 0.0:
            return np.nan, np.nan
        sth = math.sin(y[4])
        cth = math.cos(y[4])
        proj = y[8] * sth + y[9] * cth
        s1 = proj * p[IP_VEX] / m - y[11] + alpha * p[IP_W2]
        if u1_held:
            u1 = f1
        elif bang:
            u1 = _bang(tie1, u1lo, u1hi)
        else:
            u1 = _clip(-s1 / (2.0 * (1.0 - alpha) * p[IP_W1] * c1), u1lo, u1hi)
        # Wheel torque stays quadratically penalized at every alpha.
        u2 = _clip(-y[10] / (2.0 * p[IP_RATE]), p[IP_U2LO], p[IP_U2HI])
        return u1, u2

    # tvr
    m = y[6]
    if m <= 0.0:
        return np.nan, np.nan
    sth = math.sin(y[4])
    cth = math.cos(y[4])
    arm = p[IP_ARM]
    ax = y[9] - y[12] / arm * cth
    az = y[10] + y[12] / arm * sth
    if ax == 0.0 and az == 0.0:
        return np.nan, np.nan
    # Desired thrust direction -aux/|aux| resolved in body axes; the gimbal
    # angle is its bearing from the body axis, clamped to the gimbal range.
    db = -ax * sth - az * cth
    dt = -ax * cth + az * sth
    u2 = _clip(math.atan2(dt, db), -p[IP_GIMBAL], p[IP_GIMBAL])
    tx = math.sin(y[4] + u2)
    tz = math.cos(y[4] + u2)
    q = -(ax * tx + az * tz)
    s1 = alpha - y[13] - p[IP_VEX] / m * q
    if u1_held:
        u1 = f1
    elif bang:
        u1 = _bang(tie1, u1lo, u1hi)
    else:
        u1 = _clip(-s1 / (2.0 * p[IP_W1] * (1.0 - alpha) * c1), u1lo, u1hi)
    return u1, u2


@maybe_njit(cache=True)
def running_cost(model_id, p, u1, u2):
    """Cost integrand at the homotopy parameter packed in ``p``."""
    alpha = p[IP_ALPHA]
    c1 = p[IP_THRUST]
    if model_id == 0:
        quad = p[IP_W1] * c1 * c1 * u1 * u1 \
            + p[IP_W2] * p[IP_RATE] * p[IP_RATE] * u2 * u2
        return (1.0 - alpha) * quad + alpha
    if model_id == 1 or model_id == 3:
        return ((1.0 - alpha) * p[IP_W1] * c1 * c1 * u1 * u1
                + alpha * c1 * u1) / p[IP_VEX]
    # rwsc: wheel term outside the homotopy
    return ((1.0 - alpha) * p[IP_W1] * c1 * c1 * u1 * u1
            + alpha * p[IP_W2] * c1 * u1) / p[IP_VEX] \
        + p[IP_RATE] * p[IP_RATE] * u2 * u2


@maybe_njit(cache=True)
def aug_rhs(model_id, y, p, u1, u2, out):
    """Augmented derivative (state, costates, running cost) for given controls."""
    c1 = p[IP_THRUST]
    g = p[IP_GRAV]
    if model_id == 0:
        sth = math.sin(y[4])
        cth = math.cos(y[4])
        acc = c1 * u1 / p[IP_MASS]
        out[0] = y[2]
        out[1] = y[3]
        out[2] = acc * sth
        out[3] = acc * cth - g
        out[4] = p[IP_RATE] * u2
        out[5] = 0.0
        out[6] = 0.0
        out[7] = -y[5]
        out[8] = -y[6]
        out[9] = -acc * (y[7] * cth - y[8] * sth)
        out[10] = running_cost(model_id, p, u1, u2)
        return
    if model_id == 1:
        m = y[4]
        su = math.sin(u2)
        cu = math.cos(u2)
        acc = c1 * u1 / m
        out[0] = y[2]
        out[1] = y[3]
        out[2] = acc * su
        out[3] = acc * cu - g
        out[4] = -c1 * u1 / p[IP_VEX]
        out[5] = 0.0
        out[6] = 0.0
        out[7] = -y[5]
        out[8] = -y[6]
        out[9] = c1 * u1 / (m * m) * (y[7] * su + y[8] * cu)
        out[10] = running_cost(model_id, p, u1, u2)
        return
    if model_id == 2:
        sth = math.sin(y[4])
        cth = math.cos(y[4])
        m = y[5]
        acc = c1 * u1 / m
        out[0] = y[2]
        out[1] = y[3]
        out[2] = acc * sth
        out[3] = acc * cth - g
        out[4] = p[IP_RATE] * u2
        out[5] = -c1 * u1 / p[IP_VEX]
        out[6] = 0.0
        out[7] = 0.0
        out[8] = -y[6]
        out[9] = -y[7]
        out[10] = -acc * (y[8] * cth - y[9] * sth)
        out[11] = c1 * u1 / (m * m) * (y[8] * sth + y[9] * cth)
        out[12] = running_cost(model_id, p, u1, u2)
        return
    # tvr
    m = y[6]
    arm = p[IP_ARM]
    ang = y[4] + u2
    ta = math.sin(ang)
    tb = math.cos(ang)
    su = math.sin(u2)
    acc = c1 * u1 / m
    out[0] = y[2]
    out[1] = y[3]
    out[2] = acc * ta
    out[3] = acc * tb - g
    out[4] = y[5]
    out[5] = -acc / arm * su
    out[6] = -c1 * u1 / p[IP_VEX]
    out[7] = 0.0
    out[8] = 0.0
    out[9] = -y[7]
    out[10] = -y[8]
    out[11] = -acc * (y[9] * tb - y[10] * ta)
    out[12] = -y[11]
    out[13] = c1 * u1 / (m * m) * (y[9] * ta + y[10] * tb - y[12] / arm * su)
    out[14] = running_cost(model_id, p, u1, u2)


@maybe_njit(cache=True)
def hamiltonian(model_id, y, p, u1, u2):
    """Hamiltonian for arbitrary admissible controls (not necessarily optimal)."""
    n = (y.size - 1) // 2
    out = np.empty(y.size)
    aug_rhs(model_id, y, p, u1, u2, out)
    h = out[2 * n]  # running cost
    for i in range(n):
        h += y[n + i] * out[i]
    return h


@maybe_njit(cache=True)
def _dense_eval(y0, k, h, theta, out):
    # Quartic interpolant over one step; valid for theta in [0, 1].
    q1 = theta
    q2 = q1 * theta
    q3 = q2 * theta
    q4 = q3 * theta
    for j in range(y0.size):
        out[j] = y0[j]
    for s in range(7):
        w = DP_P[s, 0] * q1 + DP_P[s, 1] * q2 + DP_P[s, 2] * q3 + DP_P[s, 3] * q4
        if w != 0.0:
            hw = h * w
            for j in range(y0.size):
                out[j] += hw * k[s, j]


@maybe_njit(cache=True)
def _switch_value(model_id, y, p, which):
    s1, s2 = switching_values(model_id, y, p)
    if which == 0:
        return s1
    return s2


@maybe_njit(cache=True)
def integrate_model(model_id, p, y0, t0, t1, rtol, atol, event_tol, max_steps,
                    store, ts, ys, hs, ks, ev_t, ev_which, yf):
    """Adaptive Dormand-Prince 5(4) propagation of the augmented system.

    Controls are re-evaluated from the pointwise law at every stage.  Control
    structure changes (switching-function zeros on bang arcs, clamp
    engagements of continuous channels) are located by bisection on the dense
    interpolant to ``event_tol`` seconds and become step boundaries: a
    crossing strictly inside an accepted step rejects it and re-integrates
    with the step sized to end at the crossing.  Switching-function passages
    are recorded into ``ev_t``/``ev_which``.

    With ``store`` true, accepted nodes, per-step sizes, and stage derivatives
    are written to ``ts``, ``ys``, ``hs``, ``ks`` (dense output); otherwise
    only ``yf`` receives the final augmented vector.

    Returns ``(status, n_nodes, n_events)``.
    """
    n = y0.size
    bang = p[IP_BANG] != 0.0
    n_ev_funcs = 2 if (bang and model_id == 0) else (1 if bang else 0)
    if p[IP_FORCE_U1] == p[IP_FORCE_U1] or p[IP_U2MODE] != 0.0:
        # Arc integration: the control structure is fixed by the caller, so
        # there are no switching passages to locate.
        n_ev_funcs = 0
    # Models with a continuous clamped channel need kink location even on
    # bang arcs (rwsc wheel, tvr gimbal); otherwise only below alpha = 1.
    sat_active = (not bang) or model_id == 2 or model_id == 3

    y = y0.copy()
    ynew = np.empty(n)
    ytmp = np.empty(n)
    yev = np.empty(n)
    yprobe = np.empty((3, n))
    k = np.empty((7, n))
    sat0 = np.empty(4)
    sat1 = np.empty(4)
    satm = np.empty(4)
    satp = np.empty((3, 4))
    t = t0

    # Branch flags: sign of each switching function on the current arc.
    tie1 = 1.0
    tie2 = 1.0
    if bang:
        s1, s2 = switching_values(model_id, y, p)
        if s1 < 0.0:
            tie1 = -1.0
        if s2 < 0.0:
            tie2 = -1.0

    u1, u2 = control_law(model_id, y, p, tie1, tie2)
    if not (math.isfinite(u1) and math.isfinite(u2)):
        return BAD_VALUE, 0, 0
    aug_rhs(model_id, y, p, u1, u2, k[0])
    for j in range(n):
        if not math.isfinite(k[0, j]):
            return BAD_VALUE, 0, 0
    if sat_active:
        saturation_margins(model_id, y, p, sat0)

    n_nodes = 1
    n_events = 0
    if store:
        ts[0] = t0
        for j in range(n):
            ys[0, j] = y0[j]

    if t1 <= t0:
        for j in range(n):
            yf[j] = y[j]
        return OK, n_nodes, 0

    h = 0.01 * (t1 - t0)
    attempts = 0
    need_k0 = False

    while t < t1:
        attempts += 1
        if attempts > max_steps:
            return OUT_OF_ROOM, n_nodes, n_events
        if h < MIN_STEP:
            return STEP_UNDERFLOW, n_nodes, n_events
        if h > t1 - t:
            h = t1 - t

        if need_k0:
            u1, u2 = control_law(model_id, y, p, tie1, tie2)
            if not (math.isfinite(u1) and math.isfinite(u2)):
                return BAD_VALUE, n_nodes, n_events
            aug_rhs(model_id, y, p, u1, u2, k[0])
            need_k0 = False

        bad = False
        for i in range(1, 7):
            for j in range(n):
                acc = 0.0
                for s in range(i):
                    a = DP_A[i, s]
                    if a != 0.0:
                        acc += a * k[s, j]
                ytmp[j] = y[j] + h * acc
            u1, u2 = control_law(model_id, ytmp, p, tie1, tie2)
            if not (math.isfinite(u1) and math.isfinite(u2)):
                bad = True
                break
            aug_rhs(model_id, ytmp, p, u1, u2, k[i])
            for j in range(n):
                if not math.isfinite(k[i, j]):
                    bad = True
                    break
            if bad:
                break

        if bad:
            # Non-finite values on a trial stage: shrink hard; if that cannot
            # help the dynamics are genuinely singular at the current point.
            h *= 0.25
            if h < MIN_STEP:
                return BAD_VALUE, n_nodes, n_events
            continue

        # Stage 6 already lands on the 5th-order solution (FSAL).
        for j in range(n):
            ynew[j] = ytmp[j]

        errnorm = 0.0
        for j in range(n):
            e = 0.0
            for s in range(7):
                c = DP_E[s]
                if c != 0.0:
                    e += c * k[s, j]
            e *= h
            ay = abs(y[j])
            an = abs(ynew[j])
            scale = atol + rtol * (ay if ay > an else an)
            r = e / scale
            errnorm += r * r
        errnorm = math.sqrt(errnorm / n)

        if errnorm > 1.0:
            fac = 0.9 * errnorm ** -0.2
            if fac < 0.2:
                fac = 0.2
            h *= fac
            continue

        # Accepted.  Error-based proposal for the next step, kept even if an
        # event truncates this one.
        if errnorm == 0.0:
            fac = 5.0
        else:
            fac = 0.9 * errnorm ** -0.2
            if fac > 5.0:
                fac = 5.0
            elif fac < 0.2:
                fac = 0.2
        h_next = h * fac

        t_new = t + h
        if t1 - t_new < MIN_STEP:
            t_new = t1

        # Locate the earliest control-structure crossing inside the step: a
        # switching-function sign change (bang arcs, recorded, flips the
        # branch flag) or a clamp boundary of a continuous channel.  Both are
        # derivative kinks of the closed dynamics, where the embedded error
        # estimate cannot be trusted: a crossing strictly inside the step
        # forces a redo sized to end just short of the crossing, so stages
        # never straddle a kink.  Quarter-point probes of the dense output
        # keep an even number of crossings inside one step from cancelling in
        # the endpoint sign test.
        th_best = 2.0
        th_near = 2.0
        which_best = -1
        is_sat = False
        if n_ev_funcs > 0 or sat_active:
            for q in range(3):
                _dense_eval(y, k, h, 0.25 * (q + 1), yprobe[q])
        if n_ev_funcs > 0:
            for w in range(n_ev_funcs):
                tie = tie1 if w == 0 else tie2
                a = 0.0
                b = -1.0
                for q in range(4):
                    if q < 3:
                        v = _switch_value(model_id, yprobe[q], p, w)
                        th_q = 0.25 * (q + 1)
                    else:
                        v = _switch_value(model_id, ynew, p, w)
                        th_q = 1.0
                    if v * tie < 0.0:
                        b = th_q
                        break
                    a = th_q
                if b > 0.0:
                    lo = a
                    hi = b
                    while h * (hi - lo) > event_tol:
                        mid = 0.5 * (lo + hi)
                        _dense_eval(y, k, h, mid, yev)
                        smid = _switch_value(model_id, yev, p, w)
                        if smid * tie < 0.0:
                            hi = mid
                        else:
                            lo = mid
                    if hi < th_best:
                        th_best = hi
                        th_near = lo
                        which_best = w
        if sat_active:
            saturation_margins(model_id, ynew, p, sat1)
            for q in range(3):
                saturation_margins(model_id, yprobe[q], p, satp[q])
            for w in range(4):
                sgn = sat0[w]
                a = 0.0
                b = -1.0
                for q in range(4):
                    if q < 3:
                        v = satp[q, w]
                        th_q = 0.25 * (q + 1)
                    else:
                        v = sat1[w]
                        th_q = 1.0
                    if sgn * v < 0.0:
                        b = th_q
                        break
                    a = th_q
                if b > 0.0:
                    lo = a
                    hi = b
                    while h * (hi - lo) > event_tol:
                        mid = 0.5 * (lo + hi)
                        _dense_eval(y, k, h, mid, yev)
                        saturation_margins(model_id, yev, p, satm)
                        if sgn * satm[w] < 0.0:
                            hi = mid
                        else:
                            lo = mid
                    if hi < th_best:
                        th_best = hi
                        th_near = lo
                        which_best = w
                        is_sat = True

        if which_best >= 0:
            t_cut = th_best * h
            if t_cut >= h - event_tol:
                # Crossing within tolerance of the step end: the stages lie on
                # the near side, so the step stands.  A switching passage is
                # recorded and flips the branch for the next step.
                if not is_sat:
                    if n_events >= ev_t.size:
                        return OUT_OF_ROOM, n_nodes, n_events
                    ev_t[n_events] = t + t_cut
                    ev_which[n_events] = which_best
                    n_events += 1
                    if which_best == 0:
                        tie1 = -tie1
                    else:
                        tie2 = -tie2
                    need_k0 = True  # control changes branch at the node
            elif th_near * h > event_tol:
                # Crossing strictly inside: redo the step so it ends just
                # short of the crossing, keeping every stage on this arc.
                h = th_near * h
                continue
            else:
                # Crossing within tolerance of the step start (the previous
                # step was cut just short of it).  A clamp kink this close to
                # the node is harmless; a switching passage flips the branch
                # and the whole step is redone on the new arc.
                if not is_sat:
                    if n_events >= ev_t.size:
                        return OUT_OF_ROOM, n_nodes, n_events
                    ev_t[n_events] = t + t_cut
                    ev_which[n_events] = which_best
                    n_events += 1
                    if which_best == 0:
                        tie1 = -tie1
                    else:
                        tie2 = -tie2
                    need_k0 = True
                    continue

        if store:
            if n_nodes > ts.size - 1:
                return OUT_OF_ROOM, n_nodes, n_events
            ts[n_nodes] = t_new
            for j in range(n):
                ys[n_nodes, j] = ynew[j]
            hs[n_nodes - 1] = h
            for s in range(7):
                for j in range(n):
                    ks[n_nodes - 1, s, j] = k[s, j]
        n_nodes += 1
        t = t_new
        for j in range(n):
            y[j] = ynew[j]
            k[0, j] = k[6, j]  # FSAL; refreshed when need_k0 is set

        if sat_active:
            saturation_margins(model_id, y, p, sat0)
        h = h_next

    for j in range(n):
        yf[j] = y[j]
    return OK, n_nodes, n_events
