"""Shooting solution of the free-final-time landing problems.

The minimum principle reduces each optimal landing to a root find: choose the
initial costates and the flight time so that the propagated extremal meets the
touchdown conditions with zero terminal Hamiltonian (the transversality
condition of a free final time) and zero terminal mass costate where the final
mass is free.  The root find runs in scaled unknowns, z = (lam0 / costate_ref,
t_f / time_ref), so one Levenberg-Marquardt configuration works for every
model.

The pitch channel of the rotating vehicles makes the costate flow violently
unstable (perturbation gains of 1e7 and beyond over a full flight), which a
plain shooting iteration cannot navigate: the sensitivity matrix degenerates
to its dominant rank-one part at any finite-difference resolution, and a
single float64 propagation of the whole horizon cannot even reproduce its
own terminal state to better than 1e-1 off the symmetry axis.  The solver
therefore works throughout with a lifted formulation: the horizon is split
into segments with the intermediate states and costates as extra unknowns,
which caps the per-segment gain at a tame level, and the converged extremal
is the concatenation of the segment propagations, so the terminal rows of
the converged residual are the actual defects of the returned trajectory.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dynamics import (hamiltonian_value, optimal_control, pack_aug,
                       propagate, propagate_raw, switching, unpack_aug)
from .models import (IP_FORCE_U1, IP_FORCE_U2, IP_U2HI, IP_U2LO, IP_U2MODE,
                     Objective)

RES_TOL = 1e-8
FD_STEP = 1e-7
MIN_TF_SCALED = 1e-3


class ShootingError(RuntimeError):
    """No extremal could be found from the guesses that were tried."""


def scale_unknowns(spec, lam0, t_f):
    """Pack physical (lam0, t_f) into the scaled unknown vector."""
    z = np.empty(spec.n_x + 1)
    z[:-1] = np.asarray(lam0, float) / spec.costate_ref
    z[-1] = t_f / spec.time_ref
    return z


def unscale_unknowns(spec, z):
    return np.asarray(z[:-1]) * spec.costate_ref, z[-1] * spec.time_ref


def residual_scale(spec):
    """Componentwise scale of the defect vector (documentation helper)."""
    names = []
    for i, nm in enumerate(spec.state_names):
        if not math.isnan(spec.target_vector()[i]):
            names.append(nm)
    return names


def shooting_residual(spec, objective, x0, z, rtol=1e-11, atol=1e-11):
    """Scaled terminal defect of the extremal launched from ``z``.

    Components: pinned state defects over their reference magnitudes, the
    terminal costate of each free state component over its reference, and the
    scaled terminal Hamiltonian.  Returns None when the propagation fails or
    the flight time is out of range, which the solver treats as a rejected
    point.
    """
    if z[-1] < MIN_TF_SCALED:
        return None
    lam0, t_f = unscale_unknowns(spec, z)
    pr = propagate(spec, objective, x0, lam0, t_f, rtol=rtol, atol=atol)
    if not pr.ok:
        return None
    xf, lamf, _ = unpack_aug(spec, pr.yf)
    tgt = spec.target_vector()
    scale = spec.state_scale()
    res = np.empty(spec.n_x + 1)
    k = 0
    for i in range(spec.n_x):
        if math.isnan(tgt[i]):
            # free component: transversality pins its costate instead
            res[k] = lamf[i] / spec.costate_ref[i]
        else:
            res[k] = (xf[i] - tgt[i]) / scale[i]
        k += 1
    H = hamiltonian_value(spec, objective, xf, lamf)
    res[k] = H * spec.time_ref / spec.cost_ref
    return res


def random_guess(spec, rng):
    """Scaled guess with O(1) costates and a flight time in the typical band."""
    z = np.empty(spec.n_x + 1)
    z[:-1] = rng.uniform(-1.0, 1.0, spec.n_x)
    z[-1] = rng.uniform(*spec.tf_guess) / spec.time_ref
    return z


@dataclass
class SolveReport:
    """Raw outcome of one Levenberg-Marquardt run."""

    z: np.ndarray
    res_inf: float
    iterations: int
    converged: bool


# Segment counts for the lifted (multiple-shooting) navigation stage.  Chosen
# so the per-segment perturbation gain stays within finite-difference reach;
# the rotating models need more pieces than the point-mass orbiter.
MS_SEGMENTS = {"quad": 8, "ssc": 6, "rwsc": 8, "tvr": 12}


def n_segments(spec):
    return MS_SEGMENTS.get(spec.name, 8)


def ms_unknown_size(spec):
    m = n_segments(spec)
    return spec.n_x + (m - 1) * 2 * spec.n_x + 1


def ms_seed(spec, objective, x0, z, rtol=1e-11, atol=1e-11):
    """Lift a plain guess into the segmented unknown vector.

    Interior nodes come from propagating the guess segment by segment, so the
    seed has zero matching defects and its lifted residual equals the plain
    one.  A segment that fails to propagate leaves the remaining nodes at the
    last reachable value; the solver recovers from there.
    """
    n, m = spec.n_x, n_segments(spec)
    lam0, t_f = unscale_unknowns(spec, z)
    sscale = spec.state_scale()
    w = np.empty(ms_unknown_size(spec))
    w[:n] = z[:n]
    w[-1] = z[-1]
    xi = np.asarray(x0, float)
    li = lam0
    dt = max(t_f, MIN_TF_SCALED * spec.time_ref) / m
    for i in range(m - 1):
        pr = propagate(spec, objective, xi, li, dt, rtol=rtol, atol=atol)
        if pr.ok and np.all(np.isfinite(pr.yf)):
            xi, li, _ = unpack_aug(spec, pr.yf)
        off = n + i * 2 * n
        w[off:off + n] = xi / sscale
        w[off + n:off + 2 * n] = li / spec.costate_ref
    return w


def _seg_run(spec, objective, xi, li, dt, rtol, atol):
    pr = propagate(spec, objective, xi, li, dt, rtol=rtol, atol=atol)
    if not pr.ok or not np.all(np.isfinite(pr.yf)):
        return None
    return pr.yf


def _node_start(spec, x0, w, i):
    """Start state and costate of segment ``i`` under unknowns ``w``."""
    n = spec.n_x
    if i == 0:
        return np.asarray(x0, float), w[:n] * spec.costate_ref
    off = n + (i - 1) * 2 * n
    return (w[off:off + n] * spec.state_scale(),
            w[off + n:off + 2 * n] * spec.costate_ref)


def _end_rows(spec, objective, w, i, yf):
    """Residual rows produced by segment ``i`` ending at ``yf``."""
    n, m = spec.n_x, n_segments(spec)
    xf, lf, _ = unpack_aug(spec, yf)
    if i < m - 1:
        sscale = spec.state_scale()
        off = n + i * 2 * n
        rows = np.empty(2 * n)
        rows[:n] = (xf - w[off:off + n] * sscale) / sscale
        rows[n:] = (lf - w[off + n:off + 2 * n] * spec.costate_ref) \
            / spec.costate_ref
        return rows
    tgt = spec.target_vector()
    sscale = spec.state_scale()
    rows = np.empty(n + 1)
    for j in range(n):
        if math.isnan(tgt[j]):
            rows[j] = lf[j] / spec.costate_ref[j]
        else:
            rows[j] = (xf[j] - tgt[j]) / sscale[j]
    H = hamiltonian_value(spec, objective, xf, lf)
    rows[n] = H * spec.time_ref / spec.cost_ref
    return rows


def _row_start(spec, i):
    n, m = spec.n_x, n_segments(spec)
    return i * 2 * n if i < m - 1 else (m - 1) * 2 * n


TF_BARRIER_GAIN = 10.0


def _tf_barrier(spec, tf_scaled):
    """Hinge penalty repelling the spurious flight-time collapse.

    A least-squares iteration otherwise parks at t_f -> 0, where the defect
    rows freeze at the initial offsets and everything else vanishes.  The
    row is exactly zero above half the smallest plausible flight time, so
    genuine solutions never see it.
    """
    t_lo = 0.5 * spec.tf_guess[0] / spec.time_ref
    gap = max(0.0, (t_lo - tf_scaled) / t_lo)
    return TF_BARRIER_GAIN * gap * gap


def _ms_eval(spec, objective, x0, w, rtol, atol):
    """Lifted residual plus the per-segment endpoint cache, or None."""
    if w[-1] < MIN_TF_SCALED:
        return None
    n, m = spec.n_x, n_segments(spec)
    dt = w[-1] * spec.time_ref / m
    res = np.empty(w.size + 1)
    seg_yf = []
    for i in range(m):
        xi, li = _node_start(spec, x0, w, i)
        yf = _seg_run(spec, objective, xi, li, dt, rtol, atol)
        if yf is None:
            return None
        seg_yf.append(yf)
        rows = _end_rows(spec, objective, w, i, yf)
        res[_row_start(spec, i):_row_start(spec, i) + rows.size] = rows
    res[-1] = _tf_barrier(spec, w[-1])
    return res, seg_yf


def ms_residual(spec, objective, x0, w, rtol=1e-11, atol=1e-11):
    """Matching defects of the segmented extremal plus terminal conditions.

    Interior rows: state and costate mismatch between each segment's endpoint
    and the next node, in the same scaling as the unknowns.  Final rows: the
    plain terminal residual evaluated from the last node.
    """
    out = _ms_eval(spec, objective, x0, w, rtol, atol)
    return None if out is None else out[0]


def ms_jacobian(spec, objective, x0, w, seg_yf, rtol, atol, fd_step=FD_STEP):
    """Forward-difference Jacobian of the lifted residual, column by column.

    Each unknown touches at most one segment (plus one analytic identity
    block), so a full Jacobian costs about two horizon propagations.  The
    flight-time column re-runs every segment.  Returns None when a segment
    cannot be propagated from either side of a perturbation.
    """
    n, m = spec.n_x, n_segments(spec)
    N = w.size
    J = np.zeros((N + 1, N))
    sscale = spec.state_scale()
    cref = spec.costate_ref
    dt = w[-1] * spec.time_ref / m

    base_rows = [_end_rows(spec, objective, w, i, seg_yf[i]) for i in range(m)]

    def fd_segment(i, col, perturb, dz0, dt_of=None):
        """Response-controlled FD of segment i's rows into column col.

        ``perturb(dz)`` returns the perturbed segment start (and duration via
        ``dt_of``); the step shrinks until the row response is small enough
        for the secant to track the local slope.  True on success.
        """
        dz = dz0
        rows = None
        for _ in range(5):
            xi, li = perturb(dz)
            yf = _seg_run(spec, objective, xi, li,
                          dt if dt_of is None else dt_of(dz), rtol, atol)
            if yf is None:
                if rows is None and dz == dz0:
                    dz = -dz0
                    continue
                break
            cand = _end_rows(spec, objective, w, i, yf)
            rows, used = cand, dz
            resp = float(np.max(np.abs(cand - base_rows[i])))
            if resp <= 1e-3 or abs(dz) <= 1e-12 * max(1.0, abs(w[col])):
                break
            dz = dz * max(1e-3 / resp, 1e-4)
        if rows is None:
            return False
        rs = _row_start(spec, i)
        J[rs:rs + rows.size, col] = (rows - base_rows[i]) / used
        return True

    for j in range(n):
        xi0, li0 = _node_start(spec, x0, w, 0)

        def pert_lam0(dz, j=j, xi0=xi0, li0=li0):
            lip = li0.copy()
            lip[j] += dz * cref[j]
            return xi0, lip

        if not fd_segment(0, j, pert_lam0, fd_step * max(1.0, abs(w[j]))):
            return None

    for i in range(m - 1):
        off = n + i * 2 * n
        xi0, li0 = _node_start(spec, x0, w, i + 1)
        for c in range(2 * n):
            col = off + c

            def pert_node(dz, c=c, xi0=xi0, li0=li0):
                xip, lip = xi0.copy(), li0.copy()
                if c < n:
                    xip[c] += dz * sscale[c]
                else:
                    lip[c - n] += dz * cref[c - n]
                return xip, lip

            if not fd_segment(i + 1, col, pert_node,
                              fd_step * max(1.0, abs(w[col]))):
                return None
            # the segment's own matching rows depend on the node directly
            J[_row_start(spec, i) + c, col] += -1.0

    dzt = fd_step * max(1.0, abs(w[-1]))
    for i in range(m):
        xi0, li0 = _node_start(spec, x0, w, i)
        if not fd_segment(i, N - 1, lambda dz, xi0=xi0, li0=li0: (xi0, li0),
                          dzt,
                          dt_of=lambda dz: (w[-1] + dz) * spec.time_ref / m):
            return None
    J[N, N - 1] = (_tf_barrier(spec, w[-1] + dzt)
                   - _tf_barrier(spec, w[-1])) / dzt
    return J


def ms_solve(spec, objective, x0, w0, res_tol=RES_TOL, max_iter=200,
             fd_step=FD_STEP, mu0=1e-3, rtol=1e-11, atol=1e-11):
    """Levenberg-Marquardt on the lifted residual with the structured Jacobian.

    Same damping and acceptance policy as ``levenberg_marquardt``; the
    returned report's ``z`` is the full lifted vector.
    """
    x0 = np.asarray(x0, float)
    w = np.asarray(w0, float).copy()
    out = _ms_eval(spec, objective, x0, w, rtol, atol)
    if out is None:
        return SolveReport(w, np.inf, 0, False)
    r, seg_yf = out
    rnorm = float(np.linalg.norm(r))
    mu = mu0
    for it in range(1, max_iter + 1):
        if float(np.max(np.abs(r))) < res_tol:
            return SolveReport(w, float(np.max(np.abs(r))), it - 1, True)
        J = ms_jacobian(spec, objective, x0, w, seg_yf, rtol, atol,
                        fd_step=fd_step)
        if J is None:
            break
        colw = np.sqrt(np.clip(np.einsum("ij,ij->j", J, J), 1e-12, None))
        rhs = np.concatenate([-r, np.zeros(w.size)])
        accepted = False
        for _ in range(30):
            aug = np.vstack([J, math.sqrt(mu) * np.diag(colw)])
            try:
                step = np.linalg.lstsq(aug, rhs, rcond=None)[0]
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                wc = w + step
                outc = _ms_eval(spec, objective, x0, wc, rtol, atol)
                if outc is not None:
                    rcn = float(np.linalg.norm(outc[0]))
                    if rcn < rnorm:
                        w, (r, seg_yf), rnorm = wc, outc, rcn
                        mu = max(mu / 3.0, 1e-14)
                        accepted = True
                        break
            mu *= 4.0
            if mu > 1e14:
                break
        if not accepted:
            break
    res_inf = float(np.max(np.abs(r)))
    return SolveReport(w, res_inf, max_iter, res_inf < res_tol)


def levenberg_marquardt(fun, z0, res_tol=RES_TOL, max_iter=200,
                        fd_step=FD_STEP, mu0=1e-3):
    """Minimize ||fun(z)|| with a damped Gauss-Newton iteration.

    ``fun`` returns the residual vector or None for an infeasible point; the
    Jacobian comes from forward differences.  Failed or non-decreasing trial
    steps raise the damping, successful ones lower it.
    """
    z = np.asarray(z0, float).copy()
    r = fun(z)
    if r is None:
        return SolveReport(z, np.inf, 0, False)
    rnorm = float(np.linalg.norm(r))
    mu = mu0
    for it in range(1, max_iter + 1):
        if float(np.max(np.abs(r))) < res_tol:
            return SolveReport(z, float(np.max(np.abs(r))), it - 1, True)

        J = np.empty((r.size, z.size))
        fd_ok = True
        # Close to a root the step error competes with the residual itself
        # through the condition number, so the last decades use centered
        # differences; far away the cheaper one-sided slope is plenty.
        central = float(np.max(np.abs(r))) < 1e-4
        for j in range(z.size):
            dz = fd_step * max(1.0, abs(z[j]))
            # Pitch-channel sensitivities reach 1e7-1e8, which puts the
            # nominal step far outside the linear range on those columns;
            # shrink until the response is small enough to trust the slope.
            col = None
            fwd = False
            for _ in range(6):
                zp = z.copy()
                zp[j] += dz
                rp = fun(zp)
                if rp is None:
                    zp[j] = z[j] - dz
                    rp = fun(zp)
                    if rp is None:
                        break
                    col = (r - rp) / dz
                    fwd = False
                else:
                    col = (rp - r) / dz
                    fwd = True
                resp = float(np.max(np.abs(rp - r)))
                if resp <= 1e-2 or dz <= 1e-13 * max(1.0, abs(z[j])):
                    break
                dz *= max(3e-3 / resp, 1e-5)
            if col is None:
                fd_ok = False
                break
            if central and fwd:
                zm = z.copy()
                zm[j] -= dz
                rm = fun(zm)
                if rm is not None:
                    col = (rp - rm) / (2.0 * dz)
            J[:, j] = col
        if not fd_ok:
            break

        # Damped step from the stacked least-squares system [J; sqrt(mu) D];
        # forming J^T J would square a condition number that already reaches
        # 1e8 on the long-horizon problems and wipe out the slow directions.
        colw = np.sqrt(np.clip(np.einsum("ij,ij->j", J, J), 1e-12, None))
        zeros = np.zeros(z.size)
        rhs = np.concatenate([-r, zeros])
        accepted = False
        for _ in range(30):
            aug = np.vstack([J, math.sqrt(mu) * np.diag(colw)])
            try:
                step = np.linalg.lstsq(aug, rhs, rcond=None)[0]
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                zc = z + step
                rc = fun(zc)
                if rc is not None:
                    rcn = float(np.linalg.norm(rc))
                    if rcn < rnorm:
                        z, r, rnorm = zc, rc, rcn
                        mu = max(mu / 3.0, 1e-14)
                        accepted = True
                        break
            mu *= 4.0
            if mu > 1e14:
                break
        if not accepted:
            break

    res_inf = float(np.max(np.abs(r)))
    return SolveReport(z, res_inf, max_iter, res_inf < res_tol)


@dataclass(frozen=True)
class Arc:
    """Fixed control branch for one leg of a structured extremal.

    Near the terminal objectives the switching structure is known but the
    event-located residual couples the switch times to every unknown through
    the integrator, which leaves the final decades of convergence to a
    finite-difference Jacobian with a condition number it cannot support.
    Holding the branch per leg and solving for the boundary times directly
    removes the implicit coupling.
    """

    u1: float = None
    u2: float = None
    u2_singular: bool = False


def arc_params(spec, objective, arc):
    p = spec.params(objective)
    if arc.u1 is not None:
        p[IP_FORCE_U1] = arc.u1
    if arc.u2_singular:
        p[IP_U2MODE] = 2.0
        # keep the feedback smooth while the iterate is off the singular
        # surface; the converged arc is checked against the true bounds
        p[IP_U2LO], p[IP_U2HI] = -10.0, 10.0
    elif arc.u2 is not None:
        p[IP_U2MODE] = 1.0
        p[IP_FORCE_U2] = arc.u2
    return p


def _arc_control(spec, objective, arc, y):
    return _kernels.control_law(spec.model_id, y,
                                arc_params(spec, objective, arc), 1.0, 1.0)


def _boundary_row(spec, objective, tag, y):
    """Scaled boundary condition pinning a structure change to its time."""
    x, lam, _ = unpack_aug(spec, y)
    if tag == "s1":
        return switching(spec, objective, x, lam)[0] / 10.0
    if tag == "s2":
        return lam[4] / 10.0
    # "tang": thrust axis aligned with the velocity costate, the second
    # condition of a smooth entry onto the quad singular attitude surface.
    lv = math.hypot(lam[2], lam[3])
    if lv == 0.0:
        return None
    return (lam[2] * math.cos(x[4]) - lam[3] * math.sin(x[4])) / lv


def arc_residual(spec, objective, x0, arcs, bconds, w, rtol=1e-11, atol=1e-11):
    """Residual of the structured extremal with explicit boundary times.

    Unknowns: scaled initial costates, the interior boundary times and the
    final time (both over ``time_ref``).  Rows: the boundary conditions of
    each structure change, then the terminal rows of the plain residual.
    Integration runs arc by arc with the branch held, so the map is smooth
    in every unknown.
    """
    n = spec.n_x
    K = len(arcs)
    if w.size != n + K:
        raise ValueError("unknown vector does not match the arc structure")
    tb = w[n:] * spec.time_ref
    if w[-1] < MIN_TF_SCALED:
        return None
    lo = 0.0
    for t in tb:
        if t <= lo + 1e-9:
            return None
        lo = t
    lam0 = w[:n] * spec.costate_ref
    y = pack_aug(spec, x0, lam0)
    rows = []
    t_prev = 0.0
    for k, arc in enumerate(arcs):
        p = arc_params(spec, objective, arc)
        pr = propagate_raw(spec, p, y, t_prev, tb[k], rtol=rtol, atol=atol)
        if not pr.ok:
            return None
        y = pr.yf
        t_prev = tb[k]
        if k < K - 1:
            for tag in bconds[k]:
                v = _boundary_row(spec, objective, tag, y)
                if v is None:
                    return None
                rows.append(v)
    xf, lamf, _ = unpack_aug(spec, y)
    tgt = spec.target_vector()
    scale = spec.state_scale()
    term = np.empty(n + 1)
    for i in range(n):
        if math.isnan(tgt[i]):
            term[i] = lamf[i] / spec.costate_ref[i]
        else:
            term[i] = (xf[i] - tgt[i]) / scale[i]
    u_last = _arc_control(spec, objective, arcs[-1], y)
    H = hamiltonian_value(spec, objective, xf, lamf, u=u_last)
    term[n] = H * spec.time_ref / spec.cost_ref
    return np.concatenate([term, rows])


def arc_solve(spec, objective, x0, arcs, bconds, w0, res_tol=RES_TOL,
              max_iter=200, rtol=1e-11, atol=1e-11):
    """Levenberg-Marquardt on the structured residual."""
    x0 = np.asarray(x0, float)
    fun = lambda w: arc_residual(spec, objective, x0, arcs, bconds, w,
                                 rtol=rtol, atol=atol)
    return levenberg_marquardt(fun, np.asarray(w0, float), res_tol=res_tol,
                               max_iter=max_iter)


def _h0_row(spec, objective, x0, lam0):
    """Scaled initial Hamiltonian, the free-time row evaluated without any
    integration (the Hamiltonian is a first integral of the extremal flow)."""
    H = hamiltonian_value(spec, objective, np.asarray(x0, float), lam0)
    return H * spec.time_ref / spec.cost_ref


def arc_solve_fixed_tf(spec, objective, x0, arcs, bconds, w0, res_tol=1e-10,
                       max_iter=120, rtol=1e-11, atol=1e-11):
    """Structured solve with the flight time frozen and the free-time row
    dropped: the square inner problem of the two-stage endgame."""
    x0 = np.asarray(x0, float)
    n = spec.n_x
    tf_s = w0[-1]

    def fun(v):
        r = arc_residual(spec, objective, x0, arcs, bconds,
                         np.append(v, tf_s), rtol=rtol, atol=atol)
        if r is None:
            return None
        return np.delete(r, n)

    rep = levenberg_marquardt(fun, np.asarray(w0[:-1], float),
                              res_tol=res_tol, max_iter=max_iter)
    return SolveReport(np.append(rep.z, tf_s), rep.res_inf, rep.iterations,
                       rep.converged)


def _drop_collapsed(spec, arcs, bconds, w, min_frac=2e-3):
    """Remove arcs whose span has collapsed during an inner solve.

    A vanishing first or last leg is cut outright; a vanishing interior leg
    takes its two boundaries with it, merging the equal-branch neighbours.
    Returns updated ``(arcs, bconds, w, changed)``.
    """
    n = spec.n_x
    arcs = list(arcs)
    bconds = list(bconds)
    changed = False
    while len(arcs) > 1:
        tb = list(w[n:])
        gap = min_frac * tb[-1]
        spans = [(tb[0], 0)] + \
            [(tb[k + 1] - tb[k], k + 1) for k in range(len(tb) - 1)]
        span, k = min(spans)
        if span > gap:
            break
        changed = True
        if k == 0:
            del arcs[0], bconds[0]
            w = np.concatenate([w[:n], w[n + 1:]])
        elif k == len(arcs) - 1:
            del arcs[-1], bconds[-1]
            w = np.concatenate([w[:-2], w[-1:]])
        else:
            del arcs[k]
            arcs[k - 1:k + 1] = [arcs[k - 1]]
            del bconds[k - 1:k + 1]
            w = np.concatenate([w[: n + k - 1], w[n + k + 1:]])
    return tuple(arcs), tuple(bconds), w, changed


def arc_solve_free_tf(spec, objective, x0, arcs, bconds, w0, res_tol=RES_TOL,
                      max_iter=200, rtol=1e-11, atol=1e-11):
    """Two-stage structured solve for a near-flat cost-versus-time valley.

    With a propellant objective the cost of the structured family is almost
    linear in the flight time, which leaves the free-time row nearly
    orthogonal to every finite-difference direction (smallest singular value
    down at 1e-4 of the next one) and parks the joint iteration short of
    tolerance.  Here the flight time is instead an outer scalar unknown: for
    each candidate the inner square system (boundary rows and terminal rows
    less the free-time row) is solved with the time frozen, and the
    free-time row of the inner solution, an algebraic function of the
    initial costates, drives a secant iteration.  When an inner solve
    collapses a leg (a burn or coast that vanishes as the flight time
    moves), the structure is rebuilt without it and the scan continues.

    Returns ``(report, arcs, bconds)`` with the structure that converged.
    """
    n = spec.n_x
    state = {"arcs": tuple(arcs), "bconds": tuple(bconds), "evals": 0}
    w = np.asarray(w0, float).copy()

    def g(tf_s, w_start):
        w_start = w_start.copy()
        w_start[-1] = tf_s
        for _ in range(3):
            rep = arc_solve_fixed_tf(spec, objective, x0, state["arcs"],
                                     state["bconds"], w_start,
                                     rtol=rtol, atol=atol)
            state["evals"] += rep.iterations
            a2, b2, w2, changed = _drop_collapsed(spec, state["arcs"],
                                                  state["bconds"], rep.z)
            if not changed:
                break
            state["arcs"], state["bconds"] = a2, b2
            w_start = w2
        if not rep.converged:
            return None, rep
        return _h0_row(spec, objective, x0,
                       rep.z[:n] * spec.costate_ref), rep

    t0 = w[-1]
    h0, rep0 = g(t0, w)
    if h0 is None:
        return (SolveReport(w, np.inf, state["evals"], False),
                state["arcs"], state["bconds"])
    w = rep0.z
    # Bracket the free-time row with an expanding probe around the guess.
    t1 = t0 * (1.02 if h0 < 0 else 0.98)
    h1, rep1 = g(t1, w)
    if h1 is None:
        t1 = t0 * (0.98 if h0 < 0 else 1.02)
        h1, rep1 = g(t1, w)
        if h1 is None:
            return (SolveReport(w, abs(h0), state["evals"], False),
                    state["arcs"], state["bconds"])
    w = rep1.z
    for _ in range(80):
        if abs(h1) < res_tol:
            rep = SolveReport(w, _final_res(spec, objective, x0,
                                            state["arcs"], state["bconds"],
                                            w, rtol, atol),
                              state["evals"], True)
            return rep, state["arcs"], state["bconds"]
        if h0 == h1:
            break
        t2 = t1 - h1 * (t1 - t0) / (h1 - h0)
        lo, hi = (t0, t1) if t0 < t1 else (t1, t0)
        span = hi - lo
        if not (lo - 3 * span <= t2 <= hi + 3 * span):
            t2 = t1 + math.copysign(3 * span, t2 - t1)
        if t2 <= MIN_TF_SCALED:
            t2 = 0.5 * (t1 + MIN_TF_SCALED)
        h2, rep2 = g(t2, w)
        if h2 is None:
            t2 = 0.5 * (t1 + t2)
            h2, rep2 = g(t2, w)
            if h2 is None:
                break
        w = rep2.z
        t0, h0, t1, h1 = t1, h1, t2, h2
    return (SolveReport(w, abs(h1), state["evals"], False),
            state["arcs"], state["bconds"])


def _final_res(spec, objective, x0, arcs, bconds, w, rtol, atol):
    r = arc_residual(spec, objective, x0, arcs, bconds, w, rtol=rtol,
                     atol=atol)
    return np.inf if r is None else float(np.max(np.abs(r)))


def bang_structure(spec, objective, x0, z, rtol=1e-11, atol=1e-11,
                   min_arc=2e-3):
    """Read the throttle arc structure off an event-located propagation.

    Returns ``(arcs, bconds, w0)`` for the structured solver, or None when
    the propagation fails.  Switch passages closer together than
    ``min_arc * t_f`` are treated as artifacts of an unconverged point: an
    interior blip is dropped in pairs, an endpoint straggler is absorbed
    into its end arc.
    """
    lam0, t_f = unscale_unknowns(spec, z)
    pr = propagate(spec, objective, x0, lam0, t_f, rtol=rtol, atol=atol)
    if not pr.ok:
        return None
    s1 = switching(spec, objective, np.asarray(x0, float), lam0)[0]
    lo_u, hi_u = spec.u1_bounds
    first = hi_u if s1 < 0.0 else lo_u
    times = [t for t, which in pr.events if which == 0]
    gap = min_arc * t_f
    while times:
        if times[0] < gap:
            times.pop(0)
            first = hi_u + lo_u - first
            continue
        if t_f - times[-1] < gap:
            times.pop()
            continue
        cut = next((i for i in range(len(times) - 1)
                    if times[i + 1] - times[i] < gap), None)
        if cut is None:
            break
        del times[cut:cut + 2]
    arcs, u = [], first
    for _ in range(len(times) + 1):
        arcs.append(Arc(u1=u))
        u = hi_u + lo_u - u
    bconds = (("s1",),) * len(times)
    w0 = np.concatenate([z[:-1], np.asarray(times) / spec.time_ref, z[-1:]])
    return tuple(arcs), bconds, w0


def arc_leg_counts(spec, tb):
    """Per-arc subdivision counts for the lifted structured residual.

    Long arcs are split so no leg much exceeds the segment length the plain
    lifted solver uses, which keeps the along-trajectory error growth of
    each piece within what a finite-difference Jacobian can resolve.
    """
    max_leg = tb[-1] / float(n_segments(spec))
    qs = []
    t0 = 0.0
    for t in tb:
        qs.append(max(1, min(12, int(math.ceil((t - t0) / max_leg - 1e-9)))))
        t0 = t
    return qs


def _arc_leg_times(tb, qs):
    """Endpoint time of every leg; boundary times appear verbatim."""
    out = []
    t0 = 0.0
    for k, q in enumerate(qs):
        span = tb[k] - t0
        for j in range(1, q + 1):
            out.append(t0 + span * j / q)
        t0 = tb[k]
    return np.asarray(out)


def arc_lifted_size(spec, qs):
    L = int(sum(qs))
    return spec.n_x + (L - 1) * 2 * spec.n_x + len(qs)


def arc_lifted_seed(spec, arcs, qs, w_arc, ref):
    """Lift a structured guess onto the subdivided node grid.

    ``ref`` maps time to a state/costate pair used to fill the interior
    nodes, typically the dense trajectory of a nearby converged extremal.
    """
    n = spec.n_x
    K = len(arcs)
    tb = w_arc[n:] * spec.time_ref
    times = _arc_leg_times(tb, qs)
    sscale = spec.state_scale()
    w = np.empty(arc_lifted_size(spec, qs))
    w[:n] = w_arc[:n]
    for j in range(times.size - 1):
        x, lam = ref(times[j])
        off = n + j * 2 * n
        w[off:off + n] = x / sscale
        w[off + n:off + 2 * n] = lam / spec.costate_ref
    w[-K:] = w_arc[n:]
    return w


def arc_w_from_lifted(spec, qs, w):
    """Initial costates and boundary times of a lifted vector."""
    return np.concatenate([w[:spec.n_x], w[-len(qs):]])


def _arc_node(spec, x0, w, j):
    n = spec.n_x
    if j == 0:
        return np.asarray(x0, float), w[:n] * spec.costate_ref
    off = n + (j - 1) * 2 * n
    return (w[off:off + n] * spec.state_scale(),
            w[off + n:off + 2 * n] * spec.costate_ref)


def _arc_leg_run(spec, objective, arc, xi, li, span, rtol, atol):
    p = arc_params(spec, objective, arc)
    pr = propagate_raw(spec, p, pack_aug(spec, xi, li), 0.0, span,
                       rtol=rtol, atol=atol)
    if not pr.ok or not np.all(np.isfinite(pr.yf)):
        return None
    return pr.yf


def _arc_leg_rows(spec, objective, arcs, qs, w, j, yf):
    """Rows produced by leg ``j`` ending at ``yf``."""
    n = spec.n_x
    L = int(sum(qs))
    xf, lf, _ = unpack_aug(spec, yf)
    if j < L - 1:
        sscale = spec.state_scale()
        off = n + j * 2 * n
        rows = np.empty(2 * n)
        rows[:n] = (xf - w[off:off + n] * sscale) / sscale
        rows[n:] = (lf - w[off + n:off + 2 * n] * spec.costate_ref) \
            / spec.costate_ref
        return rows
    tgt = spec.target_vector()
    sscale = spec.state_scale()
    rows = np.empty(n + 1)
    for i in range(n):
        if math.isnan(tgt[i]):
            rows[i] = lf[i] / spec.costate_ref[i]
        else:
            rows[i] = (xf[i] - tgt[i]) / sscale[i]
    u_last = _arc_control(spec, objective, arcs[-1], yf)
    H = hamiltonian_value(spec, objective, xf, lf, u=u_last)
    rows[n] = H * spec.time_ref / spec.cost_ref
    return rows


def _arc_bc_rows(spec, objective, bconds, qs, w, x0):
    """Boundary-condition rows, algebraic in the boundary node unknowns."""
    rows = []
    j_end = 0
    for k in range(len(qs) - 1):
        j_end += qs[k]
        xb, lb = _arc_node(spec, x0, w, j_end)
        y = pack_aug(spec, xb, lb)
        for tag in bconds[k]:
            v = _boundary_row(spec, objective, tag, y)
            if v is None:
                return None
            rows.append(v)
    return np.asarray(rows)


GAP_BARRIER_FRAC = 5e-3
GAP_BARRIER_GAIN = 3.0


def _gap_barriers(spec, K, w):
    """Hinge rows repelling the collapse of an arc to zero length.

    Zero whenever every arc keeps at least ``GAP_BARRIER_FRAC`` of the
    horizon, so genuine solutions never see them; a least-squares step that
    starts squeezing an arc out feels a growing push back well before the
    ordering constraint turns into an infeasible wall.
    """
    tb = w[-K:]
    floor = GAP_BARRIER_FRAC * tb[-1]
    out = np.zeros(K)
    lo = 0.0
    for k in range(K):
        gap = (tb[k] - lo) / max(floor, 1e-12)
        if gap < 1.0:
            out[k] = GAP_BARRIER_GAIN * (1.0 - gap) ** 2
        lo = tb[k]
    return out


def _arc_lifted_eval(spec, objective, x0, arcs, bconds, qs, w, rtol, atol):
    """Lifted structured residual plus the per-leg endpoint cache, or None."""
    n = spec.n_x
    K = len(arcs)
    L = int(sum(qs))
    if w[-1] < MIN_TF_SCALED:
        return None
    tb = w[-K:] * spec.time_ref
    lo = 0.0
    for t in tb:
        if t <= lo + 1e-9:
            return None
        lo = t
    times = _arc_leg_times(tb, qs)
    arc_of = np.repeat(np.arange(K), qs)
    bc = _arc_bc_rows(spec, objective, bconds, qs, w, x0)
    if bc is None:
        return None
    res = np.empty((L - 1) * 2 * n + n + 1 + bc.size + K)
    leg_yf = []
    t0 = 0.0
    for j in range(L):
        xi, li = _arc_node(spec, x0, w, j)
        yf = _arc_leg_run(spec, objective, arcs[arc_of[j]], xi, li,
                          times[j] - t0, rtol, atol)
        if yf is None:
            return None
        leg_yf.append(yf)
        rows = _arc_leg_rows(spec, objective, arcs, qs, w, j, yf)
        res[j * 2 * n:j * 2 * n + rows.size] = rows
        t0 = times[j]
    res[(L - 1) * 2 * n + n + 1:-K] = bc
    res[-K:] = _gap_barriers(spec, K, w)
    return res, leg_yf


def arc_lifted_residual(spec, objective, x0, arcs, bconds, qs, w,
                        rtol=1e-11, atol=1e-11):
    out = _arc_lifted_eval(spec, objective, x0, arcs, bconds, qs, w,
                           rtol, atol)
    return None if out is None else out[0]


def arc_lifted_jacobian(spec, objective, x0, arcs, bconds, qs, w, leg_yf,
                        rtol, atol, fd_step=FD_STEP):
    """Structured finite-difference Jacobian of the lifted arc residual.

    Node and costate columns re-run a single leg; a boundary-time column
    re-runs the legs of its two adjacent arcs; the flight-time column
    re-runs the final arc.  The matching rows' direct dependence on their
    own node is the identity, added analytically.
    """
    n = spec.n_x
    K = len(arcs)
    L = int(sum(qs))
    N = w.size
    J = np.zeros((N + K, N))
    sscale = spec.state_scale()
    cref = spec.costate_ref
    tb = w[-K:] * spec.time_ref
    times = _arc_leg_times(tb, qs)
    arc_of = np.repeat(np.arange(K), qs)
    spans = np.diff(np.concatenate([[0.0], times]))

    base_rows = [_arc_leg_rows(spec, objective, arcs, qs, w, j, leg_yf[j])
                 for j in range(L)]

    def fd_leg(j, col, perturb, dz0, span_of=None):
        dz = dz0
        rows = None
        for _ in range(5):
            xi, li = perturb(dz)
            yf = _arc_leg_run(spec, objective, arcs[arc_of[j]], xi, li,
                              spans[j] if span_of is None else span_of(dz),
                              rtol, atol)
            if yf is None:
                if rows is None and dz == dz0:
                    dz = -dz0
                    continue
                break
            cand = _arc_leg_rows(spec, objective, arcs, qs, w, j, yf)
            rows, used = cand, dz
            resp = float(np.max(np.abs(cand - base_rows[j])))
            if resp <= 1e-3 or abs(dz) <= 1e-12 * max(1.0, abs(w[col])):
                break
            dz = dz * max(1e-3 / resp, 1e-4)
        if rows is None:
            return False
        J[j * 2 * n:j * 2 * n + rows.size, col] = (rows - base_rows[j]) / used
        return True

    for c in range(n):
        xi0, li0 = _arc_node(spec, x0, w, 0)

        def pert_lam0(dz, c=c, xi0=xi0, li0=li0):
            lip = li0.copy()
            lip[c] += dz * cref[c]
            return xi0, lip

        if not fd_leg(0, c, pert_lam0, fd_step * max(1.0, abs(w[c]))):
            return None

    for j in range(L - 1):
        off = n + j * 2 * n
        xi0, li0 = _arc_node(spec, x0, w, j + 1)
        for c in range(2 * n):
            col = off + c

            def pert_node(dz, c=c, xi0=xi0, li0=li0):
                xip, lip = xi0.copy(), li0.copy()
                if c < n:
                    xip[c] += dz * sscale[c]
                else:
                    lip[c - n] += dz * cref[c - n]
                return xip, lip

            if not fd_leg(j + 1, col, pert_node,
                          fd_step * max(1.0, abs(w[col]))):
                return None
            J[j * 2 * n + c, col] += -1.0

    # boundary-condition rows depend algebraically on their boundary node
    bc0 = _arc_bc_rows(spec, objective, bconds, qs, w, x0)
    if bc0 is None:
        return None
    rs = (L - 1) * 2 * n + n + 1
    j_end = 0
    r0 = 0
    for k in range(K - 1):
        j_end += qs[k]
        nb = len(bconds[k])
        if nb:
            off = n + (j_end - 1) * 2 * n
            for c in range(2 * n):
                col = off + c
                dz = fd_step * max(1.0, abs(w[col]))
                wp = w.copy()
                wp[col] += dz
                bcp = _arc_bc_rows(spec, objective, bconds, qs, wp, x0)
                if bcp is None:
                    return None
                J[rs + r0:rs + r0 + nb, col] += \
                    (bcp[r0:r0 + nb] - bc0[r0:r0 + nb]) / dz
        r0 += nb

    # a boundary time rescales every leg of its two adjacent arcs
    leg_lo = np.concatenate([[0], np.cumsum(qs)])
    for k in range(K):
        col = N - K + k
        dz = fd_step * max(1.0, abs(w[col]))
        touched = range(leg_lo[k], leg_lo[min(k + 2, K)]) if k < K - 1 \
            else range(leg_lo[k], leg_lo[k + 1])
        for j in touched:
            xi0, li0 = _arc_node(spec, x0, w, j)
            a = arc_of[j]
            t_lo0 = tb[a - 1] if a > 0 else 0.0

            def span_of(d, j=j, a=a, t_lo0=t_lo0):
                hi = tb[a] + (d * spec.time_ref if a == k else 0.0)
                lo2 = t_lo0 + (d * spec.time_ref if a - 1 == k else 0.0)
                return (hi - lo2) / qs[a]

            if not fd_leg(j, col, lambda d, xi0=xi0, li0=li0: (xi0, li0),
                          dz, span_of=span_of):
                return None

    g0 = _gap_barriers(spec, K, w)
    for k in range(K):
        col = N - K + k
        dz = fd_step * max(1.0, abs(w[col]))
        wp = w.copy()
        wp[col] += dz
        J[N:, col] = (_gap_barriers(spec, K, wp) - g0) / dz
    return J


def arc_lifted_solve(spec, objective, x0, arcs, bconds, qs, w0,
                     res_tol=RES_TOL, max_iter=200, fd_step=FD_STEP,
                     mu0=1e-3, rtol=1e-11, atol=1e-11):
    """Levenberg-Marquardt on the lifted structured residual.

    Same damping and acceptance policy as the plain lifted solver; the
    returned report's ``z`` is the full lifted vector.
    """
    x0 = np.asarray(x0, float)
    w = np.asarray(w0, float).copy()
    out = _arc_lifted_eval(spec, objective, x0, arcs, bconds, qs, w,
                           rtol, atol)
    if out is None:
        return SolveReport(w, np.inf, 0, False)
    r, leg_yf = out
    rnorm = float(np.linalg.norm(r))
    mu = mu0
    for it in range(1, max_iter + 1):
        if float(np.max(np.abs(r))) < res_tol:
            return SolveReport(w, float(np.max(np.abs(r))), it - 1, True)
        J = arc_lifted_jacobian(spec, objective, x0, arcs, bconds, qs, w,
                                leg_yf, rtol, atol, fd_step=fd_step)
        if J is None:
            break
        colw = np.sqrt(np.clip(np.einsum("ij,ij->j", J, J), 1e-12, None))
        rhs = np.concatenate([-r, np.zeros(w.size)])
        accepted = False
        for _ in range(30):
            aug = np.vstack([J, math.sqrt(mu) * np.diag(colw)])
            try:
                step = np.linalg.lstsq(aug, rhs, rcond=None)[0]
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                wc = w + step
                outc = _arc_lifted_eval(spec, objective, x0, arcs, bconds,
                                        qs, wc, rtol, atol)
                if outc is not None:
                    rcn = float(np.linalg.norm(outc[0]))
                    if rcn < rnorm:
                        w, (r, leg_yf), rnorm = wc, outc, rcn
                        mu = max(mu / 3.0, 1e-14)
                        accepted = True
                        break
            mu *= 4.0
            if mu > 1e14:
                break
        if not accepted:
            break
    res_inf = float(np.max(np.abs(r)))
    return SolveReport(w, res_inf, max_iter, res_inf < res_tol)


class SegmentedTrajectory:
    """Dense trajectory stitched from consecutive segment propagations.

    Each segment integrates its own running cost from zero, so ``eval``
    re-adds the cost accumulated by the preceding segments before returning
    the augmented vector.
    """

    def __init__(self, trajs, dt, cost_offsets):
        self._trajs = trajs
        self._dt = dt
        self._offsets = cost_offsets
        self.t_f = dt * len(trajs)

    def eval(self, t):
        k = min(int(t / self._dt), len(self._trajs) - 1) if self._dt > 0 else 0
        tl = min(max(t - k * self._dt, 0.0), self._dt)
        y = np.array(self._trajs[k].eval(tl), float)
        y[-1] += self._offsets[k]
        return y


@dataclass
class Extremal:
    """A converged extremal with its dense trajectory.

    ``cost`` is the running-cost integral of the model's objective at the
    solved homotopy point; for the terminal objectives that equals flight
    time (quad) or propellant-weighted effort (the rocket models).
    ``lifted`` is the full vector of segment unknowns, the natural warm
    start for a neighbouring problem.
    """

    spec: object
    objective: Objective
    x0: np.ndarray
    lam0: np.ndarray
    t_f: float
    cost: float
    res_inf: float
    iterations: int
    events: list
    traj: object
    lifted: np.ndarray = None
    continuation_path: list = field(default_factory=list)

    @property
    def switch_times(self):
        return [t for t, _ in self.events]

    def state_at(self, t):
        return unpack_aug(self.spec, self.traj.eval(t))[0]

    def costate_at(self, t):
        return unpack_aug(self.spec, self.traj.eval(t))[1]

    def control_at(self, t):
        x, lam, _ = unpack_aug(self.spec, self.traj.eval(t))
        return optimal_control(self.spec, self.objective, x, lam)

    def switching_at(self, t):
        x, lam, _ = unpack_aug(self.spec, self.traj.eval(t))
        return switching(self.spec, self.objective, x, lam)

    def hamiltonian_at(self, t):
        x, lam, _ = unpack_aug(self.spec, self.traj.eval(t))
        return hamiltonian_value(self.spec, self.objective, x, lam)

    def sample(self, n):
        """States, costates and controls on n evenly spaced times."""
        ts = np.linspace(0.0, self.t_f, n)
        xs = np.empty((n, self.spec.n_x))
        ls = np.empty((n, self.spec.n_x))
        us = np.empty((n, 2))
        for i, t in enumerate(ts):
            x, lam, _ = unpack_aug(self.spec, self.traj.eval(t))
            xs[i] = x
            ls[i] = lam
            us[i] = optimal_control(self.spec, self.objective, x, lam)
        return ts, xs, ls, us


def _build_extremal(spec, objective, x0, report, rtol, atol, path=None):
    """Assemble the extremal from a converged lifted vector.

    The trajectory is the concatenation of the segment propagations, so its
    terminal defects are exactly the terminal rows of the converged residual.
    """
    n, m = spec.n_x, n_segments(spec)
    w = report.z
    lam0 = w[:n] * spec.costate_ref
    t_f = w[-1] * spec.time_ref
    dt = t_f / m
    trajs, events, offsets = [], [], []
    cost = 0.0
    for i in range(m):
        xi, li = _node_start(spec, x0, w, i)
        pr = propagate(spec, objective, xi, li, dt, rtol=rtol, atol=atol,
                       dense=True)
        if not pr.ok:
            raise ShootingError(
                f"{spec.name}: converged point fails to propagate")
        trajs.append(pr.traj)
        offsets.append(cost)
        events.extend((t + i * dt, which) for t, which in pr.events)
        cost += float(pr.yf[-1])
    return Extremal(spec=spec, objective=objective, x0=np.asarray(x0, float),
                    lam0=lam0, t_f=t_f, cost=cost,
                    res_inf=report.res_inf, iterations=report.iterations,
                    events=events,
                    traj=SegmentedTrajectory(trajs, dt, offsets),
                    lifted=w.copy(),
                    continuation_path=list(path) if path else [])


def solve_guess(spec, objective, x0, z0, res_tol=RES_TOL, max_iter=200,
                rtol=1e-11, atol=1e-11):
    """One lifted-solver attempt from a plain or lifted scaled guess.

    A plain (lam0, t_f) guess is first cascaded into segment unknowns; a
    full-size guess (a warm start from a neighbouring problem) is used as
    is.  The returned report carries the lifted vector.
    """
    x0 = np.asarray(x0, float)
    z0 = np.asarray(z0, float)
    if z0.size == ms_unknown_size(spec):
        w0 = z0
    else:
        w0 = ms_seed(spec, objective, x0, z0, rtol=rtol, atol=atol)
    return ms_solve(spec, objective, x0, w0, res_tol=res_tol,
                    max_iter=max_iter, rtol=rtol, atol=atol)


def solve_tpbvp(spec, objective, x0, guess=None, rng=None, restarts=50,
                res_tol=RES_TOL, max_iter=200, rtol=1e-11, atol=1e-11):
    """Find one extremal for the given objective, restarting as needed.

    ``guess`` is a scaled unknown vector tried first; afterwards up to
    ``restarts`` random guesses are drawn from ``rng``.  Raises ShootingError
    when everything fails.
    """
    x0 = np.asarray(x0, float)
    tried = 0
    if guess is not None:
        report = solve_guess(spec, objective, x0, guess, res_tol=res_tol,
                             max_iter=max_iter, rtol=rtol, atol=atol)
        if report.converged:
            return _build_extremal(spec, objective, x0, report, rtol, atol)
        tried += 1
    if restarts > 0 and rng is None:
        raise ValueError("restarts requested but no rng given")
    for _ in range(restarts):
        z0 = random_guess(spec, rng)
        report = solve_guess(spec, objective, x0, z0, res_tol=res_tol,
                             max_iter=max_iter, rtol=rtol, atol=atol)
        if report.converged:
            return _build_extremal(spec, objective, x0, report, rtol, atol)
        tried += 1
    raise ShootingError(
        f"{spec.name}: no extremal after {tried} attempts "
        f"(alpha={objective.alpha:g})")


def continuation_solve(spec, x0, guess=None, rng=None, restarts=50,
                       alpha_step=0.05, min_alpha_step=1e-4,
                       res_tol=RES_TOL, max_iter=200,
                       rtol=1e-11, atol=1e-11, keep_intermediate=False):
    """Walk the objective from quadratic to terminal and return the endpoint.

    The smooth quadratic problem (alpha = 0) is solved first, with restarts;
    every later homotopy point starts from its predecessor.  A failed step
    halves the advance until ``min_alpha_step``; the returned extremal records
    the visited (alpha, z) pairs in ``continuation_path``, or full
    intermediate extremals when ``keep_intermediate`` is set.
    """
    x0 = np.asarray(x0, float)
    first = solve_tpbvp(spec, Objective.quadratic(), x0, guess=guess,
                        rng=rng, restarts=restarts, res_tol=res_tol,
                        max_iter=max_iter, rtol=rtol, atol=atol)
    z = first.lifted.copy()
    path = [(0.0, z.copy())]
    inters = [first] if keep_intermediate else []

    alpha = 0.0
    da = alpha_step
    report = None
    while alpha < 1.0:
        a_try = min(1.0, alpha + da)
        obj = Objective(a_try, a_try >= 1.0)
        rep = solve_guess(spec, obj, x0, z, res_tol=res_tol,
                          max_iter=max_iter, rtol=rtol, atol=atol)
        if rep.converged:
            alpha = a_try
            z = rep.z
            report = rep
            path.append((alpha, z.copy()))
            if keep_intermediate and alpha < 1.0:
                inters.append(_build_extremal(spec, obj, x0, rep, rtol, atol))
            da = min(alpha_step, da * 2.0)
        else:
            da *= 0.5
            if da < min_alpha_step:
                raise ShootingError(
                    f"{spec.name}: continuation stalls at alpha={alpha:g}")

    ext = _build_extremal(spec, Objective(1.0, True), x0, report, rtol, atol,
                          path=path)
    if keep_intermediate:
        ext.continuation_path = path
        ext.intermediates = inters
    return ext
