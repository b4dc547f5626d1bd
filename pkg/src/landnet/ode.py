"""Adaptive Dormand-Prince 5(4) integration with dense output and events.

This is the generic, callback-driven twin of the fused kernel in
``_kernels``: same tableau, same error controller, same quartic interpolant,
but taking an arbitrary Python right-hand side.  It backs the closed-loop
network simulations (whose dynamics call a network forward pass) and provides
the reference behavior the kernel is tested against.

Both integration paths produce a :class:`DenseTrajectory`, which stores the
accepted nodes together with the stage derivatives of every step so the
solution can be evaluated at arbitrary interior times at interpolation order
four.
"""

from dataclasses import dataclass, field

import numpy as np

from ._tableau import DP_A, DP_C, DP_E, DP_P
from ._kernels import OK, BAD_VALUE, STEP_UNDERFLOW, OUT_OF_ROOM, MIN_STEP

STATUS_NAMES = {
    OK: "ok",
    BAD_VALUE: "non-finite dynamics",
    STEP_UNDERFLOW: "step size underflow",
    OUT_OF_ROOM: "step budget exhausted",
}


class IntegrationError(RuntimeError):
    def __init__(self, status, t):
        self.status = status
        self.t = t
        super().__init__(f"integration failed at t={t:.6g}: {STATUS_NAMES[status]}")


@dataclass
class EventSpec:
    """Scalar event function; zero crossings are located to ``tol`` seconds."""

    func: object
    tol: float = 1e-10


@dataclass
class DenseTrajectory:
    """Accepted nodes plus per-step stage data for dense evaluation.

    ``hs[i]`` is the full step size the stages ``ks[i]`` were computed with;
    it exceeds ``ts[i+1] - ts[i]`` when the step was truncated at an event, so
    interpolation on segment ``i`` always uses ``theta = (t - ts[i]) / hs[i]``.
    """

    ts: np.ndarray
    ys: np.ndarray
    hs: np.ndarray
    ks: np.ndarray
    status: int = OK
    events: list = field(default_factory=list)

    @property
    def t0(self):
        return self.ts[0]

    @property
    def t_end(self):
        return self.ts[-1]

    @property
    def y_end(self):
        return self.ys[-1]

    def _segment(self, t):
        i = int(np.searchsorted(self.ts, t, side="right")) - 1
        return min(max(i, 0), len(self.ts) - 2)

    def eval(self, t):
        """Interpolated solution at scalar time ``t`` inside the span."""
        i = self._segment(t)
        h = self.hs[i]
        theta = (t - self.ts[i]) / h
        q = np.array([theta, theta**2, theta**3, theta**4])
        return self.ys[i] + h * (self.ks[i].T @ (DP_P @ q))

    def eval_many(self, times):
        times = np.asarray(times, dtype=float)
        out = np.empty((times.size, self.ys.shape[1]))
        for j, t in enumerate(times.ravel()):
            out[j] = self.eval(t)
        return out


def integrate(rhs, y0, t0, t1, rtol=1e-8, atol=1e-8, events=(),
              max_steps=100_000):
    """Propagate ``dy/dt = rhs(t, y)`` from ``t0`` to ``t1 >= t0``.

    Event zero crossings are located by bisection on the dense interpolant,
    the step is truncated there so a node lands on the crossing, and
    integration continues; crossings are recorded as ``(t, index)`` pairs.
    Returns a :class:`DenseTrajectory` whose ``status`` reports failures
    (non-finite dynamics, step underflow, step budget); callers that need a
    hard error can check it or use :func:`integrate_or_raise`.
    """
    y0 = np.asarray(y0, dtype=float)
    n = y0.size
    if t1 < t0:
        raise ValueError("backward integration not supported")

    ts = [t0]
    ys = [y0.copy()]
    hs = []
    ks_all = []
    ev_out = []

    y = y0.copy()
    t = t0
    k = np.empty((7, n))
    k[0] = rhs(t, y)
    if not np.all(np.isfinite(k[0])):
        return DenseTrajectory(np.array(ts), np.array(ys), np.empty(0),
                               np.empty((0, 7, n)), status=BAD_VALUE)
    sprev = [ev.func(t, y) for ev in events]

    def finish(status):
        return DenseTrajectory(
            np.array(ts), np.array(ys),
            np.array(hs) if hs else np.empty(0),
            np.array(ks_all) if ks_all else np.empty((0, 7, n)),
            status=status, events=ev_out,
        )

    if t1 == t0:
        return finish(OK)

    h = 0.01 * (t1 - t0)
    attempts = 0
    need_k0 = False

    while t < t1:
        attempts += 1
        if attempts > max_steps:
            return finish(OUT_OF_ROOM)
        if h < MIN_STEP:
            return finish(STEP_UNDERFLOW)
        if h > t1 - t:
            h = t1 - t
        if need_k0:
            k[0] = rhs(t, y)
            if not np.all(np.isfinite(k[0])):
                return finish(BAD_VALUE)
            need_k0 = False

        bad = False
        for i in range(1, 7):
            yi = y + h * (DP_A[i, :i] @ k[:i])
            k[i] = rhs(t + h * DP_C[i], yi)
            if not np.all(np.isfinite(k[i])):
                bad = True
                break
        if bad:
            h *= 0.25
            if h < MIN_STEP:
                return finish(BAD_VALUE)
            continue

        ynew = yi  # stage 6 lands on the 5th-order solution (FSAL)
        err = h * (DP_E @ k)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(ynew))
        errnorm = float(np.sqrt(np.mean((err / scale) ** 2)))

        if errnorm > 1.0:
            h *= max(0.2, 0.9 * errnorm**-0.2)
            continue

        fac = 5.0 if errnorm == 0.0 else min(5.0, max(0.2, 0.9 * errnorm**-0.2))
        h_next = h * fac
        t_new = t + h
        if t1 - t_new < MIN_STEP:
            t_new = t1

        truncated = False
        if events:
            th_best, w_best = 2.0, -1
            for w, ev in enumerate(events):
                send = ev.func(t_new, ynew)
                if sprev[w] * send < 0.0:
                    lo_th, hi_th = 0.0, 1.0
                    while h * (hi_th - lo_th) > ev.tol:
                        mid = 0.5 * (lo_th + hi_th)
                        ymid = _dense(y, k, h, mid)
                        if sprev[w] * ev.func(t + mid * h, ymid) < 0.0:
                            hi_th = mid
                        else:
                            lo_th = mid
                    if hi_th < th_best:
                        th_best, w_best = hi_th, w
            if w_best >= 0 and th_best * h > events[w_best].tol:
                t_ev = t + th_best * h
                y_ev = _dense(y, k, h, th_best)
                ev_out.append((t_ev, w_best))
                ts.append(t_ev)
                ys.append(y_ev)
                hs.append(h)
                ks_all.append(k.copy())
                t, y = t_ev, y_ev
                need_k0 = True
                truncated = True
                sprev = [ev.func(t, y) for ev in events]
            elif w_best >= 0:
                ev_out.append((t, w_best))
                sprev = [ev.func(t_new, ynew) for ev in events]

        if not truncated:
            ts.append(t_new)
            ys.append(ynew.copy())
            hs.append(h)
            ks_all.append(k.copy())
            t, y = t_new, ynew.copy()
            k[0] = k[6]
            if events:
                sprev = [ev.func(t, y) for ev in events]

        h = h_next

    return finish(OK)


def integrate_or_raise(*args, **kwargs):
    traj = integrate(*args, **kwargs)
    if traj.status != OK:
        raise IntegrationError(traj.status, traj.t_end)
    return traj


def _dense(y, k, h, theta):
    q = np.array([theta, theta**2, theta**3, theta**4])
    return y + h * (k.T @ (DP_P @ q))
