"""State/costate dynamics, pointwise optimal controls, Hamiltonians.

Thin public layer over the scalar kernels, plus a broadcasting
Hamiltonian-on-grid evaluator written independently of those kernels so the
pointwise control law can be cross-checked against brute-force minimization
over the admissible control box.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import OK
from .models import ModelSpec, Objective
from .ode import DenseTrajectory


def pack_aug(spec, x, lam, cost=0.0):
    """Assemble the augmented vector [state, costates, running-cost integral]."""
    y = np.empty(spec.n_aug)
    y[: spec.n_x] = x
    y[spec.n_x : 2 * spec.n_x] = lam
    y[-1] = cost
    return y


def unpack_aug(spec, y):
    return y[: spec.n_x], y[spec.n_x : 2 * spec.n_x], y[-1]


def optimal_control(spec, objective, x, lam):
    """Hamiltonian-minimizing controls at one point; raises on singular arcs."""
    y = pack_aug(spec, x, lam)
    p = spec.params(objective)
    s1, s2 = _kernels.switching_values(spec.model_id, y, p)
    u1, u2 = _kernels.control_law(spec.model_id, y, p,
                                  _kernels.sign_flag(s1),
                                  _kernels.sign_flag(s2))
    if not (math.isfinite(u1) and math.isfinite(u2)):
        raise ValueError(
            f"{spec.name}: singular steering costate or non-positive mass")
    return u1, u2


def switching(spec, objective, x, lam):
    """Switching-function values (s1, s2); s2 is meaningful for quad only."""
    y = pack_aug(spec, x, lam)
    return _kernels.switching_values(spec.model_id, y, spec.params(objective))


def hamiltonian_value(spec, objective, x, lam, u=None):
    """Hamiltonian at one point, for given controls u or the optimal ones."""
    if u is None:
        u = optimal_control(spec, objective, x, lam)
    y = pack_aug(spec, x, lam)
    return _kernels.hamiltonian(spec.model_id, y, spec.params(objective),
                                u[0], u[1])


def state_rhs(spec, objective, x, u1, u2):
    """State derivative and cost integrand for externally chosen controls."""
    y = pack_aug(spec, x, np.zeros(spec.n_x))
    out = np.empty(spec.n_aug)
    _kernels.aug_rhs(spec.model_id, y, spec.params(objective), u1, u2, out)
    return out[: spec.n_x], out[-1]


def hamiltonian_grid(spec, objective, x, lam, u1, u2):
    """H over the tensor grid u1 x u2 by direct numpy broadcasting.

    Deliberately re-derives every model's Hamiltonian rather than calling the
    scalar kernels, so it can serve as an independent oracle for the control
    law.  Rows index u1, columns u2.
    """
    a = objective.alpha
    c1 = spec.max_thrust
    g = spec.gravity
    U1 = np.asarray(u1, dtype=float)[:, None]
    U2 = np.asarray(u2, dtype=float)[None, :]

    if spec.name == "quad":
        xx, zz, vx, vz, th = x
        lx, lz, lvx, lvz, lth = lam
        m = spec.body_mass
        drift = lx * vx + lz * vz - lvz * g
        thrust = (lvx * math.sin(th) + lvz * math.cos(th)) * c1 / m
        cost = (1.0 - a) * (spec.cost_w1 * c1**2 * U1**2
                            + spec.cost_w2 * spec.max_pitch_rate**2 * U2**2) + a
        return (drift + thrust * U1
                + lth * spec.max_pitch_rate * U2 + cost)

    if spec.name == "ssc":
        xx, zz, vx, vz, m = x
        lx, lz, lvx, lvz, lm = lam
        drift = lx * vx + lz * vz - lvz * g
        thrust = (lvx * np.sin(U2) + lvz * np.cos(U2)) * c1 / m
        cost = ((1.0 - a) * spec.cost_w1 * c1**2 * U1**2
                + a * c1 * U1) / spec.exhaust_velocity
        return (drift + thrust * U1
                - lm * c1 * U1 / spec.exhaust_velocity + cost)

    if spec.name == "rwsc":
        xx, zz, vx, vz, th, m = x
        lx, lz, lvx, lvz, lth, lm = lam
        drift = lx * vx + lz * vz - lvz * g
        thrust = (lvx * math.sin(th) + lvz * math.cos(th)) * c1 / m
        cost = ((1.0 - a) * spec.cost_w1 * c1**2 * U1**2
                + a * spec.cost_w2 * c1 * U1) / spec.exhaust_velocity \
            + spec.max_pitch_rate**2 * U2**2
        return (drift + thrust * U1
                - lm * c1 * U1 / spec.exhaust_velocity
                + lth * spec.max_pitch_rate * U2 + cost)

    # tvr: thrust direction tilts with the gimbal, which also torques the body
    xx, zz, vx, vz, th, om, m = x
    lx, lz, lvx, lvz, lth, lom, lm = lam
    drift = lx * vx + lz * vz - lvz * g + lth * om
    ang = th + U2
    thrust = (lvx * np.sin(ang) + lvz * np.cos(ang)) * c1 / m
    torque = -lom * c1 * np.sin(U2) / (spec.moment_arm * m)
    cost = ((1.0 - a) * spec.cost_w1 * c1**2 * U1**2
            + a * c1 * U1) / spec.exhaust_velocity
    return (drift + (thrust + torque) * U1
            - lm * c1 * U1 / spec.exhaust_velocity + cost)


@dataclass
class Propagation:
    """Outcome of one extremal propagation."""

    status: int
    yf: np.ndarray
    traj: DenseTrajectory | None
    events: list

    @property
    def ok(self):
        return self.status == OK


def propagate(spec, objective, x0, lam0, t_f, rtol=1e-10, atol=1e-10,
              dense=False, event_tol=1e-12, max_steps=200_000):
    """Integrate the augmented extremal system over [0, t_f].

    ``dense=False`` returns only the final augmented vector (the fast path
    inside the shooting iteration).  ``dense=True`` runs a sizing pass first,
    then stores every accepted node and its stage derivatives; the repeat is
    bit-identical, so the arrays are allocated exactly.
    """
    p = spec.params(objective)
    y0 = pack_aug(spec, x0, lam0)
    return propagate_raw(spec, p, y0, 0.0, t_f, rtol=rtol, atol=atol,
                         dense=dense, event_tol=event_tol,
                         max_steps=max_steps)


def propagate_raw(spec, p, y0, t0, t1, rtol=1e-10, atol=1e-10,
                  dense=False, event_tol=1e-12, max_steps=200_000):
    """Propagate an augmented vector over [t0, t1] under a packed parameter
    vector, which may hold a forced arc control (see ``control_law``)."""
    n = spec.n_aug
    ev_cap = 512
    ev_t = np.empty(ev_cap)
    ev_w = np.empty(ev_cap, dtype=np.int64)
    yf = np.empty(n)
    d_ts = np.empty(1)
    d_ys = np.empty((1, n))
    d_hs = np.empty(1)
    d_ks = np.empty((1, 7, n))

    status, n_nodes, n_events = _kernels.integrate_model(
        spec.model_id, p, y0, t0, t1, rtol, atol, event_tol, max_steps,
        False, d_ts, d_ys, d_hs, d_ks, ev_t, ev_w, yf)
    events = [(ev_t[i], int(ev_w[i])) for i in range(n_events)]
    if status != OK or not dense:
        return Propagation(status, yf, None, events)

    cap = n_nodes + 8
    ts = np.empty(cap + 1)
    ys = np.empty((cap + 1, n))
    hs = np.empty(cap)
    ks = np.empty((cap, 7, n))
    status, n_nodes, n_events = _kernels.integrate_model(
        spec.model_id, p, y0, t0, t1, rtol, atol, event_tol, max_steps,
        True, ts, ys, hs, ks, ev_t, ev_w, yf)
    events = [(ev_t[i], int(ev_w[i])) for i in range(n_events)]
    traj = DenseTrajectory(ts[:n_nodes].copy(), ys[:n_nodes].copy(),
                           hs[: n_nodes - 1].copy(), ks[: n_nodes - 1].copy(),
                           status=status, events=events)
    return Propagation(status, yf, traj, events)
