"""Landing-problem definitions.

Four planar models share one framework: a quadcopter-class vehicle with fixed
mass and attitude-rate control (``quad``), a simple lunar lander thrusting
along a freely chosen direction (``ssc``), a lander whose attitude is a state
driven by a reaction wheel (``rwsc``), and a tall rocket steered by gimballing
the engine about its base (``tvr``).  Each model carries its dynamics
constants, control bounds, the initial-condition box used for data generation,
landing tolerances, and the scaling used to keep the shooting unknowns O(1).

State layouts (position in m, velocity in m/s, angles in rad, mass in kg):

==========  ==================================
``quad``    x, z, vx, vz, theta
``ssc``     x, z, vx, vz, m
``rwsc``    x, z, vx, vz, theta, m
``tvr``     x, z, vx, vz, theta, omega, m
==========  ==================================

The two controls are a throttle ``u1`` and a steering input ``u2`` whose
meaning is model specific: pitch-rate command (quad), thrust angle (ssc),
wheel torque command (rwsc), gimbal angle (tvr).

The running cost is a homotopy in ``alpha`` from a quadratic penalty on the
controls (``alpha = 0``) to the discrete-valued objective at ``alpha = 1``:
minimum time for the fixed-mass quadcopter, minimum propellant for the
variable-mass landers.
"""

import math
from dataclasses import dataclass, field

import numpy as np

DEG = math.pi / 180.0

MODEL_IDS = {"quad": 0, "ssc": 1, "rwsc": 2, "tvr": 3}

# Lunar surface gravity and the exhaust velocity of a 311 s vacuum engine.
MOON_G = 1.6229
EXHAUST_V = 311.0 * 9.81


@dataclass(frozen=True)
class InitArea:
    """Axis-aligned box of initial states (one row per state component)."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        assert self.lo.shape == self.hi.shape
        assert np.all(self.hi >= self.lo)

    def sample(self, rng):
        return rng.uniform(self.lo, self.hi)

    def contains(self, x):
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    @property
    def span(self):
        return self.hi - self.lo


@dataclass(frozen=True)
class ToleranceSpec:
    """Landing-success tolerances.  Angles stored in radians; None = unused."""

    tau_r: float
    tau_v: float
    tau_theta: float | None = None
    tau_omega: float | None = None


@dataclass(frozen=True)
class Objective:
    """Point on the control-cost homotopy.

    ``alpha = 0`` is the quadratic-control problem, ``alpha = 1`` the
    discrete-valued one (time- or mass-optimal depending on the model).
    ``bang`` selects the exact switching-function control law, valid only at
    ``alpha = 1``.
    """

    alpha: float
    bang: bool = False

    def __post_init__(self):
        assert 0.0 <= self.alpha <= 1.0
        if self.bang:
            assert self.alpha == 1.0, "switching control law needs alpha = 1"

    @classmethod
    def quadratic(cls):
        return cls(0.0)

    @classmethod
    def terminal(cls):
        """The alpha = 1 objective with exact bang-bang switching."""
        return cls(1.0, bang=True)


# Indices into the packed parameter vector consumed by the numeric kernels.
IP_THRUST = 0      # max thrust [N]
IP_VEX = 1         # exhaust velocity [m/s] (0 for fixed-mass models)
IP_RATE = 2        # max pitch rate [rad/s] (quad) / wheel gain (rwsc)
IP_ARM = 3         # engine-to-CoM distance [m] (tvr)
IP_GIMBAL = 4      # max gimbal deflection [rad] (tvr)
IP_MASS = 5        # fixed body mass [kg] (quad)
IP_GRAV = 6        # gravity [m/s^2], acts along -z
IP_W1 = 7          # quadratic cost weight on u1
IP_W2 = 8          # quadratic cost weight on u2
IP_U1LO = 9
IP_U1HI = 10
IP_U2LO = 11
IP_U2HI = 12
IP_ALPHA = 13
IP_BANG = 14
IP_FORCE_U1 = 15   # arc integration: throttle held at this value (nan = pointwise law)
IP_U2MODE = 16     # second channel: 0 pointwise law, 1 held constant, 2 singular-arc feedback
IP_FORCE_U2 = 17   # the constant for mode 1
N_PARAMS = 18


@dataclass(frozen=True)
class ModelSpec:
    """Everything the numeric layers need to know about one landing model."""

    name: str
    model_id: int
    state_names: tuple
    max_thrust: float
    gravity: float
    cost_w1: float
    cost_w2: float
    u1_bounds: tuple
    u2_bounds: tuple
    exhaust_velocity: float = 0.0
    max_pitch_rate: float = 0.0
    moment_arm: float = 0.0
    max_gimbal: float = 0.0
    body_mass: float = 0.0
    init_area: InitArea = None
    tolerances: ToleranceSpec = None
    # Target state values at touchdown for the components that are pinned;
    # mass (and, for ssc, attitude) is left free.
    target: dict = field(default_factory=dict)
    # Nondimensionalization: length, velocity, mass, time references plus a
    # cost reference chosen so converged costates are O(1) when divided by
    # costate_ref.  Residuals are scaled by res_scale componentwise.
    length_ref: float = 1.0
    velocity_ref: float = 1.0
    mass_ref: float = 1.0
    time_ref: float = 1.0
    cost_ref: float = 1.0
    costate_ref: np.ndarray = None
    tf_guess: tuple = (1.0, 10.0)

    @property
    def n_x(self):
        return len(self.state_names)

    @property
    def n_aug(self):
        # state + costates + running cost
        return 2 * self.n_x + 1

    @property
    def has_mass(self):
        return "m" in self.state_names

    def __post_init__(self):
        assert self.max_thrust > 0 and self.gravity > 0
        assert self.u1_bounds[0] < self.u1_bounds[1]
        assert self.u2_bounds[0] < self.u2_bounds[1]
        assert self.costate_ref.shape == (self.n_x,)
        assert np.all(self.costate_ref > 0)

    def params(self, objective):
        """Pack constants + objective into the flat vector the kernels take."""
        p = np.zeros(N_PARAMS)
        p[IP_THRUST] = self.max_thrust
        p[IP_VEX] = self.exhaust_velocity
        p[IP_RATE] = self.max_pitch_rate
        p[IP_ARM] = self.moment_arm
        p[IP_GIMBAL] = self.max_gimbal
        p[IP_MASS] = self.body_mass
        p[IP_GRAV] = self.gravity
        p[IP_W1] = self.cost_w1
        p[IP_W2] = self.cost_w2
        p[IP_U1LO], p[IP_U1HI] = self.u1_bounds
        p[IP_U2LO], p[IP_U2HI] = self.u2_bounds
        p[IP_ALPHA] = objective.alpha
        p[IP_BANG] = 1.0 if objective.bang else 0.0
        p[IP_FORCE_U1] = np.nan
        return p

    def state_scale(self):
        """Per-component reference magnitudes of the state vector."""
        s = np.empty(self.n_x)
        for i, nm in enumerate(self.state_names):
            if nm in ("x", "z"):
                s[i] = self.length_ref
            elif nm in ("vx", "vz"):
                s[i] = self.velocity_ref
            elif nm == "m":
                s[i] = self.mass_ref
            else:  # angles and angular rate are already O(1)
                s[i] = 1.0
        return s

    def target_vector(self):
        """Target values for pinned components, NaN where free."""
        t = np.full(self.n_x, np.nan)
        for i, nm in enumerate(self.state_names):
            if nm in self.target:
                t[i] = self.target[nm]
        return t


def _quad():
    # Fixed-mass quadcopter: thrust along the body axis, direct pitch-rate
    # control, thrust-to-weight up to ~2 at m = 1 kg.
    names = ("x", "z", "vx", "vz", "theta")
    area = InitArea(
        lo=np.array([-5.0, 2.5, -1.0, -1.0, -math.pi / 10]),
        hi=np.array([5.0, 20.0, 1.0, 1.0, math.pi / 10]),
    )
    return ModelSpec(
        name="quad",
        model_id=MODEL_IDS["quad"],
        state_names=names,
        max_thrust=20.0,
        gravity=9.81,
        cost_w1=1.0,
        cost_w2=1.0,
        u1_bounds=(0.05, 1.0),
        u2_bounds=(-1.0, 1.0),
        max_pitch_rate=2.0,
        body_mass=1.0,
        init_area=area,
        tolerances=ToleranceSpec(tau_r=0.1, tau_v=0.1, tau_theta=1.0 * DEG),
        target={"x": 0.0, "z": 0.0, "vx": 0.0, "vz": 0.0, "theta": 0.0},
        length_ref=10.0,
        velocity_ref=10.0,
        time_ref=10.0,
        # Typical converged quadratic-cost values are a few hundred; with
        # this reference the hover costate (velocity component ~ -19.6 per
        # unit cost rate) lands near -1 in scaled units.
        cost_ref=200.0,
        costate_ref=np.array([20.0, 20.0, 20.0, 20.0, 50.0]),
        tf_guess=(1.0, 10.0),
    )


def _ssc():
    # Simple lunar lander: thrust direction is itself the steering control,
    # mass depletes with throttle.  u2 is the thrust angle from vertical.
    names = ("x", "z", "vx", "vz", "m")
    area = InitArea(
        lo=np.array([-200.0, 500.0, -10.0, -30.0, 8000.0]),
        hi=np.array([200.0, 2000.0, 10.0, 10.0, 12000.0]),
    )
    return ModelSpec(
        name="ssc",
        model_id=MODEL_IDS["ssc"],
        state_names=names,
        max_thrust=44000.0,
        gravity=MOON_G,
        cost_w1=1.0,
        cost_w2=1.0,
        u1_bounds=(0.0, 1.0),
        u2_bounds=(-math.pi, math.pi),
        exhaust_velocity=EXHAUST_V,
        init_area=area,
        tolerances=ToleranceSpec(tau_r=10.0, tau_v=0.7),
        target={"x": 0.0, "z": 0.0, "vx": 0.0, "vz": 0.0},
        length_ref=1000.0,
        velocity_ref=100.0,
        mass_ref=10000.0,
        time_ref=100.0,
        cost_ref=2.0e7,
        costate_ref=np.array([2.0e4, 2.0e4, 2.0e5, 2.0e5, 2.0e3]),
        tf_guess=(20.0, 120.0),
    )


def _rwsc():
    # Reaction-wheel lander: thrust fixed along the body axis, attitude is a
    # state slewed at up to 4 deg/s, wheel usage always penalized
    # quadratically so the attitude channel stays smooth at alpha = 1.
    names = ("x", "z", "vx", "vz", "theta", "m")
    area = InitArea(
        lo=np.array([-200.0, 500.0, -10.0, -30.0, -math.pi / 20, 8000.0]),
        hi=np.array([200.0, 2000.0, 10.0, 10.0, math.pi / 20, 12000.0]),
    )
    return ModelSpec(
        name="rwsc",
        model_id=MODEL_IDS["rwsc"],
        state_names=names,
        max_thrust=44000.0,
        gravity=MOON_G,
        cost_w1=1.5e-6,
        cost_w2=1.5e-2,
        u1_bounds=(0.0, 1.0),
        u2_bounds=(-1.0, 1.0),
        exhaust_velocity=EXHAUST_V,
        max_pitch_rate=0.0698,
        init_area=area,
        tolerances=ToleranceSpec(tau_r=10.0, tau_v=0.7, tau_theta=1.0 * DEG),
        target={"x": 0.0, "z": 0.0, "vx": 0.0, "vz": 0.0, "theta": 0.0},
        length_ref=1000.0,
        velocity_ref=100.0,
        mass_ref=10000.0,
        time_ref=100.0,
        # The 1.5e-6 thrust weight makes this cost (and its costates) far
        # smaller than the ssc ones: hover throttle 0.37 needs
        # lambda_v ~ m/vex * 2*w1*thrust*u1 ~ 0.15.
        cost_ref=20.0,
        costate_ref=np.array([0.01, 0.01, 0.2, 0.2, 0.3, 0.1]),
        tf_guess=(20.0, 120.0),
    )


def _tvr(thrust=44000.0, arm=3.0):
    # Thrust-vectoring rocket: engine gimballed +-10 deg about the base of a
    # tall body, so steering torque and lateral thrust are coupled.  Starts
    # near vertical descent.
    names = ("x", "z", "vx", "vz", "theta", "omega", "m")
    area = InitArea(
        lo=np.array([-10.0, 500.0, -0.5, -40.0, -1e-3, -1e-4, 8000.0]),
        hi=np.array([10.0, 2000.0, 0.5, 0.0, 1e-3, 1e-4, 12000.0]),
    )
    return ModelSpec(
        name="tvr",
        model_id=MODEL_IDS["tvr"],
        state_names=names,
        max_thrust=thrust,
        gravity=MOON_G,
        cost_w1=1.0,
        cost_w2=1.0,
        u1_bounds=(0.0, 1.0),
        u2_bounds=(-10.0 * DEG, 10.0 * DEG),
        exhaust_velocity=EXHAUST_V,
        moment_arm=arm,
        max_gimbal=10.0 * DEG,
        init_area=area,
        tolerances=ToleranceSpec(
            tau_r=10.0, tau_v=0.7, tau_theta=0.02 * DEG, tau_omega=0.004 * DEG
        ),
        target={
            "x": 0.0, "z": 0.0, "vx": 0.0, "vz": 0.0, "theta": 0.0, "omega": 0.0,
        },
        length_ref=1000.0,
        velocity_ref=100.0,
        mass_ref=10000.0,
        time_ref=100.0,
        cost_ref=2.0e7,
        costate_ref=np.array([2.0e4, 2.0e4, 2.0e5, 2.0e5, 2.0e5, 2.0e4, 2.0e3]),
        tf_guess=(20.0, 120.0),
    )


_REGISTRY = {}


def get_model(name, **kwargs):
    """Return the ModelSpec for ``name`` (quad | ssc | rwsc | tvr).

    ``tvr`` accepts ``thrust`` and ``arm`` overrides; the default is the
    44 kN lander engine on a 3 m arm.
    """
    name = name.lower()
    if name == "tvr" and kwargs:
        return _tvr(**kwargs)
    if kwargs:
        raise ValueError(f"model {name!r} takes no overrides")
    if name not in _REGISTRY:
        if name == "quad":
            _REGISTRY[name] = _quad()
        elif name == "ssc":
            _REGISTRY[name] = _ssc()
        elif name == "rwsc":
            _REGISTRY[name] = _rwsc()
        elif name == "tvr":
            _REGISTRY[name] = _tvr()
        else:
            raise KeyError(f"unknown model {name!r}")
    return _REGISTRY[name]


def objective_for(spec, kind):
    """Map a CLI objective name (qc | toc | moc) to an Objective."""
    kind = kind.lower()
    if kind == "qc":
        return Objective.quadratic()
    if kind == "toc":
        if spec.has_mass:
            raise ValueError("time-optimal objective applies to quad only")
        return Objective.terminal()
    if kind == "moc":
        if not spec.has_mass:
            raise ValueError("mass-optimal objective needs a mass state")
        return Objective.terminal()
    raise ValueError(f"unknown objective {kind!r}")


def objective_name(spec, objective):
    if objective.alpha == 0.0:
        return "qc"
    if objective.alpha == 1.0:
        return "moc" if spec.has_mass else "toc"
    return f"alpha{objective.alpha:g}"
