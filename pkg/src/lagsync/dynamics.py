"""Closed-form Lagrangian robot models.

Two plant families are provided:

``two-link-arm``
    Planar two-link manipulator moving in a horizontal plane, with a load
    rigidly attached to the second link. Linear in the four base parameters
    ``a = (a1, a2, a3, a4)``. No gravity acts in the plane of motion.
``cart-double-pendulum``
    Cart on a rail carrying a double inverted pendulum, fully actuated.
    Coordinates are ``q = (x, theta1, theta2)`` with absolute link angles
    measured from the upright. Linear in six base parameters.

The Coriolis matrix is built from Christoffel symbols, so ``Mdot - 2C`` is
skew-symmetric for both models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml

from . import kernels

GRAVITY = 9.81

DATA_DIR = Path(__file__).parent / "data"


class ContractViolation(ValueError):
    """Input shapes or values do not satisfy an operation's preconditions."""


class UnsupportedCapability(NotImplementedError):
    """The model does not provide the requested evaluation."""


_KIND_CODES = {
    "two-link-arm": kernels.ARM2,
    "cart-double-pendulum": kernels.CARTPEND3,
}

# Defaults for the arm are the textbook example values; the cart values are a
# documented stand-in (the original plant data is not published).
DEFAULT_PHYSICAL = {
    "two-link-arm": {
        "m1": 1.0, "l1": 1.0, "me": 2.0, "delta_e": math.radians(30.0),
        "I1": 0.12, "lc1": 0.5, "Ie": 0.25, "lce": 0.6,
    },
    "cart-double-pendulum": {
        "m0": 2.0, "m1": 1.0, "m2": 1.0, "l1": 1.0,
        "lc1": 0.5, "lc2": 0.5, "I1": 1.0 / 12.0, "I2": 1.0 / 12.0,
    },
}

# Parameters that scale with a uniform change of mass density.
_MASS_LIKE = {
    "two-link-arm": ("m1", "me", "I1", "Ie"),
    "cart-double-pendulum": ("m0", "m1", "m2", "I1", "I2"),
}

PARAM_NAMES = {
    "two-link-arm": ("a1", "a2", "a3", "a4"),
    "cart-double-pendulum": ("A0", "d1", "d2", "J1", "d3", "J2"),
}


def _base_parameters(kind, ph):
    if kind == "two-link-arm":
        a1 = (ph["I1"] + ph["m1"] * ph["lc1"] ** 2 + ph["Ie"]
              + ph["me"] * ph["lce"] ** 2 + ph["me"] * ph["l1"] ** 2)
        a2 = ph["Ie"] + ph["me"] * ph["lce"] ** 2
        a3 = ph["me"] * ph["l1"] * ph["lce"] * math.cos(ph["delta_e"])
        a4 = ph["me"] * ph["l1"] * ph["lce"] * math.sin(ph["delta_e"])
        return np.array([a1, a2, a3, a4])
    A0 = ph["m0"] + ph["m1"] + ph["m2"]
    d1 = ph["m1"] * ph["lc1"] + ph["m2"] * ph["l1"]
    d2 = ph["m2"] * ph["lc2"]
    J1 = ph["m1"] * ph["lc1"] ** 2 + ph["m2"] * ph["l1"] ** 2 + ph["I1"]
    d3 = ph["m2"] * ph["l1"] * ph["lc2"]
    J2 = ph["m2"] * ph["lc2"] ** 2 + ph["I2"]
    return np.array([A0, d1, d2, J1, d3, J2])


@dataclass(frozen=True)
class RobotState:
    """Joint positions and velocities of one robot."""

    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        qdot = np.asarray(self.qdot, dtype=float)
        if q.shape != qdot.shape or q.ndim != 1:
            raise ContractViolation(
                f"q and qdot must be equal-length vectors, got {q.shape} and {qdot.shape}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qdot)


@dataclass(frozen=True, eq=False)
class LagrangianModel:
    """A rigid-body plant with closed-form M, C, g and a regressor.

    Parameters
    ----------
    kind : str
        ``"two-link-arm"`` or ``"cart-double-pendulum"``.
    physical : mapping
        Named SI parameters (masses, lengths, inertias). Missing names take
        the defaults from ``DEFAULT_PHYSICAL``.
    gravity_on : bool
        Whether gravity acts on the generalized coordinates.
    scale : float
        Multiplies every mass and inertia, which scales the base parameter
        vector by the same factor.
    eps_M : float, optional
        Declared lower bound on the smallest eigenvalue of M(q). Estimated
        on a dense configuration grid when omitted.
    """

    kind: str
    physical: Mapping[str, float] = field(default_factory=dict)
    gravity_on: bool = False
    scale: float = 1.0
    eps_M: float | None = None
    regressor_enabled: bool = True

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ContractViolation(f"unknown model kind {self.kind!r}")
        ph = dict(DEFAULT_PHYSICAL[self.kind])
        unknown = set(self.physical) - set(ph)
        if unknown:
            raise ContractViolation(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        ph.update({k: float(v) for k, v in self.physical.items()})
        if self.kind == "two-link-arm" and self.gravity_on:
            raise ContractViolation("two-link-arm moves in a horizontal plane; gravity_on must be false")
        if not self.scale > 0:
            raise ContractViolation("scale must be positive")
        object.__setattr__(self, "physical", ph)

    @property
    def code(self) -> int:
        return _KIND_CODES[self.kind]

    @property
    def n(self) -> int:
        return kernels.NDOF[self.code]

    @property
    def grav(self) -> float:
        return GRAVITY if self.gravity_on else 0.0

    @property
    def tag(self) -> str:
        return self.kind if self.scale == 1.0 else f"{self.kind}x{self.scale:g}"

    @cached_property
    def a(self) -> np.ndarray:
        """True base parameter vector."""
        a = self.scale * _base_parameters(self.kind, self.physical)
        a.flags.writeable = False
        return a

    @cached_property
    def eps_M_effective(self) -> float:
        if self.eps_M is not None:
            return float(self.eps_M)
        return 0.99 * min_mass_eigenvalue(self)

    def scaled(self, factor: float) -> "LagrangianModel":
        """Copy with every mass and inertia multiplied by ``factor``."""
        return LagrangianModel(self.kind, self.physical, self.gravity_on,
                               self.scale * factor, None, self.regressor_enabled)

    def with_gravity(self, on: bool) -> "LagrangianModel":
        return LagrangianModel(self.kind, self.physical, on, self.scale,
                               self.eps_M, self.regressor_enabled)

    # convenience single-robot evaluators
    def mass_matrix(self, q):
        return model_terms(self, q, np.zeros(self.n))[0]

    def coriolis_matrix(self, q, qdot):
        return model_terms(self, q, qdot)[1]

    def gravity(self, q):
        return model_terms(self, q, np.zeros(self.n))[2]

    def regressor(self, q, qdot, qr_dot, qr_ddot):
        return regressor(self, q, qdot, qr_dot, qr_ddot)

    def batch_args(self, p: int):
        """Parameter and gravity arrays for a batch of ``p`` copies."""
        return np.tile(self.a, (p, 1)), np.full(p, self.grav)


def _vec(x, n, name):
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ContractViolation(f"{name} must have shape ({n},), got {x.shape}")
    return x


def model_terms(model: LagrangianModel, q, qdot):
    """Return ``(M, C, g)`` at one configuration.

    ``C`` uses the Christoffel-symbol form, so ``C(q, 0) = 0`` and
    ``Mdot - 2C`` is skew-symmetric.
    """
    n = model.n
    q = _vec(q, n, "q")
    qdot = _vec(qdot, n, "qdot")
    a, g = model.batch_args(1)
    M, C, gv = kernels.mcg(model.code, a, g, q[None], qdot[None])
    return M[0], C[0], gv[0]


def forward_dynamics(model: LagrangianModel, state: RobotState, tau):
    """Joint accelerations produced by the generalized force ``tau``."""
    n = model.n
    q = _vec(state.q, n, "q")
    qdot = _vec(state.qdot, n, "qdot")
    tau = _vec(tau, n, "tau")
    if not np.all(np.isfinite(tau)):
        raise ContractViolation("tau must be finite")
    a, g = model.batch_args(1)
    return kernels.forward_dynamics(model.code, a, g, q[None], qdot[None], tau[None])[0]


def inverse_dynamics(model: LagrangianModel, q, qdot, v, acc):
    """``M(q) acc + C(q, qdot) v + g(q)``."""
    n = model.n
    args = [_vec(x, n, nm) for x, nm in ((q, "q"), (qdot, "qdot"), (v, "v"), (acc, "acc"))]
    a, g = model.batch_args(1)
    return kernels.inverse_dynamics(model.code, a, g, *(x[None] for x in args))[0]


def regressor(model: LagrangianModel, q, qdot, qr_dot, qr_ddot):
    """Matrix ``Y`` (n x k) with ``Y @ model.a == M qr_ddot + C qr_dot + g``."""
    if not model.regressor_enabled:
        raise UnsupportedCapability(f"{model.tag} does not expose a regressor")
    n = model.n
    args = [_vec(x, n, nm) for x, nm in
            ((q, "q"), (qdot, "qdot"), (qr_dot, "qr_dot"), (qr_ddot, "qr_ddot"))]
    return kernels.regressor(model.code, np.array([model.grav]), *(x[None] for x in args))[0]


def potential_energy(model: LagrangianModel, q) -> float:
    q = _vec(q, model.n, "q")
    if model.kind == "cart-double-pendulum":
        d1, d2 = model.a[1], model.a[2]
        return model.grav * (d1 * math.cos(q[1]) + d2 * math.cos(q[2]))
    return 0.0


def energy(model: LagrangianModel, q, qdot) -> float:
    """Total mechanical energy (kinetic plus gravitational)."""
    M = model.mass_matrix(q)
    qdot = _vec(qdot, model.n, "qdot")
    return 0.5 * qdot @ M @ qdot + potential_energy(model, q)


def min_mass_eigenvalue(model: LagrangianModel, resolution: int = 181) -> float:
    """Smallest eigenvalue of M(q) over a dense grid of the angle coordinates."""
    th = np.linspace(-np.pi, np.pi, resolution)
    if model.kind == "two-link-arm":
        q = np.column_stack([np.zeros_like(th), th])
    else:
        t1, t2 = np.meshgrid(th, th, indexing="ij")
        q = np.column_stack([np.zeros(t1.size), t1.ravel(), t2.ravel()])
    a, g = model.batch_args(len(q))
    M = kernels.mcg(model.code, a, g, q, np.zeros_like(q))[0]
    return float(np.linalg.eigvalsh(M)[:, 0].min())


def model_from_dict(spec: Mapping) -> LagrangianModel:
    """Build a model from a parameter-file mapping.

    Keys: ``kind``, ``n``, ``params`` (named SI values), ``gravity_on``, and
    optionally ``scale`` and ``eps_M``.
    """
    if "file" in spec:
        base = load_model_file(spec["file"])
        if "scale" in spec:
            base = base.scaled(float(spec["scale"]))
        if "gravity_on" in spec:
            base = base.with_gravity(bool(spec["gravity_on"]))
        return base
    kind = spec.get("kind")
    if kind not in _KIND_CODES:
        raise ContractViolation(f"unknown model kind {kind!r}")
    model = LagrangianModel(
        kind=kind,
        physical=spec.get("params", {}) or {},
        gravity_on=bool(spec.get("gravity_on", kind == "cart-double-pendulum")),
        scale=float(spec.get("scale", 1.0)),
        eps_M=spec.get("eps_M"),
    )
    if "n" in spec and int(spec["n"]) != model.n:
        raise ContractViolation(f"{kind} has n={model.n}, file declares n={spec['n']}")
    return model


def load_model_file(path) -> LagrangianModel:
    """Load a model parameter file. Bare names resolve to the bundled data."""
    p = Path(path)
    if not p.exists() and (DATA_DIR / p.name).exists():
        p = DATA_DIR / p.name
    with open(p) as fh:
        return model_from_dict(yaml.safe_load(fh))


def default_model(kind: str, **kwargs) -> LagrangianModel:
    fname = {"two-link-arm": "two_link_arm.yaml",
             "cart-double-pendulum": "cart_double_pendulum.yaml"}[kind]
    model = load_model_file(DATA_DIR / fname)
    if kwargs:
        model = LagrangianModel(kind, kwargs.pop("physical", model.physical),
                                kwargs.pop("gravity_on", model.gravity_on),
                                kwargs.pop("scale", model.scale), model.eps_M)
    return model
