"""Rigid-body quadrotor simulator.

World frame is NED (x north, y east, z down), so gravity is +z and rotor
thrust acts along -z of the body frame. The four rotors sit in a plus
configuration at the arm tips (rotor 1 on +x, 2 on +y, 3 on -x, 4 on -y);
diagonal pairs (1,3) and (2,4) share a spin direction so their drag torques
cancel at equal speed. Integration is fixed-step RK4 over the 17-component
state (position, velocity, attitude quaternion, body rates, rotor speeds),
with the quaternion renormalized after every step.

All operations are pure functions of their inputs: same state, same inputs,
same dt give a bit-identical successor state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GRAVITY = 9.81

# Unit arm directions for rotors 1..4 (plus configuration) and the sign of
# the yaw drag torque each rotor applies to the body.
ROTOR_ARM_DIRECTIONS = np.array(
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]]
)
ROTOR_SPIN_SIGNS = np.array([1.0, -1.0, 1.0, -1.0])


class SimulationDiverged(RuntimeError):
    """Raised when integration produces a non-finite state."""


@dataclass(frozen=True)
class QuadParams:
    """Physical constants of the simulated vehicle (SI units)."""

    mass: float = 1.2
    arm_length: float = 0.16
    motor_height: float = 0.05  # carried for completeness; no dynamical role
    inertia_diag: tuple[float, float, float] = (0.0123, 0.0123, 0.0123)
    rotor_inertia: float = 2.7e-5
    thrust_coeff: float = 1.076e-5  # N/(rad/s)^2
    torque_coeff: float = 1.632e-7  # N*m/(rad/s)^2
    omega_min: float = 0.0
    omega_max: float = 900.0
    max_thrust_per_rotor: float = 9.1
    gravity: float = GRAVITY
    motor_time_constant: float = 0.015  # s; 0 means instantaneous response

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if any(i <= 0 for i in self.inertia_diag):
            raise ValueError("inertia_diag entries must be positive")
        if not (self.omega_max > self.omega_min >= 0):
            raise ValueError("need omega_max > omega_min >= 0")
        if self.thrust_coeff * self.omega_max**2 > 1.05 * self.max_thrust_per_rotor:
            raise ValueError(
                "thrust_coeff * omega_max^2 exceeds max_thrust_per_rotor by >5%"
            )
        if self.motor_time_constant < 0:
            raise ValueError("motor_time_constant must be >= 0")

    def hover_speed(self) -> float:
        """Rotor speed at which four equal rotors exactly balance weight."""
        return math.sqrt(self.mass * self.gravity / (4.0 * self.thrust_coeff))


@dataclass(frozen=True)
class FaultMask:
    """Which rotors are dead. A disabled rotor is pinned at zero speed and
    contributes neither thrust nor drag torque."""

    disabled: tuple[bool, bool, bool, bool] = (False, False, False, False)

    @classmethod
    def none(cls) -> "FaultMask":
        return cls()

    @classmethod
    def single(cls, rotor: int) -> "FaultMask":
        """Mask with one dead rotor, 1-based index per the airframe labels."""
        if rotor not in (1, 2, 3, 4):
            raise ValueError(f"rotor index must be 1..4, got {rotor}")
        return cls(tuple(i == rotor - 1 for i in range(4)))

    @property
    def any_disabled(self) -> bool:
        return any(self.disabled)

    def mask_speeds(self, speeds: np.ndarray) -> np.ndarray:
        if not self.any_disabled:
            return speeds
        out = np.array(speeds, dtype=float)
        out[list(self.disabled)] = 0.0
        return out


@dataclass(frozen=True)
class WindModel:
    """Uniform wind with a linear drag force F = k * (wind - velocity).

    Disabled means the force is exactly zero; enabling with zero wind still
    damps vehicle velocity.
    """

    wind_velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    drag_coeff: float = 0.3  # N/(m/s)
    enabled: bool = False

    def force(self, velocity: np.ndarray) -> np.ndarray:
        if not self.enabled:
            return np.zeros(3)
        return self.drag_coeff * (np.asarray(self.wind_velocity) - velocity)


@dataclass
class RigidBodyState:
    """Vehicle state: NED position/velocity, unit quaternion attitude (w,x,y,z),
    body rates, and per-rotor speeds."""

    position: np.ndarray
    velocity: np.ndarray
    attitude: np.ndarray
    body_rates: np.ndarray
    rotor_speeds: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(3)
        self.attitude = np.asarray(self.attitude, dtype=float).reshape(4)
        self.body_rates = np.asarray(self.body_rates, dtype=float).reshape(3)
        self.rotor_speeds = np.asarray(self.rotor_speeds, dtype=float).reshape(4)

    @classmethod
    def hover(cls, params: QuadParams, position=(0.0, 0.0, 0.0)) -> "RigidBodyState":
        """Level hover at `position` with all rotors at hover speed."""
        w = params.hover_speed()
        return cls(
            position=np.asarray(position, dtype=float),
            velocity=np.zeros(3),
            attitude=np.array([1.0, 0.0, 0.0, 0.0]),
            body_rates=np.zeros(3),
            rotor_speeds=np.full(4, w),
        )

    def copy(self) -> "RigidBodyState":
        return RigidBodyState(
            self.position.copy(),
            self.velocity.copy(),
            self.attitude.copy(),
            self.body_rates.copy(),
            self.rotor_speeds.copy(),
        )

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.position, self.velocity, self.attitude, self.body_rates, self.rotor_speeds]
        )

    @classmethod
    def from_vector(cls, y: np.ndarray) -> "RigidBodyState":
        y = np.asarray(y, dtype=float)
        return cls(y[0:3], y[3:6], y[6:10], y[10:13], y[13:17])


def pwm_to_speed_command(pwm, params: QuadParams):
    """Linear map from normalized PWM in [0,1] to rotor speed in rad/s.

    Out-of-range inputs are clamped; callers that care log the clamp.
    """
    return np.clip(pwm, 0.0, 1.0) * params.omega_max


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Quaternion for the yaw-pitch-roll composition R_z(yaw)R_y(pitch)R_x(roll)."""
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    return np.array(
        [
            cy * cp * cr + sy * sp * sr,
            cy * cp * sr - sy * sp * cr,
            cy * sp * cr + sy * cp * sr,
            sy * cp * cr - cy * sp * sr,
        ]
    )


def rotation_matrix(attitude: np.ndarray) -> np.ndarray:
    """Body-to-world rotation matrix of a quaternion (w,x,y,z).

    Non-unit input is normalized first. The result equals the yaw-pitch-roll
    product R_z * R_y * R_x of the equivalent Euler angles.
    """
    q = np.asarray(attitude, dtype=float)
    n = math.sqrt(float(q @ q))
    if n == 0.0 or not math.isfinite(n):
        raise ValueError("attitude quaternion has zero or non-finite norm")
    w, x, y, z = q / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotor_wrench(
    rotor_speeds: np.ndarray, params: QuadParams, fault: FaultMask | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Body-frame force and torque produced by the rotors.

    Thrust per rotor is c_T * w^2 along -z; yaw drag torque is the signed sum
    of c_Q * w^2; roll/pitch torques come from the thrusts acting at the arm
    tips. Disabled rotors contribute nothing.
    """
    speeds = np.asarray(rotor_speeds, dtype=float)
    if fault is not None:
        speeds = fault.mask_speeds(speeds)
    sq = speeds * speeds
    f = params.thrust_coeff * sq  # upward thrust magnitudes
    l = params.arm_length
    force = np.array([0.0, 0.0, -float(f.sum())])
    torque = np.array(
        [
            l * (f[3] - f[1]),
            l * (f[0] - f[2]),
            params.torque_coeff * float(ROTOR_SPIN_SIGNS @ sq),
        ]
    )
    return force, torque


def step(
    state: RigidBodyState,
    pwm: np.ndarray,
    params: QuadParams,
    fault: FaultMask | None = None,
    wind: WindModel | None = None,
    dt: float = 0.01,
) -> RigidBodyState:
    """Advance the vehicle one control step of length dt.

    PWM commands are clamped to [0,1] and mapped linearly to rotor speed
    setpoints; rotor speeds follow a first-order lag toward the setpoint
    (instantaneous when motor_time_constant is 0). Newton-Euler equations
    with gravity and optional wind are integrated with RK4 and the attitude
    quaternion is renormalized.

    Raises SimulationDiverged if the resulting state is non-finite.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    pwm = np.clip(np.asarray(pwm, dtype=float).reshape(4), 0.0, 1.0)
    cmd = pwm * params.omega_max
    if fault is not None:
        cmd = fault.mask_speeds(cmd)

    speeds0 = state.rotor_speeds
    if fault is not None:
        speeds0 = fault.mask_speeds(speeds0)
    if params.motor_time_constant == 0.0:
        speeds0 = cmd.copy()

    inertia = np.asarray(params.inertia_diag, dtype=float)
    inv_mass = 1.0 / params.mass
    tau_m = params.motor_time_constant
    disabled = np.array(fault.disabled) if fault is not None else None

    def deriv(y: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(y)):
            raise SimulationDiverged("non-finite intermediate state")
        vel = y[3:6]
        q = y[6:10]
        rates = y[10:13]
        sp = y[13:17]
        if disabled is not None:
            sp = np.where(disabled, 0.0, sp)
        force, torque = rotor_wrench(sp, params, None)
        rot = rotation_matrix(q)
        acc = rot @ force * inv_mass
        acc[2] += params.gravity
        if wind is not None and wind.enabled:
            acc = acc + wind.force(vel) * inv_mass
        qdot = 0.5 * quat_multiply(q, np.array([0.0, rates[0], rates[1], rates[2]]))
        rates_dot = (torque - np.cross(rates, inertia * rates)) / inertia
        if tau_m > 0.0:
            sp_dot = (cmd - sp) / tau_m
            if disabled is not None:
                sp_dot = np.where(disabled, 0.0, sp_dot)
        else:
            sp_dot = np.zeros(4)
        return np.concatenate([vel, acc, qdot, rates_dot, sp_dot])

    y0 = np.concatenate([state.position, state.velocity, state.attitude, state.body_rates, speeds0])
    with np.errstate(over="ignore", invalid="ignore"):  # overflow = divergence, detected below
        k1 = deriv(y0)
        k2 = deriv(y0 + 0.5 * dt * k1)
        k3 = deriv(y0 + 0.5 * dt * k2)
        k4 = deriv(y0 + dt * k3)
        y1 = y0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    if not np.all(np.isfinite(y1)):
        raise SimulationDiverged("non-finite state after integration step")

    q = y1[6:10]
    y1[6:10] = q / math.sqrt(float(q @ q))
    sp = np.clip(y1[13:17], params.omega_min, params.omega_max)
    if disabled is not None:
        sp = np.where(disabled, 0.0, sp)
    y1[13:17] = sp
    return RigidBodyState.from_vector(y1)
