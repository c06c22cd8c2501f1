"""Control environment around the rigid-body simulator.

Builds the 22-element observation (position error, flattened rotation
matrix, linear and angular velocity, rotor speeds), evaluates the
position/smoothness reward, maps policy actions to bounded PWM increments,
tracks goal trajectories, and manages episode termination: crash when the
position error leaves the divergence bound, time limit at the horizon, and
an optional motor-cutoff latch used by the landing maneuver.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import dynamics
from .dynamics import FaultMask, QuadParams, RigidBodyState, SimulationDiverged, WindModel

log = logging.getLogger(__name__)

OBS_SIZE = 22
MAX_PWM_DELTA = 0.15

# Fixed diagonal scaling applied by the learner in front of its networks
# (never to the observation contract itself): position error and velocities
# to roughly unit range at the divergence bound, body rates to unit range at
# fast spin, rotor speeds to [0,1].
OBS_SCALE = np.concatenate(
    [
        np.full(3, 0.2),  # pos_error
        np.ones(9),  # rotation matrix entries
        np.full(3, 0.2),  # lin_vel
        np.full(3, 0.1),  # ang_vel
        np.full(4, 1.0 / 900.0),  # rotor speeds
    ]
)


@dataclass(frozen=True)
class RewardConfig:
    c1: float = 10.0  # position term weight
    c2: float = 0.2  # position error scale, 1/m
    c3: float = 10.0  # rotor speed-change divisor, rad/s

    def __post_init__(self):
        if self.c1 <= 0 or self.c2 <= 0 or self.c3 <= 0:
            raise ValueError("reward constants must be positive")


@dataclass
class Observation:
    """The 22-entry policy input, in fixed block order."""

    pos_error: np.ndarray  # goal - position, m
    rotation: np.ndarray  # row-major flattened body-to-world matrix
    lin_vel: np.ndarray  # m/s, world frame
    ang_vel: np.ndarray  # rad/s, body frame
    rotor_speeds: np.ndarray  # rad/s

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.pos_error, self.rotation, self.lin_vel, self.ang_vel, self.rotor_speeds]
        )

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "Observation":
        v = np.asarray(v, dtype=float)
        if v.shape != (OBS_SIZE,):
            raise ValueError(f"observation must have {OBS_SIZE} entries, got {v.shape}")
        return cls(v[0:3], v[3:12], v[12:15], v[15:18], v[18:22])


def build_observation(state: RigidBodyState, goal: np.ndarray) -> Observation:
    rot = dynamics.rotation_matrix(state.attitude)
    return Observation(
        pos_error=np.asarray(goal, dtype=float) - state.position,
        rotation=rot.reshape(9),
        lin_vel=state.velocity.copy(),
        ang_vel=state.body_rates.copy(),
        rotor_speeds=state.rotor_speeds.copy(),
    )


def reward(
    prev_speeds: np.ndarray,
    curr_speeds: np.ndarray,
    pos_error: np.ndarray,
    cfg: RewardConfig = RewardConfig(),
) -> float:
    """Position-holding term plus rotor smoothness penalty; never positive."""
    err = math.sqrt(float(np.dot(pos_error, pos_error)))
    r1 = -cfg.c1 * math.tanh(cfg.c2 * err)
    r2 = -float(np.abs(np.asarray(prev_speeds) - np.asarray(curr_speeds)).sum()) / cfg.c3
    return r1 + r2


def apply_action(action: np.ndarray, current_pwm: np.ndarray) -> np.ndarray:
    """Bounded PWM increment: each action component in [-1,1] moves its PWM
    by at most MAX_PWM_DELTA, and the result stays in [0,1]."""
    a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
    return np.clip(np.asarray(current_pwm, dtype=float) + MAX_PWM_DELTA * a, 0.0, 1.0)


@dataclass(frozen=True)
class GoalTrajectory:
    """Goal position over time. Every variant holds the start point until
    stabilize_time, then moves continuously, beginning at the start point."""

    kind: str = "stationary"
    point: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rate: float = 0.1  # m/s, descent
    floor: float = 1.5  # m below start, descent cap
    radius: float = 1.0  # m, circles and saddle
    period: float = 20.0  # s, circles and saddle
    amplitude: float = 0.5  # m, saddle altitude swing
    stabilize_time: float = 5.0

    KINDS = ("stationary", "descent", "circle-xy", "circle-yz", "saddle")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}; one of {self.KINDS}")

    @classmethod
    def stationary(cls, point=(0.0, 0.0, 0.0), stabilize_time=5.0) -> "GoalTrajectory":
        return cls(kind="stationary", point=tuple(point), stabilize_time=stabilize_time)

    @classmethod
    def descent(cls, rate=0.1, floor=1.5, stabilize_time=5.0) -> "GoalTrajectory":
        return cls(kind="descent", rate=rate, floor=floor, stabilize_time=stabilize_time)

    @classmethod
    def circle_xy(cls, radius=1.0, period=20.0, stabilize_time=5.0) -> "GoalTrajectory":
        return cls(kind="circle-xy", radius=radius, period=period, stabilize_time=stabilize_time)

    @classmethod
    def circle_yz(cls, radius=1.0, period=20.0, stabilize_time=5.0) -> "GoalTrajectory":
        return cls(kind="circle-yz", radius=radius, period=period, stabilize_time=stabilize_time)

    @classmethod
    def saddle(cls, radius=1.0, amplitude=0.5, period=20.0, stabilize_time=5.0) -> "GoalTrajectory":
        return cls(
            kind="saddle",
            radius=radius,
            amplitude=amplitude,
            period=period,
            stabilize_time=stabilize_time,
        )

    def goal_at(self, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("t must be >= 0")
        if self.kind == "stationary":
            return np.asarray(self.point, dtype=float)
        s = t - self.stabilize_time
        if s <= 0.0:
            return np.zeros(3)
        if self.kind == "descent":
            # NED: down is positive z
            return np.array([0.0, 0.0, min(self.rate * s, self.floor)])
        phase = 2.0 * math.pi * s / self.period
        r = self.radius
        if self.kind == "circle-xy":
            return np.array([r * math.sin(phase), r * (1.0 - math.cos(phase)), 0.0])
        if self.kind == "circle-yz":
            return np.array([0.0, r * math.sin(phase), -r * (1.0 - math.cos(phase))])
        # saddle: horizontal circle with altitude swinging at twice the rate,
        # recentered so the curve starts at the origin
        return np.array(
            [
                r * (math.cos(phase) - 1.0),
                r * math.sin(phase),
                self.amplitude * math.sin(2.0 * phase),
            ]
        )


@dataclass(frozen=True)
class EpisodeConfig:
    horizon_steps: int = 1000
    dt: float = 0.01
    failed_rotor: int | None = 1  # 1-based rotor label; None = all healthy
    divergence_bound: float = 10.0  # m
    start_position: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.horizon_steps <= 0:
            raise ValueError("horizon_steps must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.failed_rotor is not None and self.failed_rotor not in (1, 2, 3, 4):
            raise ValueError("failed_rotor must be 1..4 or None")
        if self.divergence_bound <= 0:
            raise ValueError("divergence_bound must be positive")

    @property
    def episode_seconds(self) -> float:
        return self.horizon_steps * self.dt


class EpisodeFinished(RuntimeError):
    """step() called on an episode that already terminated."""


class QuadEnv:
    """Gym-style episodic wrapper: reset() -> Observation,
    step(action) -> (Observation, reward, done, info).

    The fault is active from the very first step. info["reason"] is one of
    "crash", "time_limit", "landed" (or None while running); info["d"] is the
    bootstrap-terminal flag. Both the horizon and the divergence bound are
    artificial truncations of the underlying task, not true terminal states,
    so transitions at either keep d = 0 and still bootstrap; d = 1 only when
    the integrator itself produced a non-finite state (nothing left to
    bootstrap from). Treating the bound as a value-zero terminal would make
    flying through it strictly better than hovering, since every reward is
    negative.
    """

    # zero-PWM tail after the landing cutoff so logs show the cut motors
    LANDED_TAIL_STEPS = 50

    def __init__(
        self,
        episode: EpisodeConfig = EpisodeConfig(),
        params: QuadParams = QuadParams(),
        reward_cfg: RewardConfig = RewardConfig(),
        trajectory: GoalTrajectory | None = None,
        wind: WindModel | None = None,
        landing_cutoff: float | None = None,
    ):
        self.episode = episode
        self.params = params
        self.reward_cfg = reward_cfg
        self.trajectory = trajectory or GoalTrajectory.stationary()
        self.wind = wind
        self.landing_cutoff = landing_cutoff
        self.fault = (
            FaultMask.single(episode.failed_rotor)
            if episode.failed_rotor is not None
            else FaultMask.none()
        )
        self._active = False
        self._state: RigidBodyState | None = None

    @property
    def state(self) -> RigidBodyState:
        if self._state is None:
            raise EpisodeFinished("environment has not been reset")
        return self._state

    @property
    def pwm(self) -> np.ndarray:
        return self._pwm.copy()

    @property
    def time(self) -> float:
        return self._step_count * self.episode.dt

    def reset(self) -> Observation:
        hover = RigidBodyState.hover(self.params, self.episode.start_position)
        self._state = RigidBodyState(
            hover.position,
            hover.velocity,
            hover.attitude,
            hover.body_rates,
            self.fault.mask_speeds(hover.rotor_speeds),
        )
        hover_pwm = self.params.hover_speed() / self.params.omega_max
        self._pwm = np.full(4, hover_pwm)
        self._step_count = 0
        self._active = True
        self._motors_cut = False
        self._steps_since_cut = 0
        self._warned_clamp = False
        return build_observation(self._state, self.trajectory.goal_at(0.0))

    def _warn_clamp_once(self, what: str):
        if not self._warned_clamp:
            log.warning("%s outside valid range; clamped (logged once per episode)", what)
            self._warned_clamp = True

    def step(self, action: np.ndarray) -> tuple[Observation, float, bool, dict]:
        if not self._active:
            raise EpisodeFinished("episode already terminated; call reset()")
        action = np.asarray(action, dtype=float).reshape(4)
        if np.any(action < -1.0) or np.any(action > 1.0):
            self._warn_clamp_once("action")

        if self._motors_cut:
            self._pwm = np.zeros(4)
        else:
            self._pwm = apply_action(action, self._pwm)

        prev_speeds = self._state.rotor_speeds.copy()
        crashed = False
        try:
            self._state = dynamics.step(
                self._state,
                self._pwm,
                self.params,
                fault=self.fault,
                wind=self.wind,
                dt=self.episode.dt,
            )
        except SimulationDiverged:
            crashed = True

        self._step_count += 1
        t = self.time
        goal = self.trajectory.goal_at(t)

        if crashed:
            # integrator blew up: state keeps its last finite value, the
            # transition is marked terminal and never bootstrapped
            obs = build_observation(self._state, goal)
            rew = -self.reward_cfg.c1
        else:
            obs = build_observation(self._state, goal)
            rew = reward(prev_speeds, self._state.rotor_speeds, obs.pos_error, self.reward_cfg)

        err_norm = float(np.linalg.norm(obs.pos_error))
        reason = None
        if crashed or err_norm > self.episode.divergence_bound or not np.isfinite(err_norm):
            reason = "crash"
        elif (
            self.landing_cutoff is not None
            and not self._motors_cut
            # the cutoff belongs to the descent phase; a tumble through the
            # depth mark during stabilization is not a landing
            and t >= self.trajectory.stabilize_time
            and self._state.position[2] - self.episode.start_position[2] >= self.landing_cutoff
        ):
            self._motors_cut = True
        if self._motors_cut and reason is None:
            self._steps_since_cut += 1
            if self._steps_since_cut >= self.LANDED_TAIL_STEPS:
                reason = "landed"
        if reason is None and self._step_count >= self.episode.horizon_steps:
            reason = "time_limit"

        done = reason is not None
        if done:
            self._active = False
        info = {
            "reason": reason,
            "d": 1.0 if crashed else 0.0,
            "t": t,
            "goal": goal,
            "pwm": self._pwm.copy(),
            "motors_cut": self._motors_cut,
        }
        return obs, rew, done, info
