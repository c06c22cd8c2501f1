"""Training and evaluation orchestration.

train() runs the step-coupled loop: act, simulate, store, then one learner
update per environment step once warmup has filled the buffer. Episodes are
fixed-horizon with the rotor fault active from the first step. Evaluation
runs the deterministic policy through the maneuver trajectories (hover,
landing, circles, saddle), with a stationary-goal stabilization window
before the goal starts moving, and reports tracking error over the
post-stabilization window.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dynamics import QuadParams, WindModel
from .env import OBS_SCALE, OBS_SIZE, EpisodeConfig, GoalTrajectory, QuadEnv, RewardConfig
from .sac import ReplayBuffer, SacAgent, SacConfig

log = logging.getLogger(__name__)

ACTION_SIZE = 4

TRAJECTORY_COLUMNS = (
    "t,x,y,z,qw,qx,qy,qz,vx,vy,vz,p,q,r,w1,w2,w3,w4,pwm1,pwm2,pwm3,pwm4"
)
ENV_LOG_COLUMNS = TRAJECTORY_COLUMNS + ",goal_x,goal_y,goal_z,reward"
METRICS_COLUMNS = "step,episode,ep_reward,q1_loss,q2_loss,pi_loss,alpha"

MANEUVERS = ("hover", "land", "circle-xy", "circle-yz", "saddle")

LANDING_DESCENT_RATE = 0.1  # m/s
LANDING_DEPTH = 1.5  # m below the start before motors are cut


def _fmt(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def _trajectory_row(t: float, state, pwm, goal, rew) -> str:
    vals = [
        t,
        *state.position,
        *state.attitude,
        *state.velocity,
        *state.body_rates,
        *state.rotor_speeds,
        *pwm,
        *goal,
        rew,
    ]
    return _fmt(vals)


def make_trajectory(maneuver: str, stabilize_time: float) -> GoalTrajectory:
    if maneuver == "hover":
        return GoalTrajectory.stationary(stabilize_time=stabilize_time)
    if maneuver == "land":
        return GoalTrajectory.descent(
            rate=LANDING_DESCENT_RATE, floor=LANDING_DEPTH, stabilize_time=stabilize_time
        )
    if maneuver == "circle-xy":
        return GoalTrajectory.circle_xy(stabilize_time=stabilize_time)
    if maneuver == "circle-yz":
        return GoalTrajectory.circle_yz(stabilize_time=stabilize_time)
    if maneuver == "saddle":
        return GoalTrajectory.saddle(stabilize_time=stabilize_time)
    raise ValueError(f"unknown maneuver {maneuver!r}; valid: {', '.join(MANEUVERS)}")


@dataclass(frozen=True)
class TrainRun:
    total_steps: int = 300_000
    eval_interval: int = 10_000
    checkpoint_interval: int = 50_000
    log_interval: int = 100
    eval_seconds: float = 10.0
    seed: int = 0
    episode: EpisodeConfig = EpisodeConfig()
    quad: QuadParams = QuadParams()
    reward: RewardConfig = RewardConfig()
    sac: SacConfig = SacConfig()

    def __post_init__(self):
        if self.total_steps < 0:
            raise ValueError("total_steps must be >= 0")
        for name in ("eval_interval", "checkpoint_interval", "log_interval"):
            v = getattr(self, name)
            if v <= 0:
                raise ValueError(f"{name} must be positive")
        if self.total_steps % self.log_interval != 0:
            raise ValueError("total_steps must be a multiple of log_interval")
        if self.eval_interval % self.log_interval != 0:
            raise ValueError("eval_interval must be a multiple of log_interval")
        if self.checkpoint_interval % self.log_interval != 0:
            raise ValueError("checkpoint_interval must be a multiple of log_interval")


@dataclass
class TrainResult:
    out_dir: Path
    metrics_path: Path
    last_checkpoint: Path
    best_checkpoint: Path | None
    best_eval_return: float
    episodes: int
    steps: int


@dataclass
class EvalReport:
    maneuver: str
    wind_speed: float
    duration: float
    rmse: float  # tracking error over the post-stabilization window, m
    max_error: float  # m, same window
    episode_return: float
    crashed: bool
    reason: str
    mean_step_ms: float
    steps: int
    # how the policy used each rotor; makes learned rotor roles inspectable
    mean_pwm: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    def row(self) -> str:
        return ",".join(
            [
                self.maneuver,
                repr(float(self.wind_speed)),
                repr(float(self.duration)),
                repr(float(self.rmse)),
                repr(float(self.max_error)),
                repr(float(self.episode_return)),
                "1" if self.crashed else "0",
                self.reason,
                repr(float(self.mean_step_ms)),
                str(self.steps),
                *(repr(float(v)) for v in self.mean_pwm),
            ]
        )

    HEADER = (
        "maneuver,wind_speed,duration,rmse,max_error,episode_return,crashed,"
        "reason,mean_step_ms,steps,mean_pwm1,mean_pwm2,mean_pwm3,mean_pwm4"
    )


def agent_policy(agent: SacAgent):
    """Deterministic evaluation policy of a trained agent."""

    def policy(obs_vec: np.ndarray) -> np.ndarray:
        return agent.act(obs_vec, deterministic=True)

    return policy


def zero_policy(obs_vec: np.ndarray) -> np.ndarray:
    return np.zeros(ACTION_SIZE)


def _sample_wind(speed: float, rng: np.random.Generator) -> WindModel | None:
    if speed <= 0.0:
        return None
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    return WindModel(wind_velocity=tuple(direction * speed), enabled=True)


def evaluate(
    policy,
    maneuver: str = "hover",
    wind_speed: float = 0.0,
    duration: float = 40.0,
    seed: int = 0,
    episode: EpisodeConfig = EpisodeConfig(),
    quad: QuadParams = QuadParams(),
    reward_cfg: RewardConfig = RewardConfig(),
    log_path: Path | str | None = None,
) -> EvalReport:
    """Run the deterministic policy through one maneuver episode.

    The goal holds the start point for the stabilization window (5 s, or
    10 s when wind is on) before the maneuver trajectory begins. Tracking
    RMSE and max error are computed over the post-stabilization samples
    only. A crash ends the episode early; the partial trajectory is kept.
    """
    stabilize = 10.0 if wind_speed > 0.0 else 5.0
    traj = make_trajectory(maneuver, stabilize)
    horizon = int(round(duration / episode.dt))
    env = QuadEnv(
        episode=replace(episode, horizon_steps=horizon),
        params=quad,
        reward_cfg=reward_cfg,
        trajectory=traj,
        wind=_sample_wind(wind_speed, np.random.default_rng(seed)),
        landing_cutoff=LANDING_DEPTH if maneuver == "land" else None,
    )
    obs = env.reset()
    rows = [_trajectory_row(0.0, env.state, env.pwm, traj.goal_at(0.0), 0.0)]
    sq_errors = []
    pwm_sum = np.zeros(4)
    total = 0.0
    steps = 0
    reason = "time_limit"
    t_loop0 = time.perf_counter()
    done = False
    while not done:
        action = policy(obs.as_vector())
        obs, rew, done, info = env.step(action)
        steps += 1
        total += rew
        pwm_sum += info["pwm"]
        rows.append(_trajectory_row(info["t"], env.state, env.pwm, info["goal"], rew))
        if info["t"] > stabilize:
            sq_errors.append(float(obs.pos_error @ obs.pos_error))
        if done:
            reason = info["reason"]
    elapsed = time.perf_counter() - t_loop0

    if log_path is not None:
        log_path = Path(log_path)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log_path.write_text(ENV_LOG_COLUMNS + "\n" + "\n".join(rows) + "\n")

    sq = np.asarray(sq_errors) if sq_errors else np.array([np.nan])
    return EvalReport(
        maneuver=maneuver,
        wind_speed=wind_speed,
        duration=duration,
        rmse=float(np.sqrt(np.mean(sq))),
        max_error=float(np.sqrt(np.max(sq))),
        episode_return=total,
        crashed=reason == "crash",
        reason=reason,
        mean_step_ms=elapsed / max(steps, 1) * 1e3,
        steps=steps,
        mean_pwm=tuple(pwm_sum / max(steps, 1)),
    )


def maneuver_suite(
    policy,
    out_dir: Path | str,
    seed: int = 0,
    wind_speed: float = 0.0,
    duration: float = 40.0,
    episode: EpisodeConfig = EpisodeConfig(),
    quad: QuadParams = QuadParams(),
    reward_cfg: RewardConfig = RewardConfig(),
) -> list[EvalReport]:
    """All five maneuvers with per-maneuver seeds; failures are recorded and
    the suite continues. Writes trajectory logs, summary.csv and summary.txt."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = []
    for i, maneuver in enumerate(MANEUVERS):
        try:
            report = evaluate(
                policy,
                maneuver=maneuver,
                wind_speed=wind_speed,
                duration=duration,
                seed=seed + i,
                episode=episode,
                quad=quad,
                reward_cfg=reward_cfg,
                log_path=out_dir / f"{maneuver}.csv",
            )
        except Exception as exc:  # keep the suite alive; record the failure
            log.warning("maneuver %s failed: %s", maneuver, exc)
            report = EvalReport(
                maneuver, wind_speed, duration, float("nan"), float("nan"),
                float("nan"), True, f"error:{type(exc).__name__}", float("nan"), 0,
            )
        reports.append(report)
    (out_dir / "summary.csv").write_text(
        EvalReport.HEADER + "\n" + "\n".join(r.row() for r in reports) + "\n"
    )
    (out_dir / "summary.txt").write_text(format_report_table(reports))
    return reports


def format_report_table(reports: list[EvalReport]) -> str:
    head = ("maneuver", "wind", "rmse_m", "max_err_m", "return", "crashed", "reason")
    rows = [head] + [
        (
            r.maneuver,
            f"{r.wind_speed:.1f}",
            f"{r.rmse:.3f}",
            f"{r.max_error:.3f}",
            f"{r.episode_return:.1f}",
            "yes" if r.crashed else "no",
            r.reason,
        )
        for r in reports
    ]
    widths = [max(len(row[c]) for row in rows) for c in range(len(head))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    return "\n".join(lines) + "\n"


@dataclass
class BaselineStats:
    mean: float
    std: float
    returns: list[float]


def random_policy_baseline(
    episodes: int = 20,
    seed: int = 0,
    episode: EpisodeConfig = EpisodeConfig(),
    quad: QuadParams = QuadParams(),
    reward_cfg: RewardConfig = RewardConfig(),
) -> BaselineStats:
    """Returns of a uniform-random policy on the training task; the yardstick
    the trained policy must beat."""
    rng = np.random.default_rng(seed)
    env = QuadEnv(episode=episode, params=quad, reward_cfg=reward_cfg)
    returns = []
    for _ in range(episodes):
        env.reset()
        total = 0.0
        done = False
        while not done:
            _, rew, done, _ = env.step(rng.uniform(-1.0, 1.0, size=ACTION_SIZE))
            total += rew
        returns.append(total)
    arr = np.asarray(returns)
    return BaselineStats(float(arr.mean()), float(arr.std()), returns)


def train(run: TrainRun, out_dir: Path | str, resume_from: Path | str | None = None) -> TrainResult:
    """Step-coupled training per the run configuration.

    Writes metrics.csv (one row per log_interval), evals.csv (periodic
    deterministic-policy returns), episode0.csv (first episode trajectory),
    and checkpoints/{best,last}.npz. The seed fully determines every output.
    A resumed run restores the learner but refills its replay buffer.
    """
    out_dir = Path(out_dir)
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)

    seeds = np.random.SeedSequence(run.seed).spawn(2)
    if resume_from is not None:
        agent = SacAgent.load(resume_from)
        start_step = int(agent.loaded_meta.get("env_steps", 0))
        episodes = int(agent.loaded_meta.get("episodes", 0))
        best_return = float(agent.loaded_meta.get("best_eval_return", -np.inf))
        best_survived = bool(agent.loaded_meta.get("best_eval_survived", False))
    else:
        agent = SacAgent(OBS_SIZE, ACTION_SIZE, run.sac, seed=seeds[0], obs_scale=OBS_SCALE)
        start_step = 0
        episodes = 0
        best_return = -np.inf
        best_survived = False

    buffer = ReplayBuffer(run.sac.buffer_capacity, OBS_SIZE, ACTION_SIZE)
    env = QuadEnv(episode=run.episode, params=run.quad, reward_cfg=run.reward)
    eval_horizon = int(round(run.eval_seconds / run.episode.dt))

    metrics_path = out_dir / "metrics.csv"
    evals_path = out_dir / "evals.csv"
    metrics_file = metrics_path.open("w")
    metrics_file.write(METRICS_COLUMNS + "\n")
    evals_file = evals_path.open("w")
    evals_file.write("step,eval_return,eval_reason\n")

    last_path = ckpt_dir / "last.npz"
    best_path = ckpt_dir / "best.npz"
    have_best = False

    def save(path: Path, step: int):
        agent.save(
            path,
            extra_meta={
                "env_steps": step,
                "episodes": episodes,
                "best_eval_return": best_return,
                "best_eval_survived": best_key[0],
                "seed": run.seed,
            },
        )

    best_key = (best_survived, best_return)

    # evaluation always applies the strict default divergence bound; only
    # training episodes run with the relaxed one
    eval_episode = replace(run.episode, divergence_bound=EpisodeConfig().divergence_bound)

    def run_eval(step: int):
        nonlocal best_return, best_key, have_best
        report = evaluate(
            agent_policy(agent),
            maneuver="hover",
            duration=run.eval_seconds,
            episode=eval_episode,
            quad=run.quad,
            reward_cfg=run.reward,
        )
        evals_file.write(f"{step},{report.episode_return!r},{report.reason}\n")
        evals_file.flush()
        # an eval that finished its episode always outranks one that crashed:
        # with all-negative rewards a quick crash otherwise beats honest hover
        key = (not report.crashed, report.episode_return)
        if key > best_key:
            best_key = key
            best_return = report.episode_return
            save(best_path, step)
            have_best = True

    obs = env.reset().as_vector()
    ep_return = 0.0
    last_ep_return = 0.0
    ep_first = episodes == 0
    ep0_rows = [_trajectory_row(0.0, env.state, env.pwm, env.trajectory.goal_at(0.0), 0.0)]
    last_metrics = {"q1_loss": 0.0, "q2_loss": 0.0, "pi_loss": 0.0, "alpha": agent.alpha}
    warmup_end = start_step + run.sac.warmup_steps

    for step in range(start_step + 1, start_step + run.total_steps + 1):
        if step <= warmup_end:
            action = agent.random_action()
        else:
            action = agent.act(obs)
        next_obs, rew, done, info = env.step(action)
        next_vec = next_obs.as_vector()
        buffer.push(obs, action, rew, next_vec, info["d"])
        ep_return += rew
        if ep_first:
            ep0_rows.append(
                _trajectory_row(info["t"], env.state, env.pwm, info["goal"], rew)
            )
        obs = next_vec

        if step > warmup_end and len(buffer) >= run.sac.batch_size:
            last_metrics = agent.update(buffer)

        if done:
            episodes += 1
            last_ep_return = ep_return
            ep_return = 0.0
            if ep_first:
                (out_dir / "episode0.csv").write_text(
                    ENV_LOG_COLUMNS + "\n" + "\n".join(ep0_rows) + "\n"
                )
                ep_first = False
            obs = env.reset().as_vector()

        if step % run.log_interval == 0:
            metrics_file.write(
                f"{step},{episodes},{last_ep_return!r},{last_metrics['q1_loss']!r},"
                f"{last_metrics['q2_loss']!r},{last_metrics['pi_loss']!r},{last_metrics['alpha']!r}\n"
            )
        if step % run.eval_interval == 0:
            run_eval(step)
        if step % run.checkpoint_interval == 0:
            save(last_path, step)

    final_step = start_step + run.total_steps
    save(last_path, final_step)
    metrics_file.close()
    evals_file.close()
    return TrainResult(
        out_dir=out_dir,
        metrics_path=metrics_path,
        last_checkpoint=last_path,
        best_checkpoint=best_path if have_best or best_path.exists() else None,
        best_eval_return=best_return,
        episodes=episodes,
        steps=final_step,
    )


def measure_step_update_ms(
    n_steps: int = 200,
    seed: int = 0,
    run: TrainRun = TrainRun(),
) -> float:
    """Mean wall time of one environment step plus one full learner update,
    measured after the buffer is warm."""
    agent = SacAgent(OBS_SIZE, ACTION_SIZE, run.sac, seed=seed, obs_scale=OBS_SCALE)
    buffer = ReplayBuffer(run.sac.buffer_capacity, OBS_SIZE, ACTION_SIZE)
    env = QuadEnv(episode=run.episode, params=run.quad, reward_cfg=run.reward)
    obs = env.reset().as_vector()
    while len(buffer) < max(run.sac.batch_size, 512):
        action = agent.random_action()
        next_obs, rew, done, info = env.step(action)
        next_vec = next_obs.as_vector()
        buffer.push(obs, action, rew, next_vec, info["d"])
        obs = next_vec if not done else env.reset().as_vector()
    t0 = time.perf_counter()
    for _ in range(n_steps):
        action = agent.act(obs)
        next_obs, rew, done, info = env.step(action)
        next_vec = next_obs.as_vector()
        buffer.push(obs, action, rew, next_vec, info["d"])
        obs = next_vec if not done else env.reset().as_vector()
        agent.update(buffer)
    return (time.perf_counter() - t0) / n_steps * 1e3


def tail_slope(values: np.ndarray, tail_frac: float = 0.1) -> float:
    """Least-squares slope over the trailing fraction of a curve; the plateau
    check for long training runs."""
    values = np.asarray(values, dtype=float)
    n = max(int(len(values) * tail_frac), 2)
    tail = values[-n:]
    x = np.arange(n, dtype=float)
    x -= x.mean()
    denom = float(x @ x)
    if denom == 0.0:
        return 0.0
    return float(x @ (tail - tail.mean())) / denom
