"""Metrics and experiment harnesses: tracking accuracy, smoothness, and the
room-scale task suite with success/steps/time and a failure histogram.

Position and orientation errors are RMSEs over every tick and both
end-effectors; smoothness is the RMS of the third finite difference of
position. Absolute jerk magnitudes depend on the trajectory distribution, so
the compliant-vs-raw comparison is reported as an ordering, not a value.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import controller, skills, task_manager, world
from .config import Config
from .geometry import EeRootCommand, Pose3, RootPose, ee_to_world
from .hands import HandState
from .impedance import ExternalForce
from .session import Session
from .task_manager import (
    LLM_ERROR,
    LOCOMOTION_FAILURE,
    MANIPULATION_FAILURE,
    Observation,
    ScriptedBackend,
    approach_pose,
    classify_failure,
    observe,
    region_contains,
    run_task,
    spatial_region,
)


class LengthMismatch(ValueError):
    pass


class TooFewSamples(ValueError):
    pass


@dataclass
class Trajectory:
    """Sampled EE pose trajectory: positions (N, K, 3) and unit quaternions
    (N, K, 4) for K end-effectors."""

    positions: np.ndarray
    quats: np.ndarray


def ee_tracking_reward(position_error: float) -> float:
    """exp(-e^2) shaping of the task-space error (reported, not optimized)."""
    return math.exp(-position_error * position_error)


def tracking_error(ref: Trajectory, actual: Trajectory) -> tuple[float, float, float, float]:
    """(eps_p, std_p, eps_r, std_r): position RMSE and geodesic-angle RMSE
    over all ticks and end-effectors, with standard deviations of the
    per-sample error magnitudes."""
    if ref.positions.shape != actual.positions.shape or ref.quats.shape != actual.quats.shape:
        raise LengthMismatch(
            f"trajectory shapes differ: {ref.positions.shape} vs {actual.positions.shape}"
        )
    dist = np.linalg.norm(ref.positions - actual.positions, axis=-1).ravel()
    dots = np.clip(np.abs(np.sum(ref.quats * actual.quats, axis=-1)), -1.0, 1.0).ravel()
    angles = 2.0 * np.arccos(dots)
    eps_p = float(np.sqrt(np.mean(dist**2)))
    eps_r = float(np.sqrt(np.mean(angles**2)))
    return eps_p, float(np.std(dist)), eps_r, float(np.std(angles))


def rms_jerk(positions: np.ndarray, dt: float) -> float:
    """RMS of the third-order backward difference of position over all samples
    and axes: j_t = (p_t - 3 p_{t-1} + 3 p_{t-2} - p_{t-3}) / dt^3."""
    p = np.asarray(positions, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    if dt <= 0:
        raise ValueError("dt must be positive")
    if p.shape[0] < 4:
        raise TooFewSamples("need at least 4 samples for a third difference")
    j = (p[3:] - 3.0 * p[2:-1] + 3.0 * p[1:-2] - p[:-3]) / dt**3
    return float(np.sqrt(np.mean(j * j)))


# --- tracking suite -----------------------------------------------------------


@dataclass
class TrackingTrial:
    eps_p: float
    eps_p_std: float
    eps_r: float
    eps_r_std: float
    rms_jerk: float


@dataclass
class TrackingReport:
    n_trajectories: int
    seed: int
    with_forces: bool
    compliance_lowpass: bool
    eps_p: float
    eps_p_std: float
    eps_r: float
    eps_r_std: float
    mean_rms_jerk: float
    trials: list[TrackingTrial] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2)

    def table(self) -> str:
        return (
            f"{'variant':<28}{'eps_p (m)':>14}{'eps_r (rad)':>14}{'RMS(j) (m/s^3)':>16}\n"
            f"{_variant_name(self):<28}"
            f"{self.eps_p:>10.4f} ({self.eps_p_std:.4f})"
            f"{self.eps_r:>10.4f} ({self.eps_r_std:.4f})"
            f"{self.mean_rms_jerk:>16.3e}"
        )


def _variant_name(report: TrackingReport) -> str:
    force = "force-pulses" if report.with_forces else "no-forces"
    lp = "lowpass" if report.compliance_lowpass else "raw-offset"
    return f"{force}/{lp}"


@dataclass
class _Reference:
    """Seeded smooth reachable reference: per-EE sinusoid bundles around a
    validated center pose, plus seeded force pulses."""

    centers: np.ndarray      # (2, 3) root-frame EE centers
    amp: np.ndarray          # (2, 3) position amplitudes
    omega: np.ndarray        # (2, 3) angular frequencies
    phase: np.ndarray
    rot_amp: np.ndarray      # (2, 3) rotation-vector amplitudes
    rot_omega: np.ndarray
    rot_phase: np.ndarray
    pulses: list             # (ee_index, start_s, duration_s, force_vec)

    @classmethod
    def sample(cls, rng: np.random.Generator, cfg: Config, with_forces: bool, duration: float):
        centers = np.array([[0.28, 0.17, 0.10], [0.28, -0.17, 0.10]])
        amp = rng.uniform(0.01, 0.06, size=(2, 3))
        omega = 2.0 * math.pi * rng.uniform(0.10, 0.35, size=(2, 3))
        phase = rng.uniform(0.0, 2.0 * math.pi, size=(2, 3))
        rot_amp = rng.uniform(0.02, 0.12, size=(2, 3))
        rot_omega = 2.0 * math.pi * rng.uniform(0.10, 0.30, size=(2, 3))
        rot_phase = rng.uniform(0.0, 2.0 * math.pi, size=(2, 3))
        pulses = []
        if with_forces:
            for ee in range(2):
                for _ in range(int(rng.integers(2, 5))):
                    direction = rng.normal(size=3)
                    direction /= np.linalg.norm(direction)
                    force = rng.uniform(5.0, 15.0) * direction
                    start = rng.uniform(0.5, duration - 0.5)
                    pulses.append((ee, float(start), 0.3, force))
        # keep every commanded point inside a conservative reach ball
        shoulder = np.array([[0.0, cfg.arm.shoulder_lateral, cfg.arm.shoulder_height],
                             [0.0, -cfg.arm.shoulder_lateral, cfg.arm.shoulder_height]])
        extreme = np.abs(centers - shoulder) + amp
        radius = np.linalg.norm(extreme, axis=1)
        scale = np.minimum(1.0, (cfg.arm.reach - 0.04) / radius)
        amp *= scale[:, None]
        return cls(centers, amp, omega, phase, rot_amp, rot_omega, rot_phase, pulses)

    def hand_poses(self, t: float) -> tuple[Pose3, Pose3]:
        pos = self.centers + self.amp * np.sin(self.omega * t + self.phase)
        rot = self.rot_amp * np.sin(self.rot_omega * t + self.rot_phase)
        return Pose3.from_rotvec(pos[0], rot[0]), Pose3.from_rotvec(pos[1], rot[1])

    def forces_at(self, t: float) -> tuple[ExternalForce, ExternalForce]:
        total = np.zeros((2, 3))
        for ee, start, width, force in self.pulses:
            if start <= t < start + width:
                total[ee] += force
        return ExternalForce(total[0]), ExternalForce(total[1])


def _rollout_tracking(
    rng: np.random.Generator, cfg: Config, with_forces: bool, duration: float
) -> TrackingTrial:
    ref = _Reference.sample(rng, cfg, with_forces, duration)
    root = RootPose(0.0, 0.0, 0.7, 0.0)
    state = controller.initial_state(cfg, root=root)

    dt = cfg.timestep
    period = 1.0 / cfg.skill_rate
    warmup = int(round(1.5 / dt))
    n = int(round(duration / dt))

    left0, right0 = ref.hand_poses(0.0)
    cmd = EeRootCommand(root, left0, right0)
    for _ in range(warmup):
        state = controller.step(state, cmd, None, cfg)

    ref_pos = np.empty((n, 2, 3))
    ref_quat = np.empty((n, 2, 4))
    act_pos = np.empty((n, 2, 3))
    act_quat = np.empty((n, 2, 4))
    next_cmd = 0.0
    for k in range(n):
        t = k * dt
        if t + 1e-9 >= next_cmd:
            left, right = ref.hand_poses(t)
            cmd = EeRootCommand(root, left, right)
            next_cmd += period
        forces = ref.forces_at(t) if with_forces else None
        state = controller.step(state, cmd, forces, cfg)
        target_l = ee_to_world(state.root, cmd.ee_left)
        target_r = ee_to_world(state.root, cmd.ee_right)
        actual_l, actual_r = state.ee_world(cfg)
        ref_pos[k, 0], ref_pos[k, 1] = target_l.position, target_r.position
        ref_quat[k, 0], ref_quat[k, 1] = target_l.as_quat(), target_r.as_quat()
        act_pos[k, 0], act_pos[k, 1] = actual_l.position, actual_r.position
        act_quat[k, 0], act_quat[k, 1] = actual_l.as_quat(), actual_r.as_quat()

    eps_p, std_p, eps_r, std_r = tracking_error(
        Trajectory(ref_pos, ref_quat), Trajectory(act_pos, act_quat)
    )
    jerk = rms_jerk(act_pos.reshape(n, 6), dt)
    return TrackingTrial(eps_p, std_p, eps_r, std_r, jerk)


def run_tracking_suite(
    n_trajectories: int,
    seed: int = 0,
    with_forces: bool = False,
    compliance_lowpass: bool = True,
    duration: float = 6.0,
    cfg: Config | None = None,
) -> TrackingReport:
    cfg = cfg or Config()
    if not compliance_lowpass:
        cfg = dataclasses.replace(cfg, offset_time_constant=0.0)
    trials = []
    for i in range(n_trajectories):
        rng = np.random.default_rng([seed, i])
        trials.append(_rollout_tracking(rng, cfg, with_forces, duration))
    all_p = np.array([t.eps_p for t in trials])
    all_r = np.array([t.eps_r for t in trials])
    return TrackingReport(
        n_trajectories=n_trajectories,
        seed=seed,
        with_forces=with_forces,
        compliance_lowpass=compliance_lowpass,
        eps_p=float(np.sqrt(np.mean(all_p**2))),
        eps_p_std=float(np.std(all_p)),
        eps_r=float(np.sqrt(np.mean(all_r**2))),
        eps_r_std=float(np.std(all_r)),
        mean_rms_jerk=float(np.mean([t.rms_jerk for t in trials])),
        trials=trials,
    )


def run_jerk_comparison(n_trajectories: int, seed: int = 0, cfg: Config | None = None,
                        duration: float = 6.0) -> list[tuple[float, float]]:
    """(smoothed, raw) RMS jerk per seeded force-pulse trajectory; the two
    rollouts share identical references and pulses."""
    base = cfg or Config()
    raw_cfg = dataclasses.replace(base, offset_time_constant=0.0)
    pairs = []
    for i in range(n_trajectories):
        smooth = _rollout_tracking(np.random.default_rng([seed, i]), base, True, duration)
        rough = _rollout_tracking(np.random.default_rng([seed, i]), raw_cfg, True, duration)
        pairs.append((smooth.rms_jerk, rough.rms_jerk))
    return pairs


# --- system suite -------------------------------------------------------------

CATEGORIES = (
    "simple-arm",
    "simple-nav",
    "explicit-placement",
    "linguistic-variation",
    "spatial-relation",
    "long-horizon-2obj",
)

_ARM_PARAPHRASES = ("put your hands up", "lift both hands", "hands up")
_NAV_TEMPLATES = ("go to the {place}",)
_NAV_PARAPHRASES = ("walk to the {place}", "head over to the {place}", "move to the {place}")
_PICK_PARAPHRASES = (
    "grab the box from the {src} and put it on the {dst}",
    "take the box from the {src} to the {dst}",
    "move the box from the {src} onto the {dst}",
)


@dataclass
class TrialResult:
    seed: int
    instruction: str
    success: bool
    steps: int
    sim_time: float
    iterations: int
    failure: str | None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class SystemReport:
    category: str
    backend: str
    trials: list[TrialResult]

    @property
    def successes(self) -> int:
        return sum(t.success for t in self.trials)

    @property
    def n(self) -> int:
        return len(self.trials)

    @property
    def mean_steps(self) -> float:
        return float(np.mean([t.steps for t in self.trials])) if self.trials else 0.0

    @property
    def mean_time(self) -> float:
        return float(np.mean([t.sim_time for t in self.trials])) if self.trials else 0.0

    def failure_histogram(self) -> dict:
        hist = {LLM_ERROR: 0, MANIPULATION_FAILURE: 0, LOCOMOTION_FAILURE: 0}
        for t in self.trials:
            if t.failure:
                hist[t.failure] += 1
        return hist

    def to_json(self) -> str:
        return json.dumps(
            {
                "category": self.category,
                "backend": self.backend,
                "success": f"{self.successes}/{self.n}",
                "mean_steps": round(self.mean_steps, 2),
                "mean_time_s": round(self.mean_time, 2),
                "failures": self.failure_histogram(),
                "trials": [t.to_dict() for t in self.trials],
            },
            indent=2,
        )

    def table(self) -> str:
        hist = self.failure_histogram()
        lines = [
            f"{'Task Category':<24}{'Success':>10}{'Steps':>8}{'Time (s)':>10}",
            f"{self.category:<24}{f'{self.successes}/{self.n}':>10}"
            f"{self.mean_steps:>8.1f}{self.mean_time:>10.2f}",
            "Failures: "
            + ", ".join(f"{k}={v}" for k, v in hist.items()),
        ]
        return "\n".join(lines)


def _goal_hands_ready(session: Session) -> bool:
    if session.hand_state.kind != "ready":
        return False
    cmd = session.hold_command()
    return max(session.ee_errors(cmd)) <= 0.05


def _make_trial(category: str, scene: world.Scene, rng: np.random.Generator, paraphrase: bool):
    """(instruction, goal predicate, expected object ids) for one trial."""
    furniture_names = [f.name for f in scene.furniture]

    if category == "simple-arm":
        instruction = str(rng.choice(_ARM_PARAPHRASES)) if paraphrase else "raise both hands"
        return instruction, _goal_hands_ready, None

    if category == "simple-nav":
        place = str(rng.choice(furniture_names))
        template = str(rng.choice(_NAV_PARAPHRASES if paraphrase else _NAV_TEMPLATES))
        instruction = template.format(place=place)

        def goal(session: Session, place=place) -> bool:
            f = session.scene.furniture_by_name(place)
            x, y, yaw = approach_pose(session.scene, f, (session.state.root.x, session.state.root.y))
            root = session.state.root
            from .geometry import wrap_yaw

            return math.hypot(root.x - x, root.y - y) <= 0.2 and abs(wrap_yaw(root.yaw - yaw)) <= 0.3

        return instruction, goal, None

    if category in ("explicit-placement", "linguistic-variation"):
        box = scene.boxes[int(rng.integers(0, len(scene.boxes)))]
        src = box.support
        dst = str(rng.choice([n for n in furniture_names if n != src]))
        if category == "linguistic-variation":
            instruction = str(rng.choice(_PICK_PARAPHRASES)).format(src=src, dst=dst)
        else:
            instruction = f"pick up the box from the {src} and place it on the {dst}"

        def goal(session: Session, box_id=box.object_id, dst=dst) -> bool:
            b = session.scene.box_by_id(box_id)
            return b is not None and b.status == "resting" and b.support == dst

        return instruction, goal, {box.object_id}

    if category == "spatial-relation":
        options = []
        for f in scene.furniture:
            for side in ("left", "right", "front", "behind"):
                center, half = spatial_region(f, side)
                axis = 1 if side in ("left", "right") else 0
                if 0.6 < f.half[axis] + 0.175:
                    continue  # region center too close to the furniture itself
                probe = world.Scene(bounds=scene.bounds,
                                    furniture=[g for g in scene.furniture if g.name != f.name])
                if task_manager._pose_blocked(probe, center, margin=0.2):
                    continue
                options.append((f.name, side))
        if not options:
            options = [(scene.furniture[0].name, "left")]
        name, side = options[int(rng.integers(0, len(options)))]
        relation = {"left": "to the left of", "right": "to the right of",
                    "front": "in front of", "behind": "behind"}[side]
        instruction = f"place the box {relation} the {name}"
        target_box = sorted(scene.boxes, key=lambda b: b.object_id)[0]

        def goal(session: Session, name=name, side=side, box_id=target_box.object_id) -> bool:
            f = session.scene.furniture_by_name(name)
            region = spatial_region(f, side)
            b = session.scene.box_by_id(box_id)
            return (
                b is not None
                and b.status != "carried"
                and b.support == world.FLOOR
                and region_contains(region, b.position[:2])
            )

        return instruction, goal, {target_box.object_id}

    if category == "long-horizon-2obj":
        box1, box2 = scene.boxes[0], scene.boxes[1]
        dst1 = str(rng.choice([n for n in furniture_names if n != box1.support]))
        dst2 = str(rng.choice([n for n in furniture_names if n != box2.support and n != dst1]))
        instruction = (
            f"move {box1.object_id} from the {box1.support} to the {dst1}, "
            f"then move {box2.object_id} from the {box2.support} to the {dst2}"
        )

        def goal(session: Session, b1=box1.object_id, d1=dst1, b2=box2.object_id, d2=dst2) -> bool:
            x1 = session.scene.box_by_id(b1)
            x2 = session.scene.box_by_id(b2)
            return (
                x1 is not None and x1.status == "resting" and x1.support == d1
                and x2 is not None and x2.status == "resting" and x2.support == d2
            )

        return instruction, goal, {box1.object_id, box2.object_id}

    raise ValueError(f"unknown category {category!r}; expected one of {CATEGORIES}")


def run_system_suite(
    category: str,
    trials: int,
    seed: int = 0,
    backend_factory=ScriptedBackend,
    cfg: Config | None = None,
    paraphrase: bool = False,
    max_iterations: int = 40,
) -> SystemReport:
    if category not in CATEGORIES:
        raise ValueError(f"unknown category {category!r}; expected one of {CATEGORIES}")
    cfg = cfg or Config()
    results = []
    for i in range(trials):
        trial_seed = seed + i
        scene = world.ScenarioSpec(seed=trial_seed).sample()
        rng = np.random.default_rng([seed, 1000 + i])
        instruction, goal, expected = _make_trial(category, scene, rng, paraphrase)
        session = Session(cfg=cfg, scene=scene)
        backend = backend_factory()
        result = run_task(session, instruction, backend, max_iterations=max_iterations, goal=goal)
        failure = classify_failure(result, session.scene, expected_objects=expected)
        results.append(
            TrialResult(
                seed=trial_seed,
                instruction=instruction,
                success=bool(result.success),
                steps=result.steps,
                sim_time=round(result.elapsed_sim_time, 2),
                iterations=result.iterations,
                failure=failure,
            )
        )
    backend_name = getattr(backend_factory, "__name__", str(backend_factory))
    return SystemReport(category=category, backend=backend_name, trials=results)
