"""Monte-Carlo encounter simulation with the policy in the loop.

Encounters are sampled in a frame where the ownship starts at the origin
heading along +x.  Each 1 s step forms a noisy measurement of the relative
state, spreads it into unscented sigma points, picks the advisory that
maximizes the belief-weighted score sum, then advances both aircraft
(straight along the old heading, then turn).  Event flags feed four safety
probabilities reported as exact event-count ratios.  All randomness derives
from named per-encounter streams, so results are independent of worker
count.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .config import stream, stream_seed
from .predictors import as_predictor
from .table import (Advisory, BeliefSample, DEFAULT_COC_PENALTY,
                    DEFAULT_ONLINE_COST, StateVector, belief_action,
                    coc_penalty, online_costs, optimal_action, wrap_angle)

# floor for measured/perturbed speeds so states stay in the valid domain
_MIN_SPEED = 1e-3


@dataclass(frozen=True)
class NoiseStds:
    """Sensor noise standard deviations; one shared std for both speeds."""

    rho: float = 0.0
    theta: float = 0.0
    psi: float = 0.0
    speed: float = 0.0

    def __post_init__(self):
        for name in ("rho", "theta", "psi", "speed"):
            v = getattr(self, name)
            if not (v >= 0.0 and math.isfinite(v)):
                raise ValueError(f"noise std {name} must be finite and >= 0")

    @property
    def is_zero(self) -> bool:
        return self.rho == 0.0 and self.theta == 0.0 \
            and self.psi == 0.0 and self.speed == 0.0


@dataclass(frozen=True)
class EncounterConfig:
    """Sampler ranges and shared simulation constants."""

    r_min: float = 5000.0
    r_max: float = 30000.0
    v_own_range: tuple = (100.0, 600.0)
    v_int_range: tuple = (100.0, 600.0)
    tau_start_range: tuple = (10.0, 60.0)
    duration: int = 50
    maneuver_period: int = 10
    turn_choices: tuple = (-3.0, -1.5, 0.0, 1.5, 3.0)
    nmac_range: float = 500.0
    noise: NoiseStds = field(default_factory=NoiseStds)

    def __post_init__(self):
        if not 0.0 < self.r_min <= self.r_max:
            raise ValueError("need 0 < r_min <= r_max")
        for name in ("v_own_range", "v_int_range", "tau_start_range"):
            lo, hi = getattr(self, name)
            if not (0.0 < lo <= hi) and name != "tau_start_range":
                raise ValueError(f"{name} must satisfy 0 < lo <= hi")
            if name == "tau_start_range" and not (0.0 <= lo <= hi):
                raise ValueError("tau_start_range must satisfy 0 <= lo <= hi")
        if self.duration < 1:
            raise ValueError(f"duration must be >= 1, got {self.duration}")
        if self.maneuver_period < 1:
            raise ValueError("maneuver_period must be >= 1")
        if not self.turn_choices:
            raise ValueError("turn_choices is empty")
        if self.nmac_range <= 0.0:
            raise ValueError("nmac_range must be positive")


@dataclass(frozen=True)
class Encounter:
    """One concrete encounter: geometry, scripts, noise, and its seed."""

    own_pos: np.ndarray
    own_heading: float
    own_speed: float
    int_pos: np.ndarray
    int_heading: float
    int_speed: float
    int_turn_script: np.ndarray  # deg/s per step
    tau_profile: np.ndarray      # s per step
    duration: int
    noise: NoiseStds
    seed: int
    nmac_range: float = 500.0

    def __post_init__(self):
        object.__setattr__(self, "own_pos",
                           np.asarray(self.own_pos, dtype=np.float64))
        object.__setattr__(self, "int_pos",
                           np.asarray(self.int_pos, dtype=np.float64))
        object.__setattr__(self, "int_turn_script",
                           np.asarray(self.int_turn_script, dtype=np.float64))
        object.__setattr__(self, "tau_profile",
                           np.asarray(self.tau_profile, dtype=np.float64))
        if self.duration < 1:
            raise ValueError(f"duration must be >= 1, got {self.duration}")
        if self.own_speed <= 0.0 or self.int_speed <= 0.0:
            raise ValueError("speeds must be positive")
        if self.own_pos.shape != (2,) or self.int_pos.shape != (2,):
            raise ValueError("positions must be 2-vectors")
        if self.int_turn_script.shape != (self.duration,):
            raise ValueError("turn script length must equal duration")
        if self.tau_profile.shape != (self.duration,):
            raise ValueError("tau profile length must equal duration")
        if np.any(self.tau_profile < 0.0):
            raise ValueError("tau profile must be >= 0")


def sample_encounter(rng: np.random.Generator, cfg: EncounterConfig,
                     seed: int = 0) -> Encounter:
    """Random encounter: uniform bearing/heading, uniform ranges and speeds.

    The tau profile decreases linearly by 1 s per step from a sampled start,
    floored at zero.  The intruder turn script is piecewise constant,
    redrawn from cfg.turn_choices every cfg.maneuver_period steps.  The draw
    order is fixed, so one rng state maps to exactly one encounter.
    """
    r = rng.uniform(cfg.r_min, cfg.r_max)
    bearing = rng.uniform(-math.pi, math.pi)
    int_heading = rng.uniform(-math.pi, math.pi)
    v_own = rng.uniform(*cfg.v_own_range)
    v_int = rng.uniform(*cfg.v_int_range)
    tau_start = rng.uniform(*cfg.tau_start_range)
    script = np.empty(cfg.duration)
    for start in range(0, cfg.duration, cfg.maneuver_period):
        rate = cfg.turn_choices[int(rng.integers(len(cfg.turn_choices)))]
        script[start:start + cfg.maneuver_period] = rate
    tau_profile = np.maximum(tau_start - np.arange(cfg.duration, dtype=np.float64),
                             0.0)
    return Encounter(
        own_pos=np.zeros(2), own_heading=0.0, own_speed=v_own,
        int_pos=np.array([r * math.cos(bearing), r * math.sin(bearing)]),
        int_heading=int_heading, int_speed=v_int,
        int_turn_script=script, tau_profile=tau_profile,
        duration=cfg.duration, noise=cfg.noise, seed=int(seed),
        nmac_range=cfg.nmac_range)


def belief_samples(measured: StateVector, noise: NoiseStds,
                   kappa: float = 0.0) -> list[BeliefSample]:
    """Unscented sigma points of the measurement over the five noisy dims.

    Standard weights: center kappa/(n+kappa), sides 1/(2(n+kappa)), summing
    to one; sigma points sit at +-sqrt(n+kappa) stds along each noisy dim
    (rho, theta, psi, v_own, v_int).  Zero noise collapses to the single
    measured state with weight 1.  Perturbed rho clamps at 0 and speeds at a
    small positive floor so every sample stays a valid state.
    """
    if noise.is_zero:
        return [BeliefSample(measured, 1.0)]
    n = 5
    if n + kappa <= 0.0:
        raise ValueError(f"need n + kappa > 0, got kappa={kappa}")
    spread = math.sqrt(n + kappa)
    stds = (noise.rho, noise.theta, noise.psi, noise.speed, noise.speed)
    names = ("rho", "theta", "psi", "v_own", "v_int")
    clamps = {"rho": lambda v: max(v, 0.0),
              "v_own": lambda v: max(v, _MIN_SPEED),
              "v_int": lambda v: max(v, _MIN_SPEED)}
    w_side = 1.0 / (2.0 * (n + kappa))
    samples = [BeliefSample(measured, kappa / (n + kappa))]
    for name, std in zip(names, stds):
        base = getattr(measured, name)
        for sign in (1.0, -1.0):
            value = base + sign * spread * std
            if name in clamps:
                value = clamps[name](value)
            samples.append(BeliefSample(replace(measured, **{name: value}),
                                        w_side))
    return samples


def fuse_intruders(rows, mode: str) -> Advisory:
    """Single advisory from one score row per intruder.

    worst_case: per-action minimum over intruders, then argmax; sum:
    elementwise sum, then argmax.  Ties resolve to the lowest index.
    """
    stacked = np.asarray(rows, dtype=np.float64)
    if stacked.ndim != 2 or stacked.shape[1] != 5 or stacked.shape[0] == 0:
        raise ValueError(f"expected (k, 5) score rows with k >= 1, "
                         f"got shape {stacked.shape}")
    if mode == "worst_case":
        return optimal_action(stacked.min(axis=0))
    if mode == "sum":
        return optimal_action(stacked.sum(axis=0))
    raise ValueError(f"mode must be 'worst_case' or 'sum', got {mode!r}")


@dataclass(frozen=True)
class SimFlags:
    """Query-time policy adjustments applied inside the belief selection."""

    online_costs: bool = False
    online_cost: float = DEFAULT_ONLINE_COST
    coc_penalty: bool = False
    coc_penalty_value: float = DEFAULT_COC_PENALTY


def _belief_transform(flags: SimFlags):
    if not (flags.online_costs or flags.coc_penalty):
        return None

    def transform(row, state):
        if flags.online_costs:
            row = online_costs(row, state.a_prev, flags.online_cost)
        if flags.coc_penalty:
            row = coc_penalty(row, state, "apply", flags.coc_penalty_value)
        return row

    return transform


@dataclass(frozen=True)
class Trajectory:
    """One simulated encounter: per-step record plus encounter-level flags."""

    states: tuple            # true relative state at each decision step
    advisories: np.ndarray   # int8 advisory indices, one per step
    beliefs: tuple | None    # belief sample tuples when recorded
    own_track: np.ndarray    # (duration+1, 3): x, y, heading
    int_track: np.ndarray
    step_nmac: np.ndarray
    step_alert: np.ndarray
    step_reversal: np.ndarray
    step_split: np.ndarray
    nmac: bool
    alert: bool
    reversal: bool
    split: bool
    min_separation: float
    query_ns: int


def run_encounter(policy, enc: Encounter, flags: SimFlags = SimFlags(),
                  record_beliefs: bool = False) -> Trajectory:
    """Fly one encounter under the policy; deterministic given the encounter.

    Measurement noise comes from the encounter's own named stream, so the
    noise sequence never depends on the policy: two policies that always
    agree produce bit-identical trajectories.
    """
    pred = as_predictor(policy)
    transform = _belief_transform(flags)
    rng = stream(enc.seed, "noise")
    noisy = not enc.noise.is_zero
    po = enc.own_pos.copy()
    ho = float(enc.own_heading)
    pi_ = enc.int_pos.copy()
    hi = float(enc.int_heading)
    a_prev = Advisory.COC
    states = []
    beliefs = [] if record_beliefs else None
    advisories = np.empty(enc.duration, dtype=np.int8)
    step_nmac = np.zeros(enc.duration, dtype=bool)
    step_alert = np.zeros(enc.duration, dtype=bool)
    step_reversal = np.zeros(enc.duration, dtype=bool)
    step_split = np.zeros(enc.duration, dtype=bool)
    own_track = np.empty((enc.duration + 1, 3))
    int_track = np.empty((enc.duration + 1, 3))
    min_sep = math.inf
    seen_alert = False
    coc_after_alert = False
    query_ns = 0
    for k in range(enc.duration):
        own_track[k] = (po[0], po[1], ho)
        int_track[k] = (pi_[0], pi_[1], hi)
        dx, dy = pi_[0] - po[0], pi_[1] - po[1]
        rho = math.hypot(dx, dy)
        min_sep = min(min_sep, rho)
        s_true = StateVector(rho=rho,
                             theta=wrap_angle(math.atan2(dy, dx) - ho),
                             psi=wrap_angle(hi - ho),
                             v_own=enc.own_speed, v_int=enc.int_speed,
                             tau=float(enc.tau_profile[k]), a_prev=a_prev)
        if noisy:
            eps = rng.normal(size=5)
            measured = StateVector(
                rho=max(rho + enc.noise.rho * eps[0], 0.0),
                theta=s_true.theta + enc.noise.theta * eps[1],
                psi=s_true.psi + enc.noise.psi * eps[2],
                v_own=max(enc.own_speed + enc.noise.speed * eps[3], _MIN_SPEED),
                v_int=max(enc.int_speed + enc.noise.speed * eps[4], _MIN_SPEED),
                tau=s_true.tau, a_prev=a_prev)
        else:
            measured = s_true
        samples = belief_samples(measured, enc.noise)
        t0 = time.perf_counter_ns()
        adv = belief_action(pred, samples, transform)
        query_ns += time.perf_counter_ns() - t0
        states.append(s_true)
        if record_beliefs:
            beliefs.append(tuple(samples))
        advisories[k] = int(adv)
        step_nmac[k] = s_true.tau == 0.0 and rho < enc.nmac_range
        step_alert[k] = adv != Advisory.COC
        step_reversal[k] = adv.direction * a_prev.direction == -1
        if adv != Advisory.COC:
            if coc_after_alert:
                step_split[k] = True
            seen_alert = True
            coc_after_alert = False
        elif seen_alert:
            coc_after_alert = True
        po = po + enc.own_speed * np.array([math.cos(ho), math.sin(ho)])
        ho = wrap_angle(ho + math.radians(adv.turn_rate_deg))
        pi_ = pi_ + enc.int_speed * np.array([math.cos(hi), math.sin(hi)])
        hi = wrap_angle(hi + math.radians(enc.int_turn_script[k]))
        a_prev = adv
    own_track[enc.duration] = (po[0], po[1], ho)
    int_track[enc.duration] = (pi_[0], pi_[1], hi)
    min_sep = min(min_sep, math.hypot(pi_[0] - po[0], pi_[1] - po[1]))
    return Trajectory(
        states=tuple(states), advisories=advisories,
        beliefs=tuple(beliefs) if record_beliefs else None,
        own_track=own_track, int_track=int_track,
        step_nmac=step_nmac, step_alert=step_alert,
        step_reversal=step_reversal, step_split=step_split,
        nmac=bool(step_nmac.any()), alert=bool(step_alert.any()),
        reversal=bool(step_reversal.any()), split=bool(step_split.any()),
        min_separation=float(min_sep), query_ns=int(query_ns))


@dataclass(frozen=True)
class SimMetrics:
    """Safety probabilities as exact event-count ratios."""

    p_nmac: float
    p_alert: float
    p_reversal: float
    p_split: float
    relative_runtime: float
    encounters: int


def aggregate_metrics(trajectories, runtimes=None) -> SimMetrics:
    """Exact ratios over a trajectory list; runtimes = (policy_ns, table_ns).

    relative_runtime is 0 when runtimes is omitted, meaning not measured;
    the timing never feeds any deterministic artifact.
    """
    trajectories = list(trajectories)
    n = len(trajectories)
    if n == 0:
        raise ValueError("need at least one trajectory")
    if runtimes is None:
        relative = 0.0
    else:
        policy_ns, table_ns = runtimes
        if table_ns <= 0:
            raise ValueError("table runtime must be positive")
        relative = policy_ns / table_ns
    return SimMetrics(
        p_nmac=sum(t.nmac for t in trajectories) / n,
        p_alert=sum(t.alert for t in trajectories) / n,
        p_reversal=sum(t.reversal for t in trajectories) / n,
        p_split=sum(t.split for t in trajectories) / n,
        relative_runtime=relative, encounters=n)


@dataclass(frozen=True)
class SimBatch:
    """Streaming aggregate of many encounters plus optional trajectories."""

    encounters: int
    n_nmac: int
    n_alert: int
    n_reversal: int
    n_split: int
    query_ns: int
    trajectories: tuple | None

    def metrics(self, baseline_ns=None) -> SimMetrics:
        if baseline_ns is not None and baseline_ns <= 0:
            raise ValueError("baseline runtime must be positive")
        relative = 0.0 if baseline_ns is None else self.query_ns / baseline_ns
        n = self.encounters
        return SimMetrics(p_nmac=self.n_nmac / n, p_alert=self.n_alert / n,
                          p_reversal=self.n_reversal / n,
                          p_split=self.n_split / n,
                          relative_runtime=relative, encounters=n)


def simulate_many(policy, cfg: EncounterConfig, count: int, seed: int,
                  flags: SimFlags = SimFlags(), threads: int = 1,
                  keep_trajectories: bool = False) -> SimBatch:
    """Simulate count encounters from per-index streams and aggregate.

    Encounter i derives every draw from stream (seed, "enc", i), so the
    batch is bit-identical for any thread count and any batching.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    pred = as_predictor(policy)

    def one(i: int) -> Trajectory:
        enc_seed = stream_seed(seed, "enc", i)
        enc = sample_encounter(stream(enc_seed, "sample"), cfg, seed=enc_seed)
        return run_encounter(pred, enc, flags)

    totals = dict(nmac=0, alert=0, reversal=0, split=0)
    query_ns = 0
    kept = [] if keep_trajectories else None
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = pool.map(one, range(count))
            for t in results:
                for name in totals:
                    totals[name] += int(getattr(t, name))
                query_ns += t.query_ns
                if keep_trajectories:
                    kept.append(t)
    else:
        for i in range(count):
            t = one(i)
            for name in totals:
                totals[name] += int(getattr(t, name))
            query_ns += t.query_ns
            if keep_trajectories:
                kept.append(t)
    return SimBatch(encounters=count, n_nmac=totals["nmac"],
                    n_alert=totals["alert"], n_reversal=totals["reversal"],
                    n_split=totals["split"], query_ns=query_ns,
                    trajectories=tuple(kept) if keep_trajectories else None)


def trajectory_csv(traj: Trajectory) -> str:
    """Per-step CSV: positions and headings, advisory index, event flags."""
    lines = ["step,own_x,own_y,own_heading,int_x,int_y,int_heading,"
             "advisory,nmac,alert,reversal,split"]
    for k in range(len(traj.advisories)):
        ox, oy, oh = (float(v) for v in traj.own_track[k])
        ix, iy, ih = (float(v) for v in traj.int_track[k])
        lines.append(
            f"{k},{ox!r},{oy!r},{oh!r},{ix!r},{iy!r},{ih!r},"
            f"{int(traj.advisories[k])},{int(traj.step_nmac[k])},"
            f"{int(traj.step_alert[k])},{int(traj.step_reversal[k])},"
            f"{int(traj.step_split[k])}")
    return "\n".join(lines) + "\n"


def write_trajectory(path, traj: Trajectory) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(trajectory_csv(traj))


def metrics_lines(m: SimMetrics, include_runtime: bool = True) -> list[str]:
    """Flat key=value block; timing is optional so artifacts stay stable."""
    lines = [
        f"p_nmac={m.p_nmac!r}",
        f"p_alert={m.p_alert!r}",
        f"p_reversal={m.p_reversal!r}",
        f"p_split={m.p_split!r}",
        f"encounters={m.encounters}",
    ]
    if include_runtime:
        lines.append(f"relative_runtime={m.relative_runtime!r}")
    return lines


def metrics_csv(m: SimMetrics, include_runtime: bool = True) -> str:
    cols = ["p_nmac", "p_alert", "p_reversal", "p_split", "encounters"]
    vals = [repr(m.p_nmac), repr(m.p_alert), repr(m.p_reversal),
            repr(m.p_split), str(m.encounters)]
    if include_runtime:
        cols.append("relative_runtime")
        vals.append(repr(m.relative_runtime))
    return ",".join(cols) + "\n" + ",".join(vals) + "\n"
