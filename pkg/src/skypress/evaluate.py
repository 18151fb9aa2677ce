"""Fidelity metrics, policy-slice export, and latency benchmarking.

Any predictor is compared against the stored table by querying it at every
grid state: root-mean-square error over all score cells, the fraction of
states whose best advisory flips, and a row-normalized confusion matrix over
advisories.  Policy slices rasterize the advisory map over intruder position
for one fixed (speeds, time, previous advisory, heading) tuple.  The latency
benchmark times single-state queries on an identical pre-built stream.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .predictors import as_predictor
from .table import (ADVISORIES, Advisory, N_ACTIONS, GridSpec, ScoreTable,
                    StateVector, coc_band_mask, grid_feature_matrix)

# advisory index under a left/right mirror of the geometry
MIRROR_ADVISORY = np.array([0, 2, 1, 4, 3])


@dataclass(frozen=True)
class FidelityReport:
    """Table-level agreement metrics for one predictor."""

    rmse: float
    policy_error_pct: float
    confusion: np.ndarray = field(repr=False)  # (5, 5) row percentages
    storage_bytes: int
    params: int

    def __post_init__(self):
        c = np.asarray(self.confusion, dtype=np.float64)
        if c.shape != (N_ACTIONS, N_ACTIONS):
            raise ValueError(f"confusion must be 5x5, got {c.shape}")
        object.__setattr__(self, "confusion", c)


def fidelity_from_scores(ref_scores, pred_scores):
    """Metric core over aligned score rows: (rmse, policy_error_pct, confusion).

    Policy error counts rows whose argmax differs, ties resolving to the
    lowest advisory index on both sides.  Confusion rows are indexed by the
    reference advisory and normalized to percentages; an advisory absent from
    the reference policy keeps an identity row so every row sums to 100.
    """
    ref = np.asarray(ref_scores, dtype=np.float64)
    pred = np.asarray(pred_scores, dtype=np.float64)
    if ref.ndim != 2 or ref.shape[1] != N_ACTIONS or ref.shape[0] == 0:
        raise ValueError(f"expected (n, {N_ACTIONS}) reference scores, "
                         f"got shape {ref.shape}")
    if pred.shape != ref.shape:
        raise ValueError(f"score shapes differ: {pred.shape} vs {ref.shape}")
    rmse = float(np.sqrt(np.mean((pred - ref) ** 2)))
    ref_act = np.argmax(ref, axis=1)
    pred_act = np.argmax(pred, axis=1)
    policy_error_pct = 100.0 * float(np.mean(ref_act != pred_act))
    counts = np.zeros((N_ACTIONS, N_ACTIONS))
    np.add.at(counts, (ref_act, pred_act), 1.0)
    row_mass = counts.sum(axis=1)
    confusion = np.where(row_mass[:, None] > 0,
                         100.0 * counts / np.maximum(row_mass[:, None], 1.0),
                         100.0 * np.eye(N_ACTIONS))
    return rmse, policy_error_pct, confusion


def _first_bad_state(rows: np.ndarray, bad_row: int) -> str:
    names = ("rho", "theta", "psi", "v_own", "v_int", "tau", "a_prev_rate")
    vals = rows[bad_row]
    return ", ".join(f"{n}={v:g}" for n, v in zip(names, vals))


def evaluate_predictor(pred, table: ScoreTable, threads: int = 1) -> FidelityReport:
    """Exhaustive comparison of a predictor against every table state."""

    pred = as_predictor(pred)
    rows = grid_feature_matrix(table.grid)
    if threads > 1:
        chunks = np.array_split(np.arange(rows.shape[0]), threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: pred.predict_rows(rows[c]), chunks))
        scores = np.concatenate(parts, axis=0)
    else:
        scores = pred.predict_rows(rows)
    finite = np.isfinite(scores).all(axis=1)
    if not finite.all():
        bad = int(np.argmin(finite))
        raise ValueError(
            f"non-finite prediction at state {_first_bad_state(rows, bad)}")
    ref = table.scores.reshape(-1, N_ACTIONS)
    rmse, policy_error_pct, confusion = fidelity_from_scores(ref, scores)
    return FidelityReport(rmse=rmse, policy_error_pct=policy_error_pct,
                          confusion=confusion,
                          storage_bytes=pred.storage_bytes,
                          params=pred.param_count)


def report_lines(report: FidelityReport) -> list[str]:
    """Flat key=value form, one line per scalar plus one line per confusion row."""
    lines = [
        f"rmse={report.rmse!r}",
        f"policy_error_pct={report.policy_error_pct!r}",
        f"storage_bytes={report.storage_bytes}",
        f"params={report.params}",
    ]
    for a in ADVISORIES:
        row = ",".join(repr(float(v)) for v in report.confusion[int(a)])
        lines.append(f"confusion_{a.name}={row}")
    return lines


def report_csv(report: FidelityReport) -> str:
    """Single-row CSV with a header line; confusion cells flattened."""
    cols = ["rmse", "policy_error_pct", "storage_bytes", "params"]
    vals = [repr(report.rmse), repr(report.policy_error_pct),
            str(report.storage_bytes), str(report.params)]
    for a in ADVISORIES:
        for b in ADVISORIES:
            cols.append(f"conf_{a.name}_{b.name}")
            vals.append(repr(float(report.confusion[int(a), int(b)])))
    return ",".join(cols) + "\n" + ",".join(vals) + "\n"


@dataclass(frozen=True)
class SliceSpec:
    """Fixed non-positional state for a policy slice over intruder position.

    Cell centers are inclusive endpoints of the x/y extents, so refining
    resolution from r to 2r-1 keeps every existing center.  x is downrange
    along the ownship heading, y is crossrange with left positive; each cell
    queries the state at rho = hypot(x, y), theta = atan2(y, x).
    """

    v_own: float
    v_int: float
    tau: float
    a_prev: Advisory
    psi: float
    x_min: float = 0.0
    x_max: float = 60000.0
    y_min: float = -30000.0
    y_max: float = 30000.0

    def __post_init__(self):
        if self.v_own <= 0.0 or self.v_int <= 0.0:
            raise ValueError("speeds must be positive")
        if self.tau < 0.0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise ValueError("slice extents must be non-empty")
        if not isinstance(self.a_prev, Advisory):
            object.__setattr__(self, "a_prev", Advisory(self.a_prev))


@dataclass(frozen=True)
class PolicySlice:
    """Advisory raster: advisories[iy, ix] is the advisory at (x[ix], y[iy])."""

    spec: SliceSpec
    x: np.ndarray
    y: np.ndarray
    advisories: np.ndarray

    @property
    def resolution(self) -> int:
        return int(self.x.size)


def policy_slice(pred, spec: SliceSpec, resolution: int,
                 online_cost: float | None = None,
                 coc_penalty_value: float | None = None) -> PolicySlice:
    """Advisory map over intruder position for one fixed slice.

    Optional transforms mirror the query-time policy adjustments: subtract
    the online cost from the weak/no-alert scores when the previous advisory
    is strong, and add the clear-of-conflict band penalty to the COC score
    where the geometry is in the band.
    """
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2, got {resolution}")
    pred = as_predictor(pred)
    x = np.linspace(spec.x_min, spec.x_max, resolution)
    y = np.linspace(spec.y_min, spec.y_max, resolution)
    xg, yg = np.meshgrid(x, y, indexing="xy")
    rho = np.hypot(xg, yg).reshape(-1)
    theta = np.arctan2(yg, xg).reshape(-1)
    n = rho.size
    rows = np.empty((n, 7))
    rows[:, 0] = rho
    rows[:, 1] = theta
    rows[:, 2] = spec.psi
    rows[:, 3] = spec.v_own
    rows[:, 4] = spec.v_int
    rows[:, 5] = spec.tau
    rows[:, 6] = spec.a_prev.turn_rate_deg
    scores = np.asarray(pred.predict_rows(rows), dtype=np.float64)
    if online_cost is not None:
        if online_cost < 0.0:
            raise ValueError(f"online cost must be >= 0, got {online_cost}")
        if spec.a_prev in (Advisory.SL, Advisory.SR):
            scores[:, [Advisory.COC, Advisory.WL, Advisory.WR]] -= online_cost
    if coc_penalty_value is not None:
        if coc_penalty_value > 0.0:
            raise ValueError(
                f"penalty must be <= 0, got {coc_penalty_value}")
        if spec.a_prev != Advisory.COC:
            band = coc_band_mask(rho, theta, spec.psi, spec.v_own, spec.v_int)
            scores[band, Advisory.COC] += coc_penalty_value
    adv = np.argmax(scores, axis=1).reshape(resolution, resolution)
    return PolicySlice(spec=spec, x=x, y=y, advisories=adv.astype(np.int8))


def slice_csv(sl: PolicySlice) -> str:
    """Advisory indices, one raster row per line, y ascending down the file."""
    return "\n".join(",".join(str(int(v)) for v in row)
                     for row in sl.advisories) + "\n"


def slice_header(sl: PolicySlice) -> str:
    """Sidecar key=value block naming the fixed state and the raster layout."""
    s = sl.spec
    lines = [
        f"v_own={float(s.v_own)!r}",
        f"v_int={float(s.v_int)!r}",
        f"tau={float(s.tau)!r}",
        f"a_prev={s.a_prev.name}",
        f"psi={float(s.psi)!r}",
        f"x_min={float(s.x_min)!r}",
        f"x_max={float(s.x_max)!r}",
        f"y_min={float(s.y_min)!r}",
        f"y_max={float(s.y_max)!r}",
        f"resolution={sl.resolution}",
        "layout=rows over y ascending, columns over x ascending",
        "values=advisory indices 0:COC 1:WL 2:WR 3:SL 4:SR",
    ]
    return "\n".join(lines) + "\n"


def write_slice(path, sl: PolicySlice) -> None:
    """CSV of advisory indices plus a '<path>.header' sidecar."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(slice_csv(sl))
    with open(f"{path}.header", "w", encoding="ascii") as fh:
        fh.write(slice_header(sl))


def bench_queries(grid: GridSpec, n: int, rng: np.random.Generator) -> list:
    """Deterministic random query states spanning the grid plus margins."""
    states = []
    for _ in range(n):
        states.append(StateVector(
            rho=rng.uniform(0.0, grid.rho[-1] * 1.2),
            theta=rng.uniform(-math.pi, math.pi),
            psi=rng.uniform(-math.pi, math.pi),
            v_own=rng.uniform(grid.v_own[0] * 0.5, grid.v_own[-1] * 1.5),
            v_int=rng.uniform(grid.v_int[0] * 0.5, grid.v_int[-1] * 1.5),
            tau=rng.uniform(0.0, grid.tau[-1]),
            a_prev=Advisory(int(rng.integers(N_ACTIONS))),
        ))
    return states


@dataclass(frozen=True)
class BenchResult:
    """Per-predictor latency, raw and normalized to the table baseline."""

    kind: str
    mean_ns: float
    p99_ns: float
    mean_ratio: float
    p99_ratio: float


def bench_runtime(grid: GridSpec, preds, queries: int, rng) -> list[BenchResult]:
    """Single-state query latency on one shared stream, table-normalized.

    Every predictor answers the identical pre-built query list one state at a
    time on one thread; the first 10% of measurements are warm-up and drop
    out of the statistics.  Ratios divide by the first table predictor in the
    list.  Query generation happens before any clock starts.
    """
    from .predictors import TablePredictor

    if queries < 1000:
        raise ValueError(f"need >= 1000 queries, got {queries}")
    wrapped = [as_predictor(p) for p in preds]
    baseline = next((i for i, p in enumerate(wrapped)
                     if isinstance(p, TablePredictor)), None)
    if baseline is None:
        raise ValueError("benchmark needs a table predictor as the baseline")
    states = bench_queries(grid, queries, rng)
    warm = queries // 10
    stats = []
    for pred in wrapped:
        times = np.empty(queries)
        for i, s in enumerate(states):
            t0 = time.perf_counter_ns()
            pred.predict_state(s)
            times[i] = time.perf_counter_ns() - t0
        kept = times[warm:]
        stats.append((float(kept.mean()), float(np.percentile(kept, 99))))
    base_mean, base_p99 = stats[baseline]
    return [BenchResult(kind=getattr(p, "kind", type(p).__name__),
                        mean_ns=m, p99_ns=q,
                        mean_ratio=m / base_mean, p99_ratio=q / base_p99)
            for p, (m, q) in zip(wrapped, stats)]


def bench_csv(results: list[BenchResult]) -> str:
    """One CSV row per predictor with raw and normalized latencies."""
    lines = ["kind,mean_ns,p99_ns,mean_ratio,p99_ratio"]
    for r in results:
        lines.append(f"{r.kind},{r.mean_ns!r},{r.p99_ns!r},"
                     f"{r.mean_ratio!r},{r.p99_ratio!r}")
    return "\n".join(lines) + "\n"
