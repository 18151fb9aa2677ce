"""Gridded collision-avoidance score tables and the policy operations on them.

A score table maps a 7-dimensional aircraft-pair state (range, bearing,
relative heading, two speeds, time to loss of separation, previous advisory)
to one score per horizontal advisory.  Off-grid states snap per dimension to
the nearest cutpoint.  The module also carries the closest-point-of-approach
geometry and the two score transforms (clear-of-conflict penalty band,
online advisory costs) shared by table generation, evaluation, and simulation.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

TWO_PI = 2.0 * math.pi

# Horizontal separation (ft) under which a closing geometry sits in the
# clear-of-conflict penalty band.
COC_BAND_SEP_FT = 4000.0
DEFAULT_COC_PENALTY = -15.0
DEFAULT_ONLINE_COST = 1.0

N_ACTIONS = 5

FEATURE_NAMES = ("rho", "theta", "psi", "v_own", "v_int", "tau", "a_prev")


class Advisory(IntEnum):
    """Horizontal resolution advisories, ordered; ties resolve to the lowest."""

    COC = 0  # clear of conflict
    WL = 1   # weak left
    WR = 2   # weak right
    SL = 3   # strong left
    SR = 4   # strong right

    @property
    def turn_rate_deg(self) -> float:
        """Commanded ownship turn rate in deg/s, left positive."""
        return _TURN_RATE_DEG[self]

    @property
    def direction(self) -> int:
        """+1 for left advisories, -1 for right, 0 for clear of conflict."""
        if self in (Advisory.WL, Advisory.SL):
            return 1
        if self in (Advisory.WR, Advisory.SR):
            return -1
        return 0

    @property
    def is_strong(self) -> bool:
        return self in (Advisory.SL, Advisory.SR)


_TURN_RATE_DEG = {
    Advisory.COC: 0.0,
    Advisory.WL: 1.5,
    Advisory.WR: -1.5,
    Advisory.SL: 3.0,
    Advisory.SR: -3.0,
}

ADVISORIES = tuple(Advisory)


def wrap_angle(angle):
    """Wrap an angle (scalar or array) into (-pi, pi]."""
    wrapped = np.remainder(angle, TWO_PI)
    wrapped = np.where(wrapped > math.pi, wrapped - TWO_PI, wrapped)
    if np.ndim(angle) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class StateVector:
    """Relative aircraft-pair state; angles are wrapped into (-pi, pi]."""

    rho: float       # horizontal separation, ft
    theta: float     # bearing of intruder from ownship heading, rad
    psi: float       # intruder heading relative to ownship heading, rad
    v_own: float     # ownship ground speed, ft/s
    v_int: float     # intruder ground speed, ft/s
    tau: float       # time to loss of vertical separation, s
    a_prev: Advisory

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))
        object.__setattr__(self, "psi", wrap_angle(self.psi))
        if self.rho < 0.0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        if self.v_own <= 0.0 or self.v_int <= 0.0:
            raise ValueError("speeds must be positive")
        if self.tau < 0.0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if not isinstance(self.a_prev, Advisory):
            object.__setattr__(self, "a_prev", Advisory(self.a_prev))

    def features(self) -> np.ndarray:
        """Numeric feature row; the previous advisory enters as its turn rate."""
        return np.array(
            [self.rho, self.theta, self.psi, self.v_own, self.v_int,
             self.tau, self.a_prev.turn_rate_deg],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class CpaResult:
    """Closest point of approach under straight-line extrapolation."""

    t_cpa: float  # time of closest approach, s (negative means diverging)
    d_cpa: float  # separation at closest approach, ft


@dataclass(frozen=True)
class BeliefSample:
    """One weighted state hypothesis used for belief-weighted advisories."""

    state: StateVector
    weight: float

    def __post_init__(self):
        if not (self.weight >= 0.0 and math.isfinite(self.weight)):
            raise ValueError(f"weight must be finite and >= 0, got {self.weight}")


def _as_cutpoints(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(eq=False)
class GridSpec:
    """Cutpoints per state dimension; the previous-advisory axis is implicit.

    Cutpoints must be float32-representable because the table file format
    stores them as f32; every dimension needs at least 2 points except tau
    (at least 1), strictly increasing, and the angular dimensions must lie
    within (-pi, pi].
    """

    rho: np.ndarray
    theta: np.ndarray
    psi: np.ndarray
    v_own: np.ndarray
    v_int: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        for name, min_len in (("rho", 2), ("theta", 2), ("psi", 2),
                              ("v_own", 2), ("v_int", 2), ("tau", 1)):
            cuts = _as_cutpoints(getattr(self, name))
            object.__setattr__(self, name, cuts)
            if len(cuts) < min_len:
                raise ValueError(f"{name} grid needs >= {min_len} cutpoints")
            if not np.all(np.isfinite(cuts)):
                raise ValueError(f"{name} grid has non-finite cutpoints")
            if np.any(np.diff(cuts) <= 0):
                raise ValueError(f"{name} grid must be strictly increasing")
            if np.any(cuts.astype(np.float32).astype(np.float64) != cuts):
                raise ValueError(f"{name} cutpoints must be float32-representable")
        for name in ("theta", "psi"):
            cuts = getattr(self, name)
            if cuts[0] <= -math.pi or cuts[-1] > math.pi:
                raise ValueError(f"{name} cutpoints must lie in (-pi, pi]")

    def axes(self) -> list[tuple[str, np.ndarray, bool]]:
        """(name, cutpoints, is_angular) for the six continuous dimensions."""
        return [
            ("rho", self.rho, False),
            ("theta", self.theta, True),
            ("psi", self.psi, True),
            ("v_own", self.v_own, False),
            ("v_int", self.v_int, False),
            ("tau", self.tau, False),
        ]

    @property
    def shape(self) -> tuple[int, ...]:
        """State-space shape including the previous-advisory axis."""
        return (len(self.rho), len(self.theta), len(self.psi),
                len(self.v_own), len(self.v_int), len(self.tau), N_ACTIONS)

    @property
    def n_states(self) -> int:
        return int(np.prod(self.shape))


def _f32_exact(values) -> np.ndarray:
    return np.asarray(values, dtype=np.float32).astype(np.float64)


def angle_grid(n: int) -> np.ndarray:
    """n uniform angular cutpoints over (-pi, pi], float32-exact.

    The pi endpoint is represented by the largest float32 below pi so the
    cutpoints satisfy the open-left interval after float32 storage.
    """
    pts = -math.pi + TWO_PI * np.arange(1, n + 1) / n
    pts = pts.astype(np.float32)
    pts[-1] = np.nextafter(np.float32(math.pi), np.float32(0.0))
    return pts.astype(np.float64)


def default_grid() -> GridSpec:
    """Desk-scale grid: 393,660 states, a few MB as float32 scores."""
    return GridSpec(
        rho=_f32_exact(np.geomspace(500.0, 60000.0, 12)),
        theta=angle_grid(9),
        psi=angle_grid(9),
        v_own=_f32_exact([100.0, 300.0, 600.0]),
        v_int=_f32_exact([100.0, 300.0, 600.0]),
        tau=_f32_exact([0.0, 1.0, 5.0, 10.0, 20.0, 40.0, 60.0, 80.0, 100.0]),
    )


@dataclass(eq=False)
class ScoreTable:
    """Dense float32 score array over a grid, one score per advisory."""

    grid: GridSpec
    scores: np.ndarray = field(repr=False)

    def __post_init__(self):
        expected = self.grid.shape + (N_ACTIONS,)
        self.scores = np.ascontiguousarray(self.scores, dtype=np.float32)
        if self.scores.shape != expected:
            raise ValueError(
                f"scores shape {self.scores.shape} != grid shape {expected}")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")


def nearest_cut_linear(cuts: np.ndarray, value) -> np.ndarray:
    """Index of the nearest cutpoint; ties and out-of-range clamp to the lower."""
    x = np.asarray(value, dtype=np.float64)
    i = np.searchsorted(cuts, x)
    lo = np.clip(i - 1, 0, len(cuts) - 1)
    hi = np.clip(i, 0, len(cuts) - 1)
    return np.where(x - cuts[lo] <= cuts[hi] - x, lo, hi)


def nearest_cut_wrapped(cuts: np.ndarray, value) -> np.ndarray:
    """Nearest cutpoint under wrapped angular distance; ties pick the lower."""
    x = np.asarray(value, dtype=np.float64)
    dist = np.abs(wrap_angle(x[..., None] - cuts))
    return np.argmin(dist, axis=-1)


def grid_indices(grid: GridSpec, rho, theta, psi, v_own, v_int, tau):
    """Vectorized per-dimension snap; returns six integer index arrays."""
    return (
        nearest_cut_linear(grid.rho, rho),
        nearest_cut_wrapped(grid.theta, theta),
        nearest_cut_wrapped(grid.psi, psi),
        nearest_cut_linear(grid.v_own, v_own),
        nearest_cut_linear(grid.v_int, v_int),
        nearest_cut_linear(grid.tau, tau),
    )


def grid_feature_matrix(grid: GridSpec) -> np.ndarray:
    """Feature rows of every grid state, row-major over the grid shape.

    Row k corresponds to table.scores.reshape(-1, 5)[k]; the previous
    advisory is encoded as its turn rate, matching StateVector.features().
    """
    rates = np.array([a.turn_rate_deg for a in ADVISORIES])
    mesh = np.meshgrid(grid.rho, grid.theta, grid.psi, grid.v_own, grid.v_int,
                       grid.tau, rates, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def nearest_indices(grid: GridSpec, s: StateVector) -> tuple[int, ...]:
    """Grid index of the state, one entry per dimension plus the advisory axis."""
    idx = grid_indices(grid, s.rho, s.theta, s.psi, s.v_own, s.v_int, s.tau)
    return tuple(int(i) for i in idx) + (int(s.a_prev),)


def lookup_nearest(table: ScoreTable, s: StateVector) -> np.ndarray:
    """Score row (5 values) of the grid point nearest to the query state."""
    return table.scores[nearest_indices(table.grid, s)].copy()


def optimal_action(scores) -> Advisory:
    """Advisory with the highest score; ties resolve to the lowest index."""
    row = np.asarray(scores)
    if row.shape != (N_ACTIONS,):
        raise ValueError(f"expected {N_ACTIONS} scores, got shape {row.shape}")
    return Advisory(int(np.argmax(row)))


def _score_row(source, s: StateVector) -> np.ndarray:
    if isinstance(source, ScoreTable):
        return lookup_nearest(source, s)
    return source.predict_state(s)


def belief_scores(source, samples, transform=None) -> np.ndarray:
    """Weight-summed score row over belief samples, optionally transformed."""
    if not samples:
        raise ValueError("belief sample set is empty")
    total = np.zeros(N_ACTIONS, dtype=np.float64)
    for sample in samples:
        row = np.asarray(_score_row(source, sample.state), dtype=np.float64)
        if transform is not None:
            row = transform(row, sample.state)
        total += sample.weight * row
    return total


def belief_action(source, samples, transform=None) -> Advisory:
    """Advisory maximizing the belief-weighted score sum."""
    return optimal_action(belief_scores(source, samples, transform))


def cpa_arrays(rho, theta, psi, v_own, v_int):
    """Vectorized closest-point-of-approach time and separation.

    Zero relative velocity degenerates to (t_cpa=0, d_cpa=rho).
    """
    rho = np.asarray(rho, dtype=np.float64)
    dx = v_int * np.cos(psi) - v_own
    dy = v_int * np.sin(psi)
    px = rho * np.cos(theta)
    py = rho * np.sin(theta)
    den = dx * dx + dy * dy
    moving = den > 0.0
    t_cpa = np.where(moving, -(px * dx + py * dy) / np.where(moving, den, 1.0), 0.0)
    d_cpa = np.where(moving, np.hypot(px + t_cpa * dx, py + t_cpa * dy), rho)
    return t_cpa, d_cpa


def cpa_geometry(s: StateVector) -> CpaResult:
    """Closest point of approach for one state."""
    t_cpa, d_cpa = cpa_arrays(s.rho, s.theta, s.psi, s.v_own, s.v_int)
    return CpaResult(float(t_cpa), float(d_cpa))


def coc_band_mask(rho, theta, psi, v_own, v_int):
    """Geometric penalty-band predicate: still closing and close at approach.

    Single source of truth shared by the score transform and table generation.
    """
    t_cpa, d_cpa = cpa_arrays(rho, theta, psi, v_own, v_int)
    return (t_cpa >= 0.0) & (d_cpa < COC_BAND_SEP_FT)


def coc_band_active(s: StateVector) -> bool:
    """Whether the state's geometry lies in the clear-of-conflict penalty band."""
    return bool(coc_band_mask(s.rho, s.theta, s.psi, s.v_own, s.v_int))


def coc_penalty(scores, s: StateVector, mode: str = "apply",
                penalty: float = DEFAULT_COC_PENALTY) -> np.ndarray:
    """Apply or strip the clear-of-conflict band penalty on a score row.

    The penalty (<= 0) lands only on the COC score, only when the previous
    advisory was not COC and the geometry is in the band.  Arithmetic is done
    in float64 so strip(apply(row)) is bit-exact for float32 score rows.
    """
    if mode not in ("apply", "strip"):
        raise ValueError(f"mode must be 'apply' or 'strip', got {mode!r}")
    if penalty > 0.0:
        raise ValueError(f"penalty must be <= 0, got {penalty}")
    row = np.asarray(scores, dtype=np.float64).copy()
    if row.shape != (N_ACTIONS,):
        raise ValueError(f"expected {N_ACTIONS} scores, got shape {row.shape}")
    if s.a_prev != Advisory.COC and coc_band_active(s):
        if mode == "apply":
            row[Advisory.COC] += penalty
        else:
            row[Advisory.COC] -= penalty
    return row


def online_costs(scores, a_prev: Advisory,
                 cost: float = DEFAULT_ONLINE_COST) -> np.ndarray:
    """Subtract the weak/no-alert cost after a strong advisory.

    After SL or SR, the COC and weak-advisory scores drop by `cost` (>= 0) so
    the policy does not relax a strong alert for a marginal score difference.
    """
    if cost < 0.0:
        raise ValueError(f"cost must be >= 0, got {cost}")
    row = np.asarray(scores, dtype=np.float64).copy()
    if row.shape != (N_ACTIONS,):
        raise ValueError(f"expected {N_ACTIONS} scores, got shape {row.shape}")
    if a_prev in (Advisory.SL, Advisory.SR):
        row[[Advisory.COC, Advisory.WL, Advisory.WR]] -= cost
    return row


class TableCodecError(ValueError):
    """Raised when table bytes cannot be encoded or decoded."""


class BadMagicError(TableCodecError):
    """File does not start with the table magic."""


class TruncatedPayloadError(TableCodecError):
    """File ends before the declared payload, or carries trailing bytes."""


class NonFiniteValueError(TableCodecError):
    """Decoded cutpoints or scores contain NaN or infinity."""


TABLE_MAGIC = b"ACTB"
TABLE_VERSION = 1
_N_DIMS = 7  # six continuous dimensions plus the previous-advisory axis


def encode_table(table: ScoreTable) -> bytes:
    """Serialize a table: magic, version, cutpoints per dim, f32 scores.

    Little-endian throughout; scores are row-major with the action index
    fastest.  The previous-advisory axis has no cutpoints, so the dimension
    count (7) exceeds the number of cutpoint blocks (6) by one.
    """
    parts = [TABLE_MAGIC, struct.pack("<II", TABLE_VERSION, _N_DIMS)]
    for name, cuts, _ in table.grid.axes():
        if len(cuts) == 0:
            raise TableCodecError(f"cannot encode empty {name} dimension")
        parts.append(struct.pack("<I", len(cuts)))
        parts.append(cuts.astype("<f4").tobytes())
    parts.append(struct.pack("<I", N_ACTIONS))
    parts.append(np.ascontiguousarray(table.scores, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedPayloadError(
                f"need {n} bytes at offset {self.pos}, have {len(self.data) - self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def decode_table(data: bytes) -> ScoreTable:
    """Inverse of encode_table; raises distinct errors per failure mode."""
    r = _Reader(data)
    if r.take(4) != TABLE_MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}, expected {TABLE_MAGIC!r}")
    version = r.u32()
    if version != TABLE_VERSION:
        raise TableCodecError(f"unsupported version {version}")
    n_dims = r.u32()
    if n_dims != _N_DIMS:
        raise TableCodecError(f"expected {_N_DIMS} dimensions, got {n_dims}")
    cut_arrays = []
    for _ in range(_N_DIMS - 1):
        n = r.u32()
        cuts = np.frombuffer(r.take(4 * n), dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(cuts)):
            raise NonFiniteValueError("non-finite cutpoint")
        cut_arrays.append(cuts)
    n_actions = r.u32()
    if n_actions != N_ACTIONS:
        raise TableCodecError(f"expected {N_ACTIONS} actions, got {n_actions}")
    try:
        grid = GridSpec(*cut_arrays)
    except ValueError as exc:
        raise TableCodecError(f"invalid grid: {exc}") from exc
    n_scores = grid.n_states * N_ACTIONS
    scores = np.frombuffer(r.take(4 * n_scores), dtype="<f4")
    if r.pos != len(data):
        raise TruncatedPayloadError(f"{len(data) - r.pos} trailing bytes")
    if not np.all(np.isfinite(scores)):
        raise NonFiniteValueError("non-finite score")
    scores = scores.reshape(grid.shape + (N_ACTIONS,)).copy()
    return ScoreTable(grid=grid, scores=scores)


def write_table(path, table: ScoreTable) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_table(table))


def read_table(path) -> ScoreTable:
    with open(path, "rb") as fh:
        return decode_table(fh.read())
