"""Desk-scale score-table generation by value iteration.

The underlying model is a relative-geometry Markov decision process: the
ownship applies an advisory's turn rate, the intruder turns at a rate drawn
from a small discrete distribution, both aircraft hold constant speed, and
successor states project to the nearest grid point.  Rewards penalize close
approaches at zero time-to-loss, alerting, reversals, and clear-of-conflict
choices inside the penalty band, which produces alerting-lobe policies at
artifact scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from skypress.table import (
    ADVISORIES,
    Advisory,
    GridSpec,
    N_ACTIONS,
    ScoreTable,
    StateVector,
    coc_band_mask,
    default_grid,
    grid_indices,
    nearest_cut_linear,
    wrap_angle,
)


@dataclass(frozen=True)
class MdpConfig:
    """Grid, rewards, intruder model, and convergence settings."""

    grid: GridSpec = field(default_factory=default_grid)
    discount: float = 0.97
    dt: float = 1.0
    nmac_penalty: float = -100.0
    alert_cost: float = -0.5
    strong_alert_cost: float = -0.5
    reversal_cost: float = -2.0
    coc_band_penalty: float = -15.0
    nmac_range: float = 500.0
    intruder_turns_deg: tuple[float, ...] = (-1.5, 0.0, 1.5)
    intruder_probs: tuple[float, ...] = (0.25, 0.5, 0.25)
    tol: float = 1e-6
    max_sweeps: int = 5000

    def __post_init__(self):
        if not 0.0 <= self.discount < 1.0:
            raise ValueError(f"discount must be in [0, 1), got {self.discount}")
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if len(self.intruder_turns_deg) != len(self.intruder_probs):
            raise ValueError("intruder turn set and probabilities differ in length")
        probs = np.asarray(self.intruder_probs, dtype=np.float64)
        if np.any(probs < 0.0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("intruder probabilities must be >= 0 and sum to 1")
        if self.tol <= 0.0:
            raise ValueError(f"tol must be positive, got {self.tol}")


class ConvergenceError(RuntimeError):
    """Value iteration hit the sweep cap before reaching tolerance."""

    def __init__(self, residual: float, sweeps: int):
        super().__init__(
            f"no convergence after {sweeps} sweeps, residual {residual:.3e}")
        self.residual = residual
        self.sweeps = sweeps


def step_arrays(rho, theta, psi, v_own, v_int, own_rate_deg, int_rate_deg,
                dt: float = 1.0):
    """Advance relative geometry one step (vectorized).

    Both aircraft move straight along their current headings for dt, then the
    headings turn by rate*dt; the relative state is re-derived in the frame of
    the ownship's new heading.
    """
    d_own = math.radians(1.0) * np.asarray(own_rate_deg, dtype=np.float64) * dt
    d_int = math.radians(1.0) * np.asarray(int_rate_deg, dtype=np.float64) * dt
    dx = rho * np.cos(theta) + v_int * dt * np.cos(psi) - v_own * dt
    dy = rho * np.sin(theta) + v_int * dt * np.sin(psi)
    rho_next = np.hypot(dx, dy)
    theta_next = wrap_angle(np.arctan2(dy, dx) - d_own)
    psi_next = wrap_angle(psi + d_int - d_own)
    return rho_next, theta_next, psi_next


def step_dynamics(s: StateVector, a: Advisory, intruder_turn_deg: float,
                  dt: float = 1.0) -> StateVector:
    """One transition: the advisory's turn rate on ownship, given intruder turn.

    Speeds are constant, tau counts down to a floor of zero, and the advisory
    becomes the successor's previous advisory.
    """
    rho, theta, psi = step_arrays(
        np.float64(s.rho), np.float64(s.theta), np.float64(s.psi),
        s.v_own, s.v_int, a.turn_rate_deg, intruder_turn_deg, dt)
    return StateVector(
        rho=float(rho), theta=float(theta), psi=float(psi),
        v_own=s.v_own, v_int=s.v_int,
        tau=max(s.tau - dt, 0.0), a_prev=a)


def reward(cfg: MdpConfig, s: StateVector, a: Advisory) -> float:
    """Immediate reward: NMAC, alerting, reversal, and band penalties.

    The NMAC boundary is inclusive because the default grid's smallest rho
    cutpoint coincides with the NMAC range.
    """
    r = 0.0
    if s.tau == 0.0 and s.rho <= cfg.nmac_range:
        r += cfg.nmac_penalty
    if a != Advisory.COC:
        r += cfg.alert_cost
    if a.is_strong:
        r += cfg.strong_alert_cost
    if a.direction * s.a_prev.direction == -1:
        r += cfg.reversal_cost
    if (a == Advisory.COC and s.a_prev != Advisory.COC
            and bool(coc_band_mask(s.rho, s.theta, s.psi, s.v_own, s.v_int))):
        r += cfg.coc_band_penalty
    return r


def _geo_mesh(grid: GridSpec):
    """Flattened meshes of the five geometric dimensions, row-major."""
    mesh = np.meshgrid(grid.rho, grid.theta, grid.psi, grid.v_own, grid.v_int,
                       indexing="ij")
    return [m.reshape(-1) for m in mesh]


def _successor_flat_geo(grid: GridSpec, rho, theta, psi, v_own, v_int,
                        own_rate_deg: float, int_rate_deg: float,
                        dt: float) -> np.ndarray:
    """Flat geometric index of the snapped successor for each mesh point."""
    rho2, theta2, psi2 = step_arrays(rho, theta, psi, v_own, v_int,
                                     own_rate_deg, int_rate_deg, dt)
    ir, it, ip, io, ii, _ = grid_indices(grid, rho2, theta2, psi2, v_own,
                                         v_int, np.zeros_like(rho2))
    geo_shape = (len(grid.rho), len(grid.theta), len(grid.psi),
                 len(grid.v_own), len(grid.v_int))
    return np.ravel_multi_index((ir, it, ip, io, ii), geo_shape)


def _reward_tensor(cfg: MdpConfig) -> np.ndarray:
    """Rewards over (geometry, tau, previous advisory, advisory), float64."""
    grid = cfg.grid
    rho, theta, psi, v_own, v_int = _geo_mesh(grid)
    n_geo = rho.size
    n_tau = len(grid.tau)

    nmac = (rho <= cfg.nmac_range).astype(np.float64) * cfg.nmac_penalty
    tau_zero = (grid.tau == 0.0).astype(np.float64)
    band = coc_band_mask(rho, theta, psi, v_own, v_int).astype(np.float64)

    alert = np.array([0.0 if a == Advisory.COC else cfg.alert_cost
                      for a in ADVISORIES])
    alert += np.array([cfg.strong_alert_cost if a.is_strong else 0.0
                       for a in ADVISORIES])
    direction = np.array([a.direction for a in ADVISORIES])
    reversal = np.where(np.outer(direction, direction) == -1,
                        cfg.reversal_cost, 0.0)  # (a_prev, a)
    prev_not_coc = np.array([1.0 if a != Advisory.COC else 0.0
                             for a in ADVISORIES])
    is_coc = np.array([1.0 if a == Advisory.COC else 0.0 for a in ADVISORIES])

    out = np.zeros((n_geo, n_tau, N_ACTIONS, N_ACTIONS))
    out += nmac[:, None, None, None] * tau_zero[None, :, None, None]
    out += alert[None, None, None, :]
    out += reversal[None, None, :, :]
    out += (cfg.coc_band_penalty * band[:, None, None, None]
            * prev_not_coc[None, None, :, None] * is_coc[None, None, None, :])
    return out


def solve_q(cfg: MdpConfig) -> np.ndarray:
    """Float64 action scores from synchronous sweeps to update residual <= tol.

    Returns scores shaped like a table payload.  Raises ConvergenceError if
    the sweep cap is reached first.
    """
    grid = cfg.grid
    rho, theta, psi, v_own, v_int = _geo_mesh(grid)
    n_geo = rho.size
    n_tau = len(grid.tau)

    turns = np.asarray(cfg.intruder_turns_deg, dtype=np.float64)
    probs = np.asarray(cfg.intruder_probs, dtype=np.float64)
    succ = np.empty((N_ACTIONS, len(turns), n_geo), dtype=np.int64)
    for a in ADVISORIES:
        for k, turn in enumerate(turns):
            succ[a, k] = _successor_flat_geo(
                grid, rho, theta, psi, v_own, v_int,
                a.turn_rate_deg, float(turn), cfg.dt)
    tau_next = nearest_cut_linear(grid.tau, np.maximum(grid.tau - cfg.dt, 0.0))

    rewards = _reward_tensor(cfg)
    q = np.zeros_like(rewards)
    expected = np.empty((n_geo, n_tau, N_ACTIONS))
    for _ in range(cfg.max_sweeps):
        v = q.max(axis=-1)  # (geo, tau, a_prev)
        for a in ADVISORIES:
            v_a = v[:, tau_next, a]  # successor a_prev is the action taken
            acc = probs[0] * v_a[succ[a, 0]]
            for k in range(1, len(turns)):
                acc += probs[k] * v_a[succ[a, k]]
            expected[:, :, a] = acc
        q_next = rewards + cfg.discount * expected[:, :, None, :]
        residual = float(np.max(np.abs(q_next - q)))
        q = q_next
        if residual <= cfg.tol:
            return q.reshape(grid.shape + (N_ACTIONS,))
    raise ConvergenceError(residual, cfg.max_sweeps)


def value_iterate(cfg: MdpConfig) -> ScoreTable:
    """Converged score table; the float32 cast happens at this boundary."""
    return ScoreTable(grid=cfg.grid, scores=solve_q(cfg).astype(np.float32))


def bellman_residual(scores, cfg: MdpConfig) -> float:
    """Max |Q - TQ| under one synchronous backup.

    Accepts a ScoreTable or a raw score array.  Note the float32 payload of a
    ScoreTable adds quantization on top of the solver's own residual.
    """
    grid = cfg.grid
    rho, theta, psi, v_own, v_int = _geo_mesh(grid)
    n_geo = rho.size
    n_tau = len(grid.tau)

    turns = np.asarray(cfg.intruder_turns_deg, dtype=np.float64)
    probs = np.asarray(cfg.intruder_probs, dtype=np.float64)
    tau_next = nearest_cut_linear(grid.tau, np.maximum(grid.tau - cfg.dt, 0.0))

    raw = scores.scores if isinstance(scores, ScoreTable) else scores
    q = np.asarray(raw, dtype=np.float64).reshape(
        n_geo, n_tau, N_ACTIONS, N_ACTIONS)
    v = q.max(axis=-1)
    expected = np.empty((n_geo, n_tau, N_ACTIONS))
    for a in ADVISORIES:
        v_a = v[:, tau_next, a]
        acc = np.zeros((n_geo, n_tau))
        for k, turn in enumerate(turns):
            flat = _successor_flat_geo(grid, rho, theta, psi, v_own, v_int,
                                       a.turn_rate_deg, float(turn), cfg.dt)
            acc += probs[k] * v_a[flat]
        expected[:, :, a] = acc
    backed_up = _reward_tensor(cfg) + cfg.discount * expected[:, :, None, :]
    return float(np.max(np.abs(backed_up - q)))
