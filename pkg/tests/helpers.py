"""Shared test utilities: independent oracles and small-grid builders."""

from __future__ import annotations

import math

import numpy as np

from skypress.table import (
    Advisory,
    GridSpec,
    N_ACTIONS,
    ScoreTable,
    StateVector,
    angle_grid,
    wrap_angle,
)


def small_grid() -> GridSpec:
    """Tiny grid for fast unit tests (864 states)."""
    return GridSpec(
        rho=np.array([500.0, 1000.0, 2000.0, 8000.0]),
        theta=angle_grid(3),
        psi=angle_grid(3),
        v_own=np.array([100.0, 300.0]),
        v_int=np.array([100.0, 300.0]),
        tau=np.array([0.0, 20.0]),
    )


def random_table(grid: GridSpec, rng: np.random.Generator,
                 lo: float = -30.0, hi: float = 5.0) -> ScoreTable:
    shape = grid.shape + (N_ACTIONS,)
    scores = rng.uniform(lo, hi, size=shape).astype(np.float32)
    return ScoreTable(grid=grid, scores=scores)


def random_state(grid: GridSpec, rng: np.random.Generator) -> StateVector:
    """Random query state spanning the grid ranges plus off-grid margins."""
    return StateVector(
        rho=rng.uniform(0.0, grid.rho[-1] * 1.2),
        theta=rng.uniform(-math.pi, math.pi),
        psi=rng.uniform(-math.pi, math.pi),
        v_own=rng.uniform(grid.v_own[0] * 0.5, grid.v_own[-1] * 1.5),
        v_int=rng.uniform(grid.v_int[0] * 0.5, grid.v_int[-1] * 1.5),
        tau=rng.uniform(0.0, grid.tau[-1] * 1.2),
        a_prev=Advisory(int(rng.integers(N_ACTIONS))),
    )


def exhaustive_nearest_indices(grid: GridSpec, s: StateVector) -> tuple[int, ...]:
    """Brute-force scan of the whole grid product for the nearest point.

    Sums per-dimension distances (wrapped on angular dims) over every grid
    point; the first minimum in row-major order is the lexicographically
    lowest index tuple, which matches the per-dimension lower-tie rule.
    """
    axes = grid.axes()
    values = [getattr(s, name) for name, _, _ in axes]
    per_dim = []
    for (name, cuts, angular), x in zip(axes, values):
        if angular:
            per_dim.append(np.abs(wrap_angle(x - cuts)))
        else:
            per_dim.append(np.abs(x - cuts))
    total = np.zeros([len(d) for d in per_dim])
    for axis, dist in enumerate(per_dim):
        shape = [1] * len(per_dim)
        shape[axis] = len(dist)
        total = total + dist.reshape(shape)
    flat = int(np.argmin(total))
    idx = np.unravel_index(flat, total.shape)
    return tuple(int(i) for i in idx) + (int(s.a_prev),)


def sweep_min_separation(s: StateVector, t_max: float = 200.0,
                         dt: float = 0.01) -> float:
    """Independent CPA check: dense time sweep of straight-line separation."""
    t = np.arange(0.0, t_max + dt, dt)
    px = s.rho * math.cos(s.theta)
    py = s.rho * math.sin(s.theta)
    dx = s.v_int * math.cos(s.psi) - s.v_own
    dy = s.v_int * math.sin(s.psi)
    sep = np.hypot(px + t * dx, py + t * dy)
    return float(sep.min())


def micro_grid() -> GridSpec:
    """Irregular 1080-state grid for the independent value-iteration oracle."""
    return GridSpec(
        rho=np.array([500.0, 1700.0, 4300.0]),
        theta=np.array([-2.25, -0.5, 1.75]),
        psi=np.array([-1.5, 0.25, 2.5]),
        v_own=np.array([163.0, 419.0]),
        v_int=np.array([163.0, 419.0]),
        tau=np.array([0.0, 1.0]),
    )


def independent_bellman(cfg, tol: float = 1e-12,
                        max_sweeps: int = 5000) -> np.ndarray:
    """Hand-rolled value iteration sharing no snapping/stepping/reward code.

    Transition structure and rewards are built with scalar math (own wrap,
    own nearest-cutpoint scan, own turn-then-derive kinematics, own CPA);
    the Bellman fixed point is then iterated on those precomputed arrays.
    Returns scores shaped like a ScoreTable payload, float64.
    """
    import itertools

    grid = cfg.grid
    turn_rate = {0: 0.0, 1: 1.5, 2: -1.5, 3: 3.0, 4: -3.0}
    direction = {0: 0, 1: 1, 2: -1, 3: 1, 4: -1}

    def wrap(a: float) -> float:
        w = a % (2.0 * math.pi)
        return w - 2.0 * math.pi if w > math.pi else w

    def snap(cuts, x: float, angular: bool) -> int:
        best, best_d = 0, float("inf")
        for i, c in enumerate(cuts):
            d = abs(wrap(x - c)) if angular else abs(x - c)
            if d < best_d:
                best, best_d = i, d
        return best

    def step(rho, th, ps, vo, vi, own_deg, int_deg):
        own_x = vo * cfg.dt
        own_h = math.radians(own_deg) * cfg.dt
        int_x = rho * math.cos(th) + vi * cfg.dt * math.cos(ps)
        int_y = rho * math.sin(th) + vi * cfg.dt * math.sin(ps)
        int_h = ps + math.radians(int_deg) * cfg.dt
        dx, dy = int_x - own_x, int_y
        return (math.hypot(dx, dy), wrap(math.atan2(dy, dx) - own_h),
                wrap(int_h - own_h))

    def rew(rho, th, ps, vo, vi, tau, prev, act) -> float:
        r = 0.0
        if tau == 0.0 and rho <= cfg.nmac_range:
            r += cfg.nmac_penalty
        if act != 0:
            r += cfg.alert_cost
        if act in (3, 4):
            r += cfg.strong_alert_cost
        if direction[act] * direction[prev] == -1:
            r += cfg.reversal_cost
        if act == 0 and prev != 0:
            dx = vi * math.cos(ps) - vo
            dy = vi * math.sin(ps)
            px = rho * math.cos(th)
            py = rho * math.sin(th)
            den = dx * dx + dy * dy
            if den > 0.0:
                t_cpa = -(px * dx + py * dy) / den
                d_cpa = math.hypot(px + t_cpa * dx, py + t_cpa * dy)
            else:
                t_cpa, d_cpa = 0.0, rho
            if t_cpa >= 0.0 and d_cpa < 4000.0:
                r += cfg.coc_band_penalty
        return r

    axes = [(grid.rho, False), (grid.theta, True), (grid.psi, True),
            (grid.v_own, False), (grid.v_int, False)]
    sizes = [len(c) for c, _ in axes]
    geo_tuples = list(itertools.product(*[range(n) for n in sizes]))
    n_geo, n_tau = len(geo_tuples), len(grid.tau)
    flat = {g: i for i, g in enumerate(geo_tuples)}

    turns = list(cfg.intruder_turns_deg)
    probs = list(cfg.intruder_probs)
    succ = np.empty((n_geo, 5, len(turns)), dtype=np.int64)
    rewards = np.empty((n_geo, n_tau, 5, 5))
    for gi, g in enumerate(geo_tuples):
        rho = float(grid.rho[g[0]])
        th = float(grid.theta[g[1]])
        ps = float(grid.psi[g[2]])
        vo = float(grid.v_own[g[3]])
        vi = float(grid.v_int[g[4]])
        for act in range(5):
            for k, turn in enumerate(turns):
                r2, t2, p2 = step(rho, th, ps, vo, vi, turn_rate[act], turn)
                idx = (snap(grid.rho, r2, False), snap(grid.theta, t2, True),
                       snap(grid.psi, p2, True), g[3], g[4])
                succ[gi, act, k] = flat[idx]
        for ti in range(n_tau):
            for prev in range(5):
                for act in range(5):
                    rewards[gi, ti, prev, act] = rew(
                        rho, th, ps, vo, vi, float(grid.tau[ti]), prev, act)
    tau_next = [snap(grid.tau, max(float(t) - cfg.dt, 0.0), False)
                for t in grid.tau]

    q = np.zeros((n_geo, n_tau, 5, 5))
    for _ in range(max_sweeps):
        v = q.max(axis=-1)
        expected = np.zeros((n_geo, n_tau, 5))
        for act in range(5):
            v_a = v[:, tau_next, act]
            for k, p in enumerate(probs):
                expected[:, :, act] += p * v_a[succ[:, act, k]]
        q_next = rewards + cfg.discount * expected[:, :, None, :]
        residual = float(np.max(np.abs(q_next - q)))
        q = q_next
        if residual <= tol:
            break
    return q.reshape(grid.shape + (5,))
