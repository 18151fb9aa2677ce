"""Compact feed-forward networks that stand in for score table slices.

Everything here is hand-rolled on numpy: forward/backward passes, the
argmax-preserving asymmetric loss, the AdaMax optimizer, per-slice training
of the network array, magnitude pruning with retraining, and a line-based
text format for the weights.  Training runs in float64; weights are cast
through float32 at init and on serialization so files round-trip exactly.
"""

from __future__ import annotations

import concurrent.futures
import os
from dataclasses import dataclass, field

import numpy as np

from .config import stream
from .table import (
    ADVISORIES,
    DEFAULT_COC_PENALTY,
    DEFAULT_ONLINE_COST,
    N_ACTIONS,
    Advisory,
    GridSpec,
    ScoreTable,
    StateVector,
    coc_band_mask,
)

GEO_INPUTS = 5  # rho, theta, psi, v_own, v_int
U_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# network
# ---------------------------------------------------------------------------


@dataclass
class Mlp:
    """ReLU feed-forward net with input/output normalization baked in.

    weights[l] has shape (n_in, n_out); hidden layers apply ReLU, the output
    layer is linear.  Inputs are normalized to (x - mean) / range and the
    single shared output normalization is inverted on the way out, which
    keeps the ordering of the 5 scores intact.
    """

    weights: list
    biases: list
    input_mean: np.ndarray
    input_range: np.ndarray
    output_mean: float
    output_range: float

    def __post_init__(self) -> None:
        self.weights = [np.ascontiguousarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.ascontiguousarray(b, dtype=np.float64) for b in self.biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or b.shape[0] != w.shape[1]:
                raise ValueError(f"layer {i}: weight/bias shapes disagree")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError(f"layer {i}: input size does not match layer {i - 1}")
        self.input_mean = np.asarray(self.input_mean, dtype=np.float64).copy()
        self.input_range = np.asarray(self.input_range, dtype=np.float64).copy()
        if self.input_mean.shape != (self.weights[0].shape[0],):
            raise ValueError("input normalization length does not match layer 0")
        if self.input_range.shape != self.input_mean.shape:
            raise ValueError("input mean/range lengths differ")
        if not np.all(self.input_range > 0.0):
            raise ValueError("input ranges must be positive")
        self.output_mean = float(self.output_mean)
        self.output_range = float(self.output_range)
        if not self.output_range > 0.0:
            raise ValueError("output range must be positive")

    @property
    def layer_sizes(self) -> tuple:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    @property
    def nonzero_weights(self) -> int:
        return int(sum(np.count_nonzero(w) for w in self.weights))

    @property
    def sparsity(self) -> float:
        total = sum(w.size for w in self.weights)
        return 1.0 - self.nonzero_weights / total

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                   self.input_mean, self.input_range,
                   self.output_mean, self.output_range)


def init_mlp(layer_sizes, rng: np.random.Generator,
             input_mean=None, input_range=None,
             output_mean: float = 0.0, output_range: float = 1.0) -> Mlp:
    """Fresh net with uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases.

    Weights are drawn in float64 and cast through float32 so a freshly
    initialized net serializes without loss.
    """
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ValueError("layer_sizes needs >= 2 positive entries")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        weights.append(w.astype(np.float32).astype(np.float64))
        biases.append(np.zeros(fan_out))
    if input_mean is None:
        input_mean = np.zeros(sizes[0])
    if input_range is None:
        input_range = np.ones(sizes[0])
    return Mlp(weights, biases, input_mean, input_range, output_mean, output_range)


def _as_input_rows(net: Mlp, x) -> tuple[np.ndarray, bool]:
    if isinstance(x, StateVector):
        x = x.features()[:net.weights[0].shape[0]]
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = x[None, :] if single else x
    if rows.ndim != 2 or rows.shape[1] != net.weights[0].shape[0]:
        raise ValueError(f"input has {rows.shape[-1]} features, "
                         f"net expects {net.weights[0].shape[0]}")
    return rows, single


def _forward_normalized(net: Mlp, z: np.ndarray) -> np.ndarray:
    h = z
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i != last:
            np.maximum(h, 0.0, out=h)
    return h


def forward(net: Mlp, x) -> np.ndarray:
    """Denormalized outputs for one input vector or a batch of rows."""
    rows, single = _as_input_rows(net, x)
    z = (rows - net.input_mean) / net.input_range
    out = _forward_normalized(net, z) * net.output_range + net.output_mean
    return out[0] if single else out


def _forward_cached(net: Mlp, z: np.ndarray):
    """Normalized-space forward keeping post-activation values per layer."""
    acts = [z]
    last = len(net.weights) - 1
    h = z
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i != last:
            np.maximum(h, 0.0, out=h)
        acts.append(h)
    return acts


def _backprop(net: Mlp, acts, grad_out: np.ndarray):
    """Gradients of a scalar loss wrt weights/biases, given dloss/doutput."""
    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.biases)
    delta = grad_out
    for i in range(len(net.weights) - 1, -1, -1):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ net.weights[i].T) * (acts[i] > 0.0)
    return grads_w, grads_b


# ---------------------------------------------------------------------------
# asymmetric loss
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LossConfig:
    """Squared-error scaling that protects the ordering around the argmax.

    The asymmetric contract requires factor_opt = 4 * factor_sub; the single
    exception is factor_opt == factor_sub, which degenerates to plain (scaled)
    MSE and exists as the symmetric training baseline.
    """

    factor_opt: float = 20.0
    factor_sub: float = 5.0

    def __post_init__(self) -> None:
        if self.factor_opt < 1.0 or self.factor_sub < 1.0:
            raise ValueError("loss factors must be >= 1")
        if (self.factor_opt != self.factor_sub
                and self.factor_opt != 4.0 * self.factor_sub):
            raise ValueError("factor_opt must be 4x factor_sub (or equal, for "
                             "the symmetric baseline)")


def asymmetric_loss(pred: np.ndarray, target: np.ndarray, opt,
                    cfg: LossConfig = LossConfig()):
    """Loss and d(loss)/d(pred) for one row or a batch of rows.

    Per element e = pred - target: the optimal action's error is scaled by
    factor_opt when e < 0 (score under-estimated), any other action's by
    factor_sub when e > 0 (over-estimated); otherwise plain e^2.  The loss
    is the mean over the 5 actions, then over rows.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    single = pred.ndim == 1
    p = pred[None, :] if single else pred
    t = target[None, :] if single else target
    if p.shape != t.shape or p.shape[1] != N_ACTIONS:
        raise ValueError("pred/target must be rows of 5 scores")
    idx = np.atleast_1d(np.asarray(opt, dtype=np.intp))
    if idx.shape != (p.shape[0],):
        raise ValueError("one optimal index per row required")
    if idx.min() < 0 or idx.max() >= N_ACTIONS:
        raise ValueError("optimal index out of range")
    e = p - t
    factors = np.ones_like(e)
    rows = np.arange(p.shape[0])
    opt_mask = np.zeros_like(e, dtype=bool)
    opt_mask[rows, idx] = True
    factors[opt_mask & (e < 0.0)] = cfg.factor_opt
    factors[~opt_mask & (e > 0.0)] = cfg.factor_sub
    n = p.shape[0]
    loss = float((factors * e * e).sum() / (N_ACTIONS * n))
    grad = 2.0 * factors * e / (N_ACTIONS * n)
    return loss, (grad[0] if single else grad)


# ---------------------------------------------------------------------------
# AdaMax
# ---------------------------------------------------------------------------


@dataclass
class AdaMaxState:
    """Per-parameter first moment and infinity-norm accumulator."""

    m: list
    u: list
    t: int = 0
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999

    @classmethod
    def for_params(cls, params, alpha: float = 1e-3, beta1: float = 0.9,
                   beta2: float = 0.999) -> "AdaMaxState":
        return cls(m=[np.zeros_like(p) for p in params],
                   u=[np.zeros_like(p) for p in params],
                   alpha=alpha, beta1=beta1, beta2=beta2)


def adamax_step(state: AdaMaxState, params, grads) -> None:
    """One in-place AdaMax update of params.

    m <- b1*m + (1-b1)*g;  u <- max(b2*u, |g|) floored at 1e-12;
    p <- p - alpha/(1-b1^t) * m/u.
    """
    state.t += 1
    correction = state.alpha / (1.0 - state.beta1 ** state.t)
    for p, g, m, u in zip(params, grads, state.m, state.u):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        np.maximum(state.beta2 * u, np.abs(g), out=u)
        np.maximum(u, U_FLOOR, out=u)
        p -= correction * m / u


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for member training; defaults are the desk-scale profile."""

    hidden: tuple = (16, 24)
    epochs: int = 200
    batch_size: int = 64
    alpha: float = 2e-2
    beta1: float = 0.9
    beta2: float = 0.99
    loss: LossConfig = field(default_factory=LossConfig)
    strip_coc_penalty: bool = False
    coc_penalty: float = DEFAULT_COC_PENALTY
    online_cost_targets: bool = False
    online_cost: float = DEFAULT_ONLINE_COST

    def __post_init__(self) -> None:
        if len(self.hidden) < 1 or any(int(h) < 1 for h in self.hidden):
            raise ValueError("hidden needs >= 1 positive layer sizes")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0.0 < self.alpha:
            raise ValueError("alpha must be positive")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("betas must lie in (0, 1)")


def member_dataset(table: ScoreTable, tau_index: int, a_prev: Advisory,
                   cfg: TrainConfig):
    """Features, training targets, and optimal indices for one table slice.

    Targets are the raw slice scores.  The generated table bakes the band
    penalty into every affected action score, so the penalty structure is
    shared across output heads and stays out of their differences; lifting
    it from the COC head alone (strip_coc_penalty, off by default, mirrored
    by query-time reapplication) moves the cliff into the head differences
    and measurably hurts advisory agreement.  The optimal index always comes
    from the raw scores, plus online costs when that flag is set.
    """
    grid = table.grid
    if not 0 <= tau_index < grid.tau.size:
        raise ValueError(f"tau_index {tau_index} out of range")
    a_prev = Advisory(a_prev)
    mesh = np.meshgrid(grid.rho, grid.theta, grid.psi, grid.v_own, grid.v_int,
                       indexing="ij")
    x = np.stack([m.reshape(-1) for m in mesh], axis=1)
    raw = table.scores[..., tau_index, int(a_prev), :]
    raw = raw.reshape(-1, N_ACTIONS).astype(np.float64)
    targets = raw.copy()
    if cfg.strip_coc_penalty and a_prev != Advisory.COC:
        band = coc_band_mask(x[:, 0], x[:, 1], x[:, 2], x[:, 3], x[:, 4])
        targets[band, Advisory.COC] -= cfg.coc_penalty
    scored = raw
    if cfg.online_cost_targets and a_prev.is_strong:
        scored = raw.copy()
        scored[:, [Advisory.COC, Advisory.WL, Advisory.WR]] -= cfg.online_cost
    opt = scored.argmax(axis=1)
    return x, targets, opt


def train_member(x: np.ndarray, targets: np.ndarray, opt: np.ndarray,
                 cfg: TrainConfig, rng: np.random.Generator,
                 init: Mlp | None = None, masks: list | None = None) -> Mlp:
    """Train one net on (features -> 5 scores) with asymmetric loss + AdaMax.

    Deterministic given the rng state.  masks, when given, pin pruned
    weights at zero through every update.  Raises RuntimeError when the
    loss goes non-finite, naming the epoch and batch.
    """
    x = np.asarray(x, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or targets.shape != (x.shape[0], N_ACTIONS):
        raise ValueError("need features (n, d) and targets (n, 5)")
    if x.shape[0] == 0:
        raise ValueError("empty training slice")
    opt = np.asarray(opt, dtype=np.intp)

    if init is None:
        in_mean = x.mean(axis=0)
        in_range = x.max(axis=0) - x.min(axis=0)
        in_range[in_range == 0.0] = 1.0
        out_mean = float(targets.mean())
        out_range = float(targets.max() - targets.min())
        if out_range == 0.0:
            out_range = 1.0
        sizes = (x.shape[1],) + tuple(cfg.hidden) + (N_ACTIONS,)
        net = init_mlp(sizes, rng, in_mean, in_range, out_mean, out_range)
    else:
        net = init.copy()
    if masks is not None:
        if len(masks) != len(net.weights):
            raise ValueError("one mask per weight layer required")
        for w, mk in zip(net.weights, masks):
            w *= mk

    z = (x - net.input_mean) / net.input_range
    t_norm = (targets - net.output_mean) / net.output_range
    params = net.weights + net.biases
    state = AdaMaxState.for_params(params, cfg.alpha, cfg.beta1, cfg.beta2)
    n = x.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for batch, start in enumerate(range(0, n, cfg.batch_size)):
            take = order[start:start + cfg.batch_size]
            acts = _forward_cached(net, z[take])
            loss, grad = asymmetric_loss(acts[-1], t_norm[take], opt[take],
                                         cfg.loss)
            if not np.isfinite(loss):
                raise RuntimeError(f"non-finite loss at epoch {epoch} "
                                   f"batch {batch}")
            gw, gb = _backprop(net, acts, grad)
            adamax_step(state, params, gw + gb)
            if masks is not None:
                for w, mk in zip(net.weights, masks):
                    w *= mk
    return net


# ---------------------------------------------------------------------------
# the 45-member array
# ---------------------------------------------------------------------------


@dataclass
class NetArray:
    """One trained member per (tau index, previous advisory) table slice."""

    grid: GridSpec
    members: dict
    strip_coc_penalty: bool = False
    coc_penalty: float = DEFAULT_COC_PENALTY

    def __post_init__(self) -> None:
        expected = {(ti, int(a)) for ti in range(self.grid.tau.size)
                    for a in ADVISORIES}
        if set(self.members) != expected:
            raise ValueError(f"array needs exactly {len(expected)} members "
                             "keyed (tau_index, a_prev)")
        sizes = {m.layer_sizes for m in self.members.values()}
        if len(sizes) != 1:
            raise ValueError("members must share one architecture")

    @property
    def member_count(self) -> int:
        return len(self.members)

    @property
    def param_count(self) -> int:
        return sum(m.param_count for m in self.members.values())

    def member(self, tau_index: int, a_prev: Advisory) -> Mlp:
        return self.members[(int(tau_index), int(a_prev))]


def train_array(table: ScoreTable, cfg: TrainConfig, seed: int,
                threads: int = 1) -> NetArray:
    """Train all (|tau| x 5) members, each from its own named rng stream.

    Members are independent jobs; results are keyed, so the thread count
    changes wall time only, never the weights.
    """
    grid = table.grid
    jobs = [(ti, a) for ti in range(grid.tau.size) for a in ADVISORIES]

    def run(job):
        ti, a = job
        x, targets, opt = member_dataset(table, ti, a, cfg)
        rng = stream(seed, "train", str(ti), a.name)
        return (ti, int(a)), train_member(x, targets, opt, cfg, rng)

    members = {}
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            for key, net in pool.map(run, jobs):
                members[key] = net
    else:
        for job in jobs:
            key, net = run(job)
            members[key] = net
    return NetArray(grid, members, cfg.strip_coc_penalty, cfg.coc_penalty)


# ---------------------------------------------------------------------------
# magnitude pruning
# ---------------------------------------------------------------------------


def weight_masks(net: Mlp) -> list:
    return [(w != 0.0).astype(np.float64) for w in net.weights]


def prune_iteration(net: Mlp, step: float, retrain: TrainConfig,
                    x: np.ndarray, targets: np.ndarray, opt: np.ndarray,
                    rng: np.random.Generator):
    """Zero the smallest step-fraction of remaining weights, then retrain.

    Ranking is by |w| globally across layers; biases are exempt.  Returns
    (retrained net, sparsity).  Already-zero weights stay zero, so repeated
    calls only ever grow the mask.
    """
    if not 0.0 < step < 1.0:
        raise ValueError("step must lie in (0, 1)")
    flat = np.concatenate([w.reshape(-1) for w in net.weights])
    nonzero = np.nonzero(flat)[0]
    k = int(round(step * nonzero.size))
    if k == 0:
        return net.copy(), net.sparsity
    order = nonzero[np.argsort(np.abs(flat[nonzero]), kind="stable")]
    flat[order[:k]] = 0.0
    pruned = net.copy()
    pos = 0
    for w in pruned.weights:
        w[...] = flat[pos:pos + w.size].reshape(w.shape)
        pos += w.size
    masks = weight_masks(pruned)
    out = train_member(x, targets, opt, retrain, rng, init=pruned, masks=masks)
    return out, out.sparsity


def _array_sparsity(members: dict) -> float:
    zeros = sum(int(np.sum(w == 0.0)) for m in members.values()
                for w in m.weights)
    total = sum(w.size for m in members.values() for w in m.weights)
    return zeros / total


def prune_array(array: NetArray, table: ScoreTable, retrain: TrainConfig,
                step: float, target_sparsity: float, seed: int,
                threads: int = 1, on_step=None,
                max_iterations: int = 400) -> NetArray:
    """Prune-and-retrain every member until the whole array hits the target.

    Sparsity counts zeroed weight entries across all members (biases exempt,
    as in prune_iteration).  Each iteration prunes every member once from
    its own named stream, so the result is thread-count independent; the
    input array is never mutated.  on_step(iteration, sparsity, snapshot)
    runs after each iteration with the retrained members.  Tiny members can
    stall below the target (a 2% cut of few weights rounds to zero), which
    surfaces as the iteration-cap ValueError rather than a silent loop.
    """
    if not 0.0 < target_sparsity < 1.0:
        raise ValueError("target_sparsity must lie in (0, 1)")
    if any(not np.array_equal(tc, ac) for (_, tc, _), (_, ac, _)
           in zip(table.grid.axes(), array.grid.axes())):
        raise ValueError("table grid does not match the array grid")
    grid = array.grid
    jobs = [(ti, a) for ti in range(grid.tau.size) for a in ADVISORIES]
    data = {(ti, int(a)): member_dataset(table, ti, a, retrain)
            for ti, a in jobs}
    members = dict(array.members)
    iteration = 0
    while _array_sparsity(members) < target_sparsity:
        iteration += 1
        if iteration > max_iterations:
            raise ValueError(
                f"sparsity {_array_sparsity(members):.4f} still below "
                f"{target_sparsity} after {max_iterations} iterations")

        def run(job):
            ti, a = job
            key = (ti, int(a))
            x, targets, opt = data[key]
            rng = stream(seed, "prune", iteration, ti, a.name)
            net, _ = prune_iteration(members[key], step, retrain,
                                     x, targets, opt, rng)
            return key, net

        if threads > 1:
            with concurrent.futures.ThreadPoolExecutor(
                    max_workers=threads) as pool:
                members = dict(pool.map(run, jobs))
        else:
            members = dict(run(job) for job in jobs)
        if on_step is not None:
            on_step(iteration, _array_sparsity(members),
                    NetArray(grid, dict(members), array.strip_coc_penalty,
                             array.coc_penalty))
    return NetArray(grid, members, array.strip_coc_penalty,
                    array.coc_penalty)


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

ARRAY_MANIFEST = "array.manifest"


def _fmt(v: float) -> str:
    return f"{float(np.float32(v)):.9g}"


def _fmt_row(vals) -> str:
    return ",".join(_fmt(v) for v in vals)


def encode_net(net: Mlp, comments=()) -> str:
    """Line-based text form: layer count, sizes, normalization, weights.

    All values pass through float32 and print with 9 significant digits,
    which round-trips float32 exactly.  Weight rows are per output unit.
    """
    lines = [f"// {c}" for c in comments]
    sizes = net.layer_sizes
    lines.append(str(len(net.weights)))
    lines.append(",".join(str(s) for s in sizes))
    lines.append(_fmt_row(net.input_mean))
    lines.append(_fmt_row(net.input_range))
    lines.append(_fmt_row([net.output_mean, net.output_range]))
    for w, b in zip(net.weights, net.biases):
        for j in range(w.shape[1]):
            lines.append(_fmt_row(w[:, j]))
        lines.append(_fmt_row(b))
    return "\n".join(lines) + "\n"


def _parse_row(line: str, n: int, what: str) -> np.ndarray:
    parts = line.split(",")
    if len(parts) != n:
        raise ValueError(f"{what}: expected {n} values, got {len(parts)}")
    try:
        vals = np.array([float(p) for p in parts])
    except ValueError as exc:
        raise ValueError(f"{what}: non-numeric token") from exc
    # the format is float32: widen the parsed decimals the same way the
    # encoder narrowed them, so decode(encode(net)) is exact on f32 nets
    return vals.astype(np.float32).astype(np.float64)


def decode_net(text: str) -> Mlp:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("//")]
    if len(lines) < 5:
        raise ValueError("truncated net payload")
    try:
        n_layers = int(lines[0])
    except ValueError as exc:
        raise ValueError("layer count: non-numeric token") from exc
    sizes = [int(s) for s in lines[1].split(",")]
    if len(sizes) != n_layers + 1 or any(s < 1 for s in sizes):
        raise ValueError(f"size line lists {len(sizes)} sizes "
                         f"for {n_layers} layers")
    in_mean = _parse_row(lines[2], sizes[0], "input means")
    in_range = _parse_row(lines[3], sizes[0], "input ranges")
    out_norm = _parse_row(lines[4], 2, "output normalization")
    pos = 5
    weights, biases = [], []
    for li, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        if len(lines) < pos + n_out + 1:
            raise ValueError(f"layer {li}: missing weight rows")
        w = np.empty((n_in, n_out))
        for j in range(n_out):
            w[:, j] = _parse_row(lines[pos + j], n_in, f"layer {li} row {j}")
        biases.append(_parse_row(lines[pos + n_out], n_out, f"layer {li} bias"))
        weights.append(w)
        pos += n_out + 1
    if pos != len(lines):
        raise ValueError(f"{len(lines) - pos} unexpected trailing lines")
    return Mlp(weights, biases, in_mean, in_range, out_norm[0], out_norm[1])


def write_net(path, net: Mlp, comments=()) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(encode_net(net, comments))


def read_net(path) -> Mlp:
    with open(path, "r", encoding="ascii") as fh:
        return decode_net(fh.read())


def member_filename(tau_index: int, a_prev: Advisory) -> str:
    return f"member_t{tau_index:02d}_{Advisory(a_prev).name}.net"


def manifest_text(array: NetArray, comments=()) -> str:
    lines = [f"// {c}" for c in comments]
    lines.append(f"strip_coc_penalty={'true' if array.strip_coc_penalty else 'false'}")
    lines.append(f"coc_penalty={array.coc_penalty!r}")
    for ti in range(array.grid.tau.size):
        for a in ADVISORIES:
            lines.append(f"{ti},{a.name},{member_filename(ti, a)}")
    return "\n".join(lines) + "\n"


def write_array(directory, array: NetArray, comments=()) -> None:
    """One text file per member plus a manifest naming them all."""

    os.makedirs(directory, exist_ok=True)
    for ti in range(array.grid.tau.size):
        for a in ADVISORIES:
            write_net(os.path.join(directory, member_filename(ti, a)),
                      array.member(ti, a), comments)
    with open(os.path.join(directory, ARRAY_MANIFEST), "w", encoding="ascii") as fh:
        fh.write(manifest_text(array, comments))


def array_encoded_bytes(array: NetArray) -> int:
    """Serialized size without touching disk: member files plus manifest."""
    total = len(manifest_text(array).encode("ascii"))
    for net in array.members.values():
        total += len(encode_net(net).encode("ascii"))
    return total


def read_array(directory, grid: GridSpec) -> NetArray:

    path = os.path.join(directory, ARRAY_MANIFEST)
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh.read().splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("//")]
    strip, penalty = False, DEFAULT_COC_PENALTY
    members = {}
    for ln in lines:
        if ln.startswith("strip_coc_penalty="):
            strip = ln.split("=", 1)[1] == "true"
            continue
        if ln.startswith("coc_penalty="):
            penalty = float(ln.split("=", 1)[1])
            continue
        parts = ln.split(",")
        if len(parts) != 3:
            raise ValueError(f"bad manifest line: {ln!r}")
        ti = int(parts[0])
        a = Advisory[parts[1]]
        members[(ti, int(a))] = read_net(os.path.join(directory, parts[2]))
    return NetArray(grid, members, strip, penalty)


def array_text_bytes(directory) -> int:
    """Total serialized size: member files plus the manifest."""

    total = os.path.getsize(os.path.join(directory, ARRAY_MANIFEST))
    for name in os.listdir(directory):
        if name.endswith(".net"):
            total += os.path.getsize(os.path.join(directory, name))
    return total
