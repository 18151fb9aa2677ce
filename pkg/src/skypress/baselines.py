"""Linear and regression-tree baselines for score table compression.

Both models map the 7 state features to all 5 action scores at once, so a
single fit replaces the whole table.  They bracket the compression study:
the affine fit is the floor (8x5 coefficients, almost no fidelity) and the
tree trades node count against fidelity one split at a time.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .table import (
    N_ACTIONS,
    GridSpec,
    ScoreTable,
    StateVector,
    grid_feature_matrix,
)

N_FEATURES = 7

# Reported storage model for trees: a decision node is a dim tag, a float32
# threshold, and a child link; a leaf is five float32 scores.
DECISION_NODE_BYTES = 12
LEAF_NODE_BYTES = 20

TREE_MAGIC = b"ACDT"
TREE_VERSION = 1

_KIND_DECISION = 0
_KIND_LEAF = 1


class TreeCodecError(ValueError):
    """Raised when serialized tree bytes cannot be decoded."""


# ---------------------------------------------------------------------------
# linear baseline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearModel:
    """Affine map from state features to the 5 action scores.

    weights has shape (8, 5): one row per feature plus a final bias row.
    """

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float64))
        if w.shape != (N_FEATURES + 1, N_ACTIONS):
            raise ValueError(f"weights must have shape (8, 5), got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        object.__setattr__(self, "weights", w)

    @property
    def param_count(self) -> int:
        return self.weights.size

    @property
    def storage_bytes(self) -> int:
        return self.weights.size * 4


def _design_matrix(features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != N_FEATURES:
        raise ValueError(f"features must have shape (n, 7), got {x.shape}")
    return np.concatenate([x, np.ones((x.shape[0], 1))], axis=1)


def fit_linear(table: ScoreTable) -> LinearModel:
    """Least-squares affine fit of the table via the normal equations.

    Columns are equilibrated before solving so the raw feature scales
    (range in ft vs angles in rad) do not poison the conditioning; the
    singular fallback adds a ridge of 1e-8 times the Gram trace.
    """
    x = _design_matrix(grid_feature_matrix(table.grid))
    y = table.scores.reshape(-1, N_ACTIONS).astype(np.float64)
    scale = np.abs(x).max(axis=0)
    scale[scale == 0.0] = 1.0
    xs = x / scale
    gram = xs.T @ xs
    rhs = xs.T @ y
    try:
        w = np.linalg.solve(gram, rhs)
        if not np.all(np.isfinite(w)):
            raise np.linalg.LinAlgError("non-finite solution")
    except np.linalg.LinAlgError:
        ridge = 1e-8 * np.trace(gram)
        w = np.linalg.solve(gram + ridge * np.eye(gram.shape[0]), rhs)
    return LinearModel(w / scale[:, None])


def linear_predict(model: LinearModel, features: np.ndarray) -> np.ndarray:
    """Predicted scores for feature rows, shape (n, 5)."""
    return _design_matrix(features) @ model.weights


def encode_linear(model: LinearModel) -> bytes:
    """Text encoding: one CSV row per weight row, full float64 precision."""
    lines = ["linear v1"]
    for row in model.weights:
        lines.append(",".join(f"{v:.17g}" for v in row))
    return ("\n".join(lines) + "\n").encode("ascii")


def decode_linear(data: bytes) -> LinearModel:
    lines = [ln for ln in data.decode("ascii").splitlines()
             if ln.strip() and not ln.lstrip().startswith("//")]
    if not lines or lines[0].strip() != "linear v1":
        raise ValueError("not a linear model payload")
    if len(lines) != N_FEATURES + 2:
        raise ValueError(f"expected 8 weight rows, got {len(lines) - 1}")
    rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    return LinearModel(np.array(rows))


# ---------------------------------------------------------------------------
# regression tree
# ---------------------------------------------------------------------------


@dataclass
class TreeNode:
    """Decision node (dim, threshold, children) or leaf (values)."""

    dim: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    values: np.ndarray | None = None

    @property
    def is_leaf(self) -> bool:
        return self.values is not None


@dataclass
class RegressionTree:
    """CART regressor over the 7 state features, 5 outputs per leaf."""

    root: TreeNode
    n_decision: int = field(default=0)
    n_leaves: int = field(default=0)
    depth: int = field(default=0)

    @property
    def param_count(self) -> int:
        return 2 * self.n_decision + N_ACTIONS * self.n_leaves

    @property
    def storage_bytes(self) -> int:
        return DECISION_NODE_BYTES * self.n_decision + LEAF_NODE_BYTES * self.n_leaves


def _best_split(x: np.ndarray, y: np.ndarray, max_candidates: int,
                min_leaf: int) -> tuple[float, int, float] | None:
    """Lowest-SSE (dim, threshold) for the rows, or None if unsplittable.

    Candidate thresholds are midpoints between consecutive distinct values,
    thinned to max_candidates evenly spaced picks.  Ties go to the lowest
    dim, then the lowest threshold.
    """
    n = x.shape[0]
    best: tuple[float, int, float] | None = None
    for dim in range(N_FEATURES):
        v = x[:, dim]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        cuts = np.nonzero(np.diff(vs) > 0)[0]
        if cuts.size == 0:
            continue
        if cuts.size > max_candidates:
            pick = np.unique(np.linspace(0, cuts.size - 1, max_candidates)
                             .round().astype(int))
            cuts = cuts[pick]
        n_left = cuts + 1
        n_right = n - n_left
        ok = (n_left >= min_leaf) & (n_right >= min_leaf)
        if not ok.any():
            continue
        cuts, n_left, n_right = cuts[ok], n_left[ok], n_right[ok]
        ys = y[order]
        csum = np.cumsum(ys, axis=0)
        csq = np.cumsum(ys * ys, axis=0)
        sum_l, sq_l = csum[cuts], csq[cuts]
        sum_r, sq_r = csum[-1] - sum_l, csq[-1] - sq_l
        sse = ((sq_l - sum_l**2 / n_left[:, None]).sum(axis=1)
               + (sq_r - sum_r**2 / n_right[:, None]).sum(axis=1))
        j = int(np.argmin(sse))
        if best is None or sse[j] < best[0]:
            lo, hi = vs[cuts[j]], vs[cuts[j] + 1]
            # Snap to float32 so the serialized threshold routes identically;
            # fall back to the lower value if rounding would cross hi.
            thr = float(np.float32(0.5 * (lo + hi)))
            if thr >= hi:
                thr = float(lo)
            best = (float(sse[j]), dim, thr)
    return best


def fit_tree(table: ScoreTable, max_depth: int, max_candidates: int = 32,
             min_leaf: int = 1) -> RegressionTree:
    """Greedy SSE-reduction CART fit of the table.

    Splits send rows with feature <= threshold left.  A node becomes a leaf
    (per-action mean of its rows) at the depth cap, when pure, or when no
    candidate threshold satisfies min_leaf.
    """
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    if max_candidates < 1:
        raise ValueError("max_candidates must be >= 1")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    x = grid_feature_matrix(table.grid)
    y = table.scores.reshape(-1, N_ACTIONS).astype(np.float64)
    counts = {"decision": 0, "leaf": 0, "depth": 0}

    def build(idx: np.ndarray, depth: int) -> TreeNode:
        counts["depth"] = max(counts["depth"], depth)
        rows = y[idx]
        mean = rows.mean(axis=0)
        pure = bool(np.all(rows == rows[0]))
        split = None
        if depth < max_depth and not pure:
            split = _best_split(x[idx], rows, max_candidates, min_leaf)
        if split is None:
            counts["leaf"] += 1
            return TreeNode(values=mean.astype(np.float32).astype(np.float64))
        _, dim, thr = split
        counts["decision"] += 1
        goes_left = x[idx, dim] <= thr
        return TreeNode(dim=dim, threshold=thr,
                        left=build(idx[goes_left], depth + 1),
                        right=build(idx[~goes_left], depth + 1))

    root = build(np.arange(x.shape[0]), 0)
    return RegressionTree(root, counts["decision"], counts["leaf"], counts["depth"])


def tree_predict(tree: RegressionTree, s: StateVector) -> np.ndarray:
    """Scores for a single state, shape (5,)."""
    return tree_predict_rows(tree, s.features()[None, :])[0]


def tree_predict_rows(tree: RegressionTree, features: np.ndarray) -> np.ndarray:
    """Scores for feature rows, shape (n, 5)."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != N_FEATURES:
        raise ValueError(f"features must have shape (n, 7), got {x.shape}")
    out = np.empty((x.shape[0], N_ACTIONS))
    stack = [(tree.root, np.arange(x.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        if node.is_leaf:
            out[idx] = node.values
            continue
        goes_left = x[idx, node.dim] <= node.threshold
        stack.append((node.left, idx[goes_left]))
        stack.append((node.right, idx[~goes_left]))
    return out


# ---------------------------------------------------------------------------
# tree codec
# ---------------------------------------------------------------------------


def encode_tree(tree: RegressionTree) -> bytes:
    """Binary encoding, breadth-first node records.

    Layout (little-endian): magic "ACDT", u32 version, u32 node count, then
    per node a kind byte followed by either u8 dim + f32 threshold + u32
    index of the left child (right child is left + 1) or 5 f32 leaf scores.
    """
    order: list[TreeNode] = []
    queue = [tree.root]
    while queue:
        node = queue.pop(0)
        order.append(node)
        if not node.is_leaf:
            queue.append(node.left)
            queue.append(node.right)
    index = {id(n): i for i, n in enumerate(order)}
    parts = [TREE_MAGIC, struct.pack("<II", TREE_VERSION, len(order))]
    for node in order:
        if node.is_leaf:
            parts.append(struct.pack("<B5f", _KIND_LEAF, *node.values))
        else:
            parts.append(struct.pack("<BBfI", _KIND_DECISION, node.dim,
                                     node.threshold, index[id(node.left)]))
    return b"".join(parts)


def decode_tree(data: bytes) -> RegressionTree:
    """Inverse of encode_tree; validates structure before rebuilding."""
    if data[:4] != TREE_MAGIC:
        raise TreeCodecError(f"bad magic {data[:4]!r}, expected {TREE_MAGIC!r}")
    pos = 4
    if len(data) < pos + 8:
        raise TreeCodecError("truncated header")
    version, n_nodes = struct.unpack_from("<II", data, pos)
    pos += 8
    if version != TREE_VERSION:
        raise TreeCodecError(f"unsupported version {version}")
    if n_nodes < 1:
        raise TreeCodecError("empty tree")
    records: list[tuple] = []
    for i in range(n_nodes):
        if len(data) < pos + 1:
            raise TreeCodecError(f"truncated at node {i}")
        kind = data[pos]
        pos += 1
        if kind == _KIND_DECISION:
            if len(data) < pos + 9:
                raise TreeCodecError(f"truncated at node {i}")
            dim, thr, left = struct.unpack_from("<BfI", data, pos)
            pos += 9
            if dim >= N_FEATURES:
                raise TreeCodecError(f"node {i}: dim {dim} out of range")
            if not np.isfinite(thr):
                raise TreeCodecError(f"node {i}: non-finite threshold")
            if left <= i or left + 1 >= n_nodes:
                raise TreeCodecError(f"node {i}: child index {left} out of range")
            records.append((dim, float(thr), left))
        elif kind == _KIND_LEAF:
            if len(data) < pos + 20:
                raise TreeCodecError(f"truncated at node {i}")
            values = np.frombuffer(data, dtype="<f4", count=N_ACTIONS, offset=pos)
            pos += 20
            if not np.all(np.isfinite(values)):
                raise TreeCodecError(f"node {i}: non-finite leaf values")
            records.append((values.astype(np.float64),))
        else:
            raise TreeCodecError(f"node {i}: unknown kind byte {kind}")
    if pos != len(data):
        raise TreeCodecError(f"{len(data) - pos} trailing bytes")

    nodes = [TreeNode() for _ in range(n_nodes)]
    referenced = [False] * n_nodes
    n_decision = 0
    for i, rec in enumerate(records):
        if len(rec) == 1:
            nodes[i].values = rec[0]
        else:
            dim, thr, left = rec
            n_decision += 1
            nodes[i].dim = dim
            nodes[i].threshold = thr
            nodes[i].left = nodes[left]
            nodes[i].right = nodes[left + 1]
            for child in (left, left + 1):
                if referenced[child]:
                    raise TreeCodecError(f"node {child} referenced twice")
                referenced[child] = True
    if any(not r for r in referenced[1:]) or referenced[0]:
        raise TreeCodecError("node links do not form a tree")

    def measure(node: TreeNode) -> int:
        if node.is_leaf:
            return 0
        return 1 + max(measure(node.left), measure(node.right))

    return RegressionTree(nodes[0], n_decision, n_nodes - n_decision,
                          measure(nodes[0]))


def write_tree(path, tree: RegressionTree) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_tree(tree))


def read_tree(path) -> RegressionTree:
    with open(path, "rb") as fh:
        return decode_tree(fh.read())
