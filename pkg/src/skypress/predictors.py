"""Uniform score sources over the seven-feature state.

Each predictor wraps one representation (exact table, linear least-squares
fit, regression tree, trained net array) behind the same surface: score one
state, score a batch of feature rows, and report parameter count and
serialized size.  Evaluation, benchmarking, and simulation consume this
surface so every representation is measured the same way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import (LinearModel, RegressionTree, linear_predict,
                        tree_predict, tree_predict_rows)
from .nets import NetArray, array_encoded_bytes, forward
from .table import (ADVISORIES, N_ACTIONS, ScoreTable, StateVector,
                    coc_band_mask, coc_penalty, encode_table, grid_indices,
                    lookup_nearest, nearest_cut_linear)

_ADVISORY_RATES = np.array([a.turn_rate_deg for a in ADVISORIES])


def _as_rows(features) -> np.ndarray:
    rows = np.asarray(features, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != 7:
        raise ValueError(f"expected (n, 7) feature rows, got shape {rows.shape}")
    return rows


def _advisory_indices(rates: np.ndarray) -> np.ndarray:
    """Advisory index per turn-rate value; nearest rate, ties to lowest index."""
    dist = np.abs(np.asarray(rates, dtype=np.float64)[:, None] - _ADVISORY_RATES)
    return np.argmin(dist, axis=1)


@dataclass(frozen=True)
class TablePredictor:
    """The stored table itself, exposed through the predictor surface."""

    table: ScoreTable
    kind = "table"

    def predict_state(self, s: StateVector) -> np.ndarray:
        return lookup_nearest(self.table, s).astype(np.float64)

    def predict_rows(self, features) -> np.ndarray:
        rows = _as_rows(features)
        idx = grid_indices(self.table.grid, rows[:, 0], rows[:, 1], rows[:, 2],
                           rows[:, 3], rows[:, 4], rows[:, 5])
        ai = _advisory_indices(rows[:, 6])
        return self.table.scores[idx + (ai,)].astype(np.float64)

    @property
    def param_count(self) -> int:
        return int(self.table.scores.size)

    @property
    def storage_bytes(self) -> int:
        return len(encode_table(self.table))


@dataclass(frozen=True)
class LinearPredictor:
    """Global least-squares surface over the engineered design matrix."""

    model: LinearModel
    kind = "linear"

    def predict_state(self, s: StateVector) -> np.ndarray:
        return linear_predict(self.model, s.features()[None, :])[0]

    def predict_rows(self, features) -> np.ndarray:
        return linear_predict(self.model, _as_rows(features))

    @property
    def param_count(self) -> int:
        return self.model.param_count

    @property
    def storage_bytes(self) -> int:
        return self.model.storage_bytes


@dataclass(frozen=True)
class TreePredictor:
    """Axis-aligned regression tree with one score row per leaf."""

    tree: RegressionTree
    kind = "tree"

    def predict_state(self, s: StateVector) -> np.ndarray:
        return tree_predict(self.tree, s)

    def predict_rows(self, features) -> np.ndarray:
        return tree_predict_rows(self.tree, _as_rows(features))

    @property
    def param_count(self) -> int:
        return self.tree.param_count

    @property
    def storage_bytes(self) -> int:
        return self.tree.storage_bytes


@dataclass(frozen=True)
class ArrayPredictor:
    """Net array routed by (tau cutpoint, previous advisory).

    The query's tau snaps to the nearest grid cutpoint and its previous
    advisory picks the member, mirroring the table's own slice structure.
    When the members were trained on penalty-stripped targets the band
    penalty is reapplied to the clear-of-conflict score here, so the
    predictor always speaks the same score language as the table.
    """

    array: NetArray
    kind = "array"

    def _member_for(self, tau: float, a_prev_idx: int):
        ti = int(nearest_cut_linear(self.array.grid.tau, tau))
        return self.array.members[(ti, a_prev_idx)]

    def predict_state(self, s: StateVector) -> np.ndarray:
        net = self._member_for(s.tau, int(s.a_prev))
        row = forward(net, s)
        if self.array.strip_coc_penalty:
            row = coc_penalty(row, s, "apply", self.array.coc_penalty)
        return row

    def predict_rows(self, features) -> np.ndarray:
        rows = _as_rows(features)
        ti = np.asarray(nearest_cut_linear(self.array.grid.tau, rows[:, 5]))
        ai = _advisory_indices(rows[:, 6])
        out = np.empty((rows.shape[0], N_ACTIONS))
        for key in {(int(t), int(a)) for t, a in zip(ti, ai)}:
            mask = (ti == key[0]) & (ai == key[1])
            out[mask] = forward(self.array.members[key], rows[mask, :5])
        if self.array.strip_coc_penalty:
            band = coc_band_mask(rows[:, 0], rows[:, 1], rows[:, 2],
                                 rows[:, 3], rows[:, 4])
            out[band & (ai != 0), 0] += self.array.coc_penalty
        return out

    @property
    def param_count(self) -> int:
        return self.array.param_count

    @property
    def storage_bytes(self) -> int:
        return array_encoded_bytes(self.array)


def as_predictor(source):
    """Wrap a raw representation; objects already speaking the surface pass through."""
    if isinstance(source, ScoreTable):
        return TablePredictor(source)
    if isinstance(source, LinearModel):
        return LinearPredictor(source)
    if isinstance(source, RegressionTree):
        return TreePredictor(source)
    if isinstance(source, NetArray):
        return ArrayPredictor(source)
    if hasattr(source, "predict_rows") and hasattr(source, "predict_state"):
        return source
    raise TypeError(f"no predictor wrapping for {type(source).__name__}")
