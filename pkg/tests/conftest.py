"""Session fixtures for the acceptance suite plus its criterion summary.

The expensive shared artifacts (the desk-scale solve and the two trained
member arrays) are cached under /tmp/skypress-cache, keyed by a hash of
everything that determines them, so iterating on the suite does not re-solve
or retrain.  Wall times are cached alongside because several criteria carry
runtime bounds that belong to the producing step, not to the cache hit.
"""

from __future__ import annotations

import dataclasses
import time
from pathlib import Path

import numpy as np
import pytest

from skypress.config import config_hash
from skypress.mdp import MdpConfig, solve_q
from skypress.nets import (
    ARRAY_MANIFEST,
    LossConfig,
    NetArray,
    TrainConfig,
    read_array,
    train_array,
    write_array,
)
from skypress.table import ScoreTable

CACHE_DIR = Path("/tmp/skypress-cache")

# The fidelity and safety criteria pin one training run; everything seeded
# below derives from this value so the whole suite is one reproducible story.
TRAIN_SEED = 0

# All heavy code paths are thread-count independent, so this only trades
# wall time; the sandbox is single-core, where pools just add overhead.
THREADS = 1


# ---------------------------------------------------------------------------
# acceptance criterion registry
# ---------------------------------------------------------------------------

_RESULTS: list[tuple[int, bool, str]] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    """Register one acceptance outcome; called before the test asserts so
    failing criteria still show up in the summary with their measurements."""
    _RESULTS.append((int(number), bool(ok), str(detail)))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(_RESULTS):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {status}  {detail}")


# ---------------------------------------------------------------------------
# cache keys
# ---------------------------------------------------------------------------


def _grid_pairs(grid) -> dict:
    return {f"grid.{name}": ",".join(repr(float(v)) for v in cuts)
            for name, cuts, _ in grid.axes()}


def _mdp_key(cfg: MdpConfig) -> str:
    pairs = _grid_pairs(cfg.grid)
    for f in dataclasses.fields(cfg):
        if f.name == "grid":
            continue
        pairs[f"mdp.{f.name}"] = repr(getattr(cfg, f.name))
    return config_hash(pairs)


def _train_key(cfg: TrainConfig, seed: int, table_key: str) -> str:
    pairs = {"table": table_key, "seed": str(seed)}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if f.name == "loss":
            pairs["loss.factor_opt"] = repr(value.factor_opt)
            pairs["loss.factor_sub"] = repr(value.factor_sub)
        else:
            pairs[f"train.{f.name}"] = repr(value)
    return config_hash(pairs)


# ---------------------------------------------------------------------------
# desk-scale artifacts
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def desk_mdp() -> MdpConfig:
    return MdpConfig()


@pytest.fixture(scope="session")
def desk_solution(desk_mdp):
    """Converged float64 desk-profile scores plus the solve wall time."""
    path = CACHE_DIR / f"desk-q-{_mdp_key(desk_mdp)}.npz"
    if path.exists():
        with np.load(path) as stash:
            return stash["q"], float(stash["seconds"])
    t0 = time.perf_counter()
    q = solve_q(desk_mdp)
    seconds = time.perf_counter() - t0
    CACHE_DIR.mkdir(parents=True, exist_ok=True)
    np.savez(path, q=q, seconds=seconds)
    return q, seconds


@pytest.fixture(scope="session")
def desk_table(desk_mdp, desk_solution) -> ScoreTable:
    q, _ = desk_solution
    return ScoreTable(desk_mdp.grid, q)


def _cached_array(table: ScoreTable, cfg: TrainConfig, table_key: str,
                  tag: str):
    directory = CACHE_DIR / f"array-{tag}-{_train_key(cfg, TRAIN_SEED, table_key)}"
    seconds_path = directory.with_suffix(".seconds")
    if (directory / ARRAY_MANIFEST).exists() and seconds_path.exists():
        return (read_array(directory, table.grid),
                float(seconds_path.read_text("ascii")))
    t0 = time.perf_counter()
    array = train_array(table, cfg, TRAIN_SEED, threads=THREADS)
    seconds = time.perf_counter() - t0
    CACHE_DIR.mkdir(parents=True, exist_ok=True)
    write_array(directory, array)
    seconds_path.write_text(f"{seconds!r}\n", "ascii")
    # hand back the serialized form: downstream stages consume the artifact,
    # and the text codec narrows to float32, so fresh and cached sessions
    # must measure the same weights
    return read_array(directory, table.grid), seconds


@pytest.fixture(scope="session")
def default_array(desk_mdp, desk_table):
    """Asymmetric-loss member array at default settings: (array, seconds)."""
    return _cached_array(desk_table, TrainConfig(), _mdp_key(desk_mdp), "asym")


@pytest.fixture(scope="session")
def sym_array(desk_mdp, desk_table):
    """Same budget and seed, plain symmetric MSE loss: (array, seconds)."""
    cfg = TrainConfig(loss=LossConfig(1.0, 1.0))
    return _cached_array(desk_table, cfg, _mdp_key(desk_mdp), "sym")
