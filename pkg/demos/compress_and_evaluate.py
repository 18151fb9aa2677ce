"""Compress a score table three ways and compare fidelity per byte.

Fits the affine baseline, a regression tree, and the network array to the
same small table, then checks every approximation against every grid state:
storage bytes, parameter count, score RMSE, and the share of states whose
best advisory flips.  The network array trains with the asymmetric loss, so
underestimating the best action costs more than overestimating a poor one.
"""

import time

import numpy as np

from skypress import Advisory, GridSpec
from skypress.baselines import encode_linear, encode_tree, fit_linear, fit_tree
from skypress.evaluate import evaluate_predictor
from skypress.mdp import MdpConfig, value_iterate
from skypress.nets import TrainConfig, train_array
from skypress.table import angle_grid, encode_table

SEED = 3


def demo_grid() -> GridSpec:
    """Roughly an eighth of the default grid with the same coverage shape."""
    return GridSpec(
        rho=np.geomspace(500.0, 20000.0, 8).astype(np.float32),
        theta=angle_grid(7),
        psi=angle_grid(5),
        v_own=np.array([100.0, 300.0, 600.0]),
        v_int=np.array([100.0, 300.0, 600.0]),
        tau=np.array([0.0, 1.0, 5.0, 10.0]),
    )


def main() -> None:
    cfg = MdpConfig(grid=demo_grid())
    print(f"solving the {cfg.grid.n_states:,}-state MDP ...")
    table = value_iterate(cfg)
    table_bytes = len(encode_table(table))

    print("fitting the affine baseline ...")
    linear = fit_linear(table)

    print("fitting a depth-8 regression tree ...")
    tree = fit_tree(table, max_depth=8)

    train = TrainConfig(epochs=60)
    n_members = len(table.grid.tau) * len(Advisory)
    print(f"training the {n_members}-member network array "
          f"({train.epochs} epochs per member) ...")
    t0 = time.perf_counter()
    array = train_array(table, train, SEED)
    print(f"  trained in {time.perf_counter() - t0:.1f} s")

    print()
    print(f"{'model':<14}{'bytes':>10}{'ratio':>8}{'params':>9}"
          f"{'rmse':>9}{'policy err':>12}")
    print(f"{'table':<14}{table_bytes:>10,}{'1x':>8}{'':>9}{'':>9}{'':>12}")
    reports = {}
    for name, model in (("affine", linear), ("tree d8", tree),
                        ("net array", array)):
        rep = evaluate_predictor(model, table)
        reports[name] = rep
        print(f"{name:<14}{rep.storage_bytes:>10,}"
              f"{table_bytes / rep.storage_bytes:>7.0f}x"
              f"{rep.params:>9,}{rep.rmse:>9.1f}"
              f"{rep.policy_error_pct:>11.2f}%")

    print()
    print("net array advisory confusion (rows sum to 100; row = table's "
          "best, column = array's):")
    conf = reports["net array"].confusion
    print("        " + "".join(f"{a.name:>8}" for a in Advisory))
    for a in Advisory:
        row = "".join(f"{conf[int(a), int(b)]:>8.2f}" for b in Advisory)
        print(f"  {a.name:<6}" + row)
    # serialized forms round-trip; sizes above come from the same codecs
    assert len(encode_linear(linear)) == reports["affine"].storage_bytes
    assert len(encode_tree(tree)) == reports["tree d8"].storage_bytes


if __name__ == "__main__":
    main()
