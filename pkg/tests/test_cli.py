"""Command-line pipeline tests: config layering, exit codes, artifacts.

Artifact correctness is checked against direct library calls on the same
resolved config, so the CLI can only pass by delegating faithfully.  All
stages run on a 1,440-state grid to keep the suite fast.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest

from skypress.baselines import decode_linear, decode_tree
from skypress.cli import (
    PROFILES,
    UsageError,
    _effective_seed,
    build_encounter,
    build_grid,
    build_mdp,
    build_sim_flags,
    build_slice_spec,
    build_train,
    resolve_config,
    run,
)
from skypress.config import config_hash, parse_kv
from skypress.evaluate import evaluate_predictor
from skypress.mdp import solve_q
from skypress.nets import read_array
from skypress.table import Advisory, ScoreTable, angle_grid, decode_table

TINY_CFG = """\
grid.rho_points=4
grid.theta_points=3
grid.psi_points=3
grid.v_own=100,300
grid.v_int=100,300
grid.tau=0,20
nets.hidden=4
nets.epochs=2
prune.retrain_epochs=1
prune.step=0.25
prune.target_sparsity=0.5
tree.max_depth=4
bench.queries=1000
sim.count=40
sim.duration=12
slice.resolution=5
slice.x_max=8000
slice.y_min=-4000
slice.y_max=4000
"""


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Every stage run once over a shared tiny config."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.cfg"
    cfg.write_text(TINY_CFG, encoding="ascii")
    base = ["--config", str(cfg), "--seed", "7"]
    paths = {
        "cfg": cfg,
        "table": root / "t.q",
        "linear": root / "lin.csv",
        "tree": root / "tree.bin",
        "array": root / "arr",
        "pruned": root / "arr_p",
        "report": root / "rep.txt",
        "slice": root / "sl.csv",
        "bench": root / "bench.csv",
        "metrics": root / "met.txt",
        "traj": root / "traj.csv",
    }
    t = str(paths["table"])
    stages = [
        ["gen-table", "--out", t],
        ["fit-linear", "--table", t, "--out", str(paths["linear"])],
        ["fit-tree", "--table", t, "--out", str(paths["tree"])],
        ["train", "--table", t, "--out", str(paths["array"])],
        ["prune", "--table", t, "--net-array", str(paths["array"]),
         "--out", str(paths["pruned"])],
        ["eval", "--table", t, "--source", str(paths["array"]),
         "--out", str(paths["report"])],
        ["slice", "--source", t, "--out", str(paths["slice"])],
        ["bench", "--table", t, "--source", str(paths["linear"]),
         "--source", str(paths["tree"]), "--out", str(paths["bench"])],
        ["sim", "--source", t, "--out", str(paths["metrics"]),
         "--trajectory", str(paths["traj"])],
    ]
    for stage in stages:
        assert run(stage + base) == 0, f"stage failed: {stage[0]}"
    return paths


def resolved_tiny() -> dict:
    cfg = dict(PROFILES["desk"])
    cfg.update(parse_kv(TINY_CFG))
    return cfg


class TestConfigResolution:
    def test_layering_order(self, tmp_path):
        f = tmp_path / "c.cfg"
        f.write_text("mdp.discount=0.9\nnets.epochs=3\n", encoding="ascii")
        cfg, meta = resolve_config("desk", str(f), ["nets.epochs=5"])
        assert cfg["mdp.discount"] == "0.9"
        assert cfg["nets.epochs"] == "5"
        assert cfg["mdp.dt"] == "1"
        assert meta == {}

    def test_profiles_share_keys_and_differ_in_scale(self):
        desk, paper = PROFILES["desk"], PROFILES["paper"]
        assert set(desk) == set(paper)
        assert desk["nets.hidden"] == "16,24"
        assert paper["nets.hidden"] == "45,45,45,45,45,45"
        assert paper["nets.epochs"] == "1200"
        assert paper["nets.batch_size"] == "65536"
        assert paper["sim.count"] == "1500000"

    def test_unknown_key_named(self):
        with pytest.raises(UsageError, match="mdp.discnt"):
            resolve_config("desk", None, ["mdp.discnt=0.9"])

    def test_run_meta_keys_pass_through(self, tmp_path):
        f = tmp_path / "c.cfg"
        f.write_text("run.seed=11\nrun.subcommand=gen-table\n",
                     encoding="ascii")
        cfg, meta = resolve_config("desk", str(f), [])
        assert meta == {"run.seed": "11", "run.subcommand": "gen-table"}
        assert "run.seed" not in cfg

    def test_malformed_set_pair(self):
        with pytest.raises(UsageError, match="key=value"):
            resolve_config("desk", None, ["mdp.discount"])

    def test_seed_precedence(self):
        class Args:
            seed = None
        assert _effective_seed(Args(), {}) == 0
        assert _effective_seed(Args(), {"run.seed": "11"}) == 11
        Args.seed = 4
        assert _effective_seed(Args(), {"run.seed": "11"}) == 4
        Args.seed = -1
        with pytest.raises(UsageError, match="u64"):
            _effective_seed(Args(), {})
        Args.seed = None
        with pytest.raises(UsageError, match="run.seed"):
            _effective_seed(Args(), {"run.seed": "x"})


class TestBuilders:
    def test_grid_matches_direct_construction(self):
        grid = build_grid(resolved_tiny())
        rho = np.geomspace(500.0, 60000.0, 4).astype(np.float32)
        np.testing.assert_array_equal(grid.rho, rho.astype(np.float64))
        np.testing.assert_array_equal(grid.theta, angle_grid(3))
        np.testing.assert_array_equal(grid.psi, angle_grid(3))
        np.testing.assert_array_equal(grid.v_own, [100.0, 300.0])
        np.testing.assert_array_equal(grid.tau, [0.0, 20.0])

    def test_mdp_and_train_mapping(self):
        cfg = resolved_tiny()
        cfg["mdp.intruder_turns_deg"] = "-2,2"
        cfg["mdp.intruder_probs"] = "0.5,0.5"
        mdp = build_mdp(cfg)
        assert mdp.discount == 0.97
        assert mdp.intruder_turns_deg == (-2.0, 2.0)
        tc = build_train(cfg)
        assert tc.hidden == (4,)
        assert tc.epochs == 2
        assert tc.loss.factor_opt == 20.0 and tc.loss.factor_sub == 5.0
        assert tc.strip_coc_penalty is False

    def test_encounter_and_flags_mapping(self):
        cfg = resolved_tiny()
        cfg["sim.noise_rho"] = "50"
        enc = build_encounter(cfg)
        assert enc.duration == 12
        assert enc.noise.rho == 50.0 and enc.noise.is_zero is False
        assert enc.v_own_range == (100.0, 600.0)
        flags = build_sim_flags(cfg)
        assert flags.online_costs is False and flags.coc_penalty is False

    def test_slice_spec_mapping(self):
        spec = build_slice_spec(resolved_tiny())
        assert spec.a_prev is Advisory.COC
        assert spec.psi == math.pi
        assert (spec.x_min, spec.x_max) == (0.0, 8000.0)
        assert (spec.y_min, spec.y_max) == (-4000.0, 4000.0)

    def test_bad_values_name_their_key(self):
        for key, value, pattern in [
            ("mdp.discount", "fast", "mdp.discount"),
            ("nets.hidden", "4.5", "nets.hidden"),
            ("nets.strip_coc_penalty", "yes", "nets.strip_coc_penalty"),
            ("slice.a_prev", "UP", "slice.a_prev"),
            ("sim.online_cost", "-1", "sim.online_cost"),
            ("sim.coc_penalty_value", "2", "sim.coc_penalty_value"),
        ]:
            cfg = resolved_tiny()
            cfg[key] = value
            with pytest.raises(UsageError, match=pattern):
                build_grid(cfg)
                build_mdp(cfg)
                build_train(cfg)
                build_slice_spec(cfg)
                build_sim_flags(cfg)

    def test_dataclass_validation_becomes_usage_error(self):
        cfg = resolved_tiny()
        cfg["mdp.discount"] = "1.5"
        with pytest.raises(UsageError, match="discount"):
            build_mdp(cfg)


class TestErrorContract:
    def test_missing_table_names_path(self, tmp_path, capsys):
        missing = tmp_path / "nope.q"
        code = run(["eval", "--table", str(missing),
                    "--source", str(missing), "--out", str(tmp_path / "r")])
        assert code == 1
        assert "nope.q" in capsys.readouterr().err

    def test_unknown_config_key_exits_2(self, tmp_path, capsys):
        code = run(["gen-table", "--out", str(tmp_path / "t.q"),
                    "--set", "mdp.discnt=0.9"])
        assert code == 2
        assert "mdp.discnt" in capsys.readouterr().err

    def test_unknown_subcommand_exits_2(self, capsys):
        assert run(["frobnicate"]) == 2
        assert run([]) == 2
        capsys.readouterr()

    def test_missing_required_flag_exits_2(self, capsys):
        assert run(["gen-table"]) == 2
        assert "--out" in capsys.readouterr().err

    def test_bad_threads_and_seed_exit_2(self, tmp_path, capsys):
        out = str(tmp_path / "t.q")
        assert run(["gen-table", "--out", out, "--threads", "0"]) == 2
        assert run(["gen-table", "--out", out, "--seed", "-3"]) == 2
        assert run(["gen-table", "--out", out, "--seed", "x"]) == 2
        capsys.readouterr()

    def test_unrecognized_artifact_exits_1(self, tmp_path, capsys, pipeline):
        junk = tmp_path / "junk.bin"
        junk.write_bytes(b"bogus payload")
        code = run(["eval", "--table", str(pipeline["table"]),
                    "--source", str(junk), "--out", str(tmp_path / "r")])
        assert code == 1
        assert "junk.bin" in capsys.readouterr().err

    def test_array_source_requires_table_for_grid(self, pipeline, capsys):
        code = run(["slice", "--source", str(pipeline["array"]),
                    "--out", "/tmp/unused-slice.csv"])
        assert code == 2
        assert "--table" in capsys.readouterr().err

    def test_help_exits_0(self, capsys):
        assert run(["--help"]) == 0
        assert "gen-table" in capsys.readouterr().out

    def test_missing_config_file_exits_1(self, tmp_path, capsys):
        code = run(["gen-table", "--out", str(tmp_path / "t.q"),
                    "--config", str(tmp_path / "ghost.cfg")])
        assert code == 1
        assert "ghost.cfg" in capsys.readouterr().err


class TestGenTable:
    def test_rerun_is_byte_identical(self, pipeline, tmp_path):
        out2 = tmp_path / "again.q"
        assert run(["gen-table", "--config", str(pipeline["cfg"]),
                    "--seed", "7", "--out", str(out2)]) == 0
        assert out2.read_bytes() == pipeline["table"].read_bytes()

    def test_table_matches_direct_solve(self, pipeline):
        table = decode_table(pipeline["table"].read_bytes())
        mdp = build_mdp(resolved_tiny())
        expected = ScoreTable(mdp.grid, solve_q(mdp))
        np.testing.assert_array_equal(table.scores, expected.scores)
        for (_, a, _), (_, b, _) in zip(table.grid.axes(), mdp.grid.axes()):
            np.testing.assert_array_equal(a, b)

    def test_manifest_contents(self, pipeline):
        pairs = parse_kv(
            Path(str(pipeline["table"]) + ".run").read_text("ascii"))
        cfg = {k: v for k, v in pairs.items() if not k.startswith("run.")}
        assert cfg == resolved_tiny()
        assert pairs["run.subcommand"] == "gen-table"
        assert pairs["run.seed"] == "7"
        assert pairs["run.config_hash"] == config_hash(cfg)

    def test_manifest_rerun_reproduces_artifact_and_manifest(
            self, pipeline, tmp_path):
        out2 = tmp_path / "redo.q"
        manifest = str(pipeline["table"]) + ".run"
        assert run(["gen-table", "--config", manifest,
                    "--out", str(out2)]) == 0
        assert out2.read_bytes() == pipeline["table"].read_bytes()
        assert (Path(str(out2) + ".run").read_bytes()
                == Path(manifest).read_bytes())


class TestArtifacts:
    def test_linear_stamped_and_loadable(self, pipeline):
        data = pipeline["linear"].read_bytes()
        assert data.startswith(b"// seed=7\n// config_hash=")
        model = decode_linear(data)
        assert model.weights.shape == (8, 5)

    def test_tree_loadable(self, pipeline):
        tree = decode_tree(pipeline["tree"].read_bytes())
        assert tree.depth <= 4
        assert tree.param_count > 0

    def test_array_members_stamped_and_loadable(self, pipeline):
        table = decode_table(pipeline["table"].read_bytes())
        array = read_array(pipeline["array"], table.grid)
        assert array.member_count == 10
        member = pipeline["array"] / "member_t00_COC.net"
        assert member.read_text("ascii").startswith("// seed=7\n")

    def test_eval_report_matches_direct_evaluation(self, pipeline):
        table = decode_table(pipeline["table"].read_bytes())
        array = read_array(pipeline["array"], table.grid)
        direct = evaluate_predictor(array, table)
        pairs = parse_kv(pipeline["report"].read_text("ascii"))
        assert float(pairs["rmse"]) == direct.rmse
        assert float(pairs["policy_error_pct"]) == direct.policy_error_pct
        assert int(pairs["params"]) == direct.params
        csv = Path(str(pipeline["report"]) + ".csv").read_text("ascii")
        header = csv.splitlines()[0].split(",")
        assert len(header) == 29 and header[0] == "rmse"

    def test_slice_raster_and_header(self, pipeline):
        rows = pipeline["slice"].read_text("ascii").strip().splitlines()
        assert len(rows) == 5 and all(len(r.split(",")) == 5 for r in rows)
        header = parse_kv("\n".join(
            ln for ln in Path(str(pipeline["slice"]) + ".header")
            .read_text("ascii").splitlines() if "=" in ln))
        assert header["a_prev"] == "COC"
        assert float(header["x_max"]) == 8000.0

    def test_bench_rows(self, pipeline):
        lines = pipeline["bench"].read_text("ascii").strip().splitlines()
        assert lines[0] == "kind,mean_ns,p99_ns,mean_ratio,p99_ratio"
        kinds = [ln.split(",")[0] for ln in lines[1:]]
        assert kinds == ["table", "linear", "tree"]
        first = lines[1].split(",")
        assert float(first[3]) == 1.0 and float(first[4]) == 1.0

    def test_sim_metrics_and_trajectory(self, pipeline):
        text = pipeline["metrics"].read_text("ascii")
        assert "relative_runtime" not in text
        pairs = parse_kv(text)
        assert int(pairs["encounters"]) == 40
        assert all(0.0 <= float(pairs[k]) <= 1.0
                   for k in ("p_nmac", "p_alert", "p_reversal", "p_split"))
        csv = Path(str(pipeline["metrics"]) + ".csv").read_text("ascii")
        assert csv.splitlines()[0] == "p_nmac,p_alert,p_reversal,p_split,encounters"
        traj = pipeline["traj"].read_text("ascii").splitlines()
        assert traj[0] == ("step,own_x,own_y,own_heading,int_x,int_y,"
                           "int_heading,advisory,nmac,alert,reversal,split")
        assert len(traj) == 13

    def test_prune_trend_and_output(self, pipeline):
        table = decode_table(pipeline["table"].read_bytes())
        pruned = read_array(pipeline["pruned"], table.grid)
        zeros = sum(int(np.sum(w == 0.0)) for m in pruned.members.values()
                    for w in m.weights)
        total = sum(w.size for m in pruned.members.values()
                    for w in m.weights)
        assert zeros / total >= 0.5
        lines = [ln for ln in Path(str(pipeline["pruned"]) + ".trend.csv")
                 .read_text("ascii").splitlines() if not ln.startswith("#")]
        assert lines[0] == "sparsity,rmse,policy_error_pct"
        sparsities = [float(ln.split(",")[0]) for ln in lines[1:]]
        assert sparsities == sorted(sparsities)
        assert sparsities[-1] >= 0.5

    def test_every_stage_rerun_is_byte_identical(self, pipeline, tmp_path):
        """Re-running each stage from its manifest reproduces the artifact.

        The bench artifact is monotonic-clock measurements, so only its
        manifest is compared; every other stage must reproduce exactly.
        """
        table = str(pipeline["table"])
        redo = {
            "fit-linear": (pipeline["linear"],
                           ["fit-linear", "--table", table]),
            "fit-tree": (pipeline["tree"], ["fit-tree", "--table", table]),
            "train": (pipeline["array"], ["train", "--table", table]),
            "prune": (pipeline["pruned"],
                      ["prune", "--table", table,
                       "--net-array", str(pipeline["array"])]),
            "eval": (pipeline["report"],
                     ["eval", "--table", table,
                      "--source", str(pipeline["array"])]),
            "slice": (pipeline["slice"], ["slice", "--source", table]),
            "sim": (pipeline["metrics"], ["sim", "--source", table]),
            "bench": (pipeline["bench"],
                      ["bench", "--table", table,
                       "--source", str(pipeline["linear"]),
                       "--source", str(pipeline["tree"])]),
        }
        for name, (orig, argv) in redo.items():
            out2 = tmp_path / f"redo_{orig.name}"
            manifest = str(orig) + ".run"
            assert run(argv + ["--config", manifest,
                               "--out", str(out2)]) == 0, name
            assert (Path(str(out2) + ".run").read_bytes()
                    == Path(manifest).read_bytes()), name
            if name == "bench":
                continue
            for ext in (".csv", ".header", ".trend.csv"):
                side = Path(str(orig) + ext)
                if side.exists():
                    assert (Path(str(out2) + ext).read_bytes()
                            == side.read_bytes()), f"{name}{ext}"
            if orig.is_dir():
                files = sorted(p.name for p in orig.iterdir())
                assert files == sorted(p.name for p in out2.iterdir()), name
                for fn in files:
                    assert ((out2 / fn).read_bytes()
                            == (orig / fn).read_bytes()), f"{name}/{fn}"
            else:
                assert out2.read_bytes() == orig.read_bytes(), name
