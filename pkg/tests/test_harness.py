import csv
import json
import statistics

import numpy as np
import pytest

from manifold_rl import cli, harness
from manifold_rl.harness import (
    ConfigError, RunConfig, SweepResult, load_config, parse_dims, resolved_text, trailing_mean,
)
from manifold_rl.learner import save_snapshot
from manifold_rl.pipeline import PipelineConfig, build_pipeline, collect_demonstrations, train
from manifold_rl.platformer import FEATURE_NAMES


def write_ini(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# config -----------------------------------------------------------------------

def test_defaults_without_file():
    run = load_config()
    assert run.pipeline == PipelineConfig()
    assert run.sweep.dims == (1, 2, 3, 4, 5, 6, 7, 8, 9, None)


def test_ini_values_and_overrides(tmp_path):
    path = write_ini(tmp_path, """
[pipeline]
episodes = 40
standardize = false
[learner]
alpha = 0.05
[rewards]
coin = 20.5
[level]
enemy_band = 3,4
[sweep]
dims = 2, raw
jobs = 3
""")
    run = load_config(path, {"seed": 7, "trials": 2, "episodes": None})
    cfg = run.pipeline
    assert (cfg.episodes, cfg.seed, cfg.trials, cfg.standardize) == (40, 7, 2, False)
    assert cfg.params.alpha == 0.05 and cfg.env.rewards.coin == 20.5
    assert cfg.level.enemy_band == (3, 4)
    assert run.sweep.dims == (2, None) and run.sweep.jobs == 3
    run = load_config(path, {"dims": "4", "jobs": 1})
    assert run.sweep.dims == (4,) and run.sweep.jobs == 1


def test_resolved_config_round_trips(tmp_path):
    run = load_config(write_ini(tmp_path, "[env]\nstep_limit = 99\n[sweep]\ndims = 1,raw\n"))
    text = resolved_text(run)
    again = load_config(write_ini(tmp_path, text, "resolved.ini"))
    assert again.pipeline == run.pipeline and again.sweep.dims == run.sweep.dims


@pytest.mark.parametrize("text", [
    "[bogus]\nx = 1\n",
    "[pipeline]\nwhat = 1\n",
    "[pipeline]\nepisodes = many\n",
    "[pipeline]\ndemo_episodes = 0\n",
    "[pipeline]\nstandardize = maybe\n",
    "[sweep]\ndims = 0,1\n",
    "[sweep]\ndims = 2,2\n",
    "[sweep]\ndims = four\n",
    "[sweep]\nspeed = 1\n",
    "not an ini file",
])
def test_invalid_config_rejected(tmp_path, text):
    with pytest.raises(ValueError):
        load_config(write_ini(tmp_path, text))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")


def test_parse_dims():
    assert parse_dims("1,2,raw") == (1, 2, None)
    assert parse_dims(" 9 ") == (9,)
    with pytest.raises(ConfigError):
        parse_dims("")


def test_jobs_environment_fallback(monkeypatch):
    monkeypatch.setenv("MANIFOLD_RL_JOBS", "3")
    assert harness.default_jobs() == 3
    monkeypatch.setenv("MANIFOLD_RL_JOBS", "x")
    with pytest.raises(ConfigError):
        harness.default_jobs()
    monkeypatch.delenv("MANIFOLD_RL_JOBS")
    assert harness.default_jobs() >= 1


# sweep --------------------------------------------------------------------------

def small_overrides(**kw):
    base = {"trials": 2, "episodes": 4, "dims": "2,raw", "jobs": 1}
    base.update(kw)
    return base


@pytest.fixture
def small_ini(tmp_path):
    return write_ini(tmp_path, "[pipeline]\ndemo_episodes = 5\n[env]\nstep_limit = 300\n")


def test_minimal_sweep_single_row(tmp_path, small_ini):
    out = tmp_path / "out"
    harness.cmd_sweep(small_ini, out, {"trials": 1, "episodes": 1, "dims": "9", "jobs": 1})
    rows = read_rows(out / "sweep_k9.csv")
    assert rows[0] == ["episode", "mean_return", "stderr"]
    assert len(rows) == 2 and rows[1][0] == "1" and rows[1][2] == "0"
    assert (out / "config.resolved").exists() and (out / "sweep.svg").exists()
    meta = json.loads((out / "sweep_meta.json").read_text())
    assert meta["dims"] == ["9"] and len(meta["config_hash"]) == 64


def test_combined_matches_recomputation_from_trials(tmp_path, small_ini):
    out = tmp_path / "out"
    harness.cmd_sweep(small_ini, out, small_overrides(trials=3), debug=True)
    combined = read_rows(out / "sweep_combined.csv")
    assert combined[0] == ["k", "episode", "mean_return", "stderr", "trials"]
    by_key = {(r[0], int(r[1])): (float(r[2]), float(r[3]), int(r[4])) for r in combined[1:]}
    for label in ("2", "raw"):
        trials = read_rows(out / f"sweep_k{label}_trials.csv")
        for row in trials[1:]:
            vals = [float(v) for v in row[1:]]
            mean, se, n = by_key[(label, int(row[0]))]
            assert n == len(vals) == 3
            assert mean == pytest.approx(statistics.fmean(vals), abs=1e-9)
            assert se == pytest.approx(statistics.stdev(vals) / 3 ** 0.5, abs=1e-9)


def test_sweep_byte_identical_across_runs_and_jobs(tmp_path, small_ini):
    outs = []
    for i, jobs in enumerate((1, 1, 2)):
        out = tmp_path / f"run{i}"
        harness.cmd_sweep(small_ini, out, small_overrides(jobs=jobs))
        outs.append(out)
    for name in ("sweep_k2.csv", "sweep_kraw.csv", "sweep_combined.csv", "config.resolved"):
        first = (outs[0] / name).read_bytes()
        assert all((o / name).read_bytes() == first for o in outs[1:]), name


def test_seed_changes_results(tmp_path, small_ini):
    a, _ = harness.run_sweep(load_config(small_ini, small_overrides(seed=1)))
    b, _ = harness.run_sweep(load_config(small_ini, small_overrides(seed=2)))
    assert not np.array_equal(a.returns[None], b.returns[None])


def test_sweep_snapshot_written(tmp_path, small_ini):
    path = write_ini(tmp_path, small_ini.read_text() + "[sweep]\nsnapshot = true\n", "snap.ini")
    out = tmp_path / "out"
    harness.cmd_sweep(path, out, small_overrides(dims="2"))
    doc = json.loads((out / "snapshot_k2.json").read_text())
    assert doc["n_actions"] == 12 and doc["encoder"]["basis"]["k"] == 2


def test_unwritable_output_directory(tmp_path, small_ini):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(ConfigError):
        harness.cmd_sweep(small_ini, blocker / "sub", small_overrides())


def test_trailing_mean_against_loop():
    rng = np.random.default_rng(0)
    v = rng.normal(size=130)
    expected = [np.mean(v[max(0, i - 49): i + 1]) for i in range(130)]
    np.testing.assert_allclose(trailing_mean(v, 50), expected, atol=1e-12)


def test_svg_bolds_curves_at_or_above_baseline():
    returns = {1: np.full((2, 10), 5.0), 4: np.full((2, 10), 12.0), None: np.full((2, 10), 10.0)}
    svg = harness.sweep_svg(SweepResult((1, 4, None), returns))
    assert svg.startswith("<svg") and svg.count("<polyline") == 3
    widths = [seg.split('stroke-width="')[1].split('"')[0]
              for seg in svg.split("<polyline")[1:]]
    assert widths == ["1.2", "3.0", "1.2"]


def test_final_means_window():
    r = np.arange(2 * 400, dtype=float).reshape(2, 400)
    res = SweepResult((4,), {4: r})
    np.testing.assert_array_equal(res.final_means(4), r[:, 100:].mean(axis=1))
    assert res.final_means(4, window=1000).shape == (2,)


# loadings ------------------------------------------------------------------------

def test_loadings_outputs(tmp_path, small_ini):
    out = tmp_path / "out"
    basis = harness.cmd_loadings(small_ini, out)
    rows = read_rows(out / "loadings.csv")
    assert rows[0] == ["component", *FEATURE_NAMES] and len(rows) == 10
    m = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    np.testing.assert_allclose(np.linalg.norm(m, axis=1), 1.0, atol=1e-8)
    spectrum = read_rows(out / "spectrum.csv")
    assert spectrum[0] == ["component", "eigenvalue", "explained_ratio", "cumulative"]
    assert float(spectrum[-1][3]) == 1.0
    np.testing.assert_allclose([float(r[1]) for r in spectrum[1:]], basis.eigenvalues, rtol=1e-14)


def test_unstandardized_component_one_is_closest_enemy(tmp_path, small_ini):
    path = write_ini(tmp_path, small_ini.read_text().replace(
        "[pipeline]\n", "[pipeline]\nstandardize = false\n"), "raw.ini")
    basis = harness.cmd_loadings(path, tmp_path / "out")
    top = np.argsort(-np.abs(basis.w[:, 0]))[:2]
    assert {FEATURE_NAMES[i] for i in top} == {"closest_enemy_x", "closest_enemy_y"}


def test_collect_csv(tmp_path, small_ini):
    demos = harness.cmd_collect(small_ini, tmp_path)
    rows = read_rows(tmp_path / "demonstrations.csv")
    assert tuple(rows[0]) == FEATURE_NAMES and len(rows) == demos.observations.shape[0] + 1


# play ------------------------------------------------------------------------------

def test_random_play_log_terminates_and_repeats(tmp_path):
    rec = harness.cmd_play(None, tmp_path / "a", level_seed=3)
    again = harness.cmd_play(None, tmp_path / "b", level_seed=3)
    assert rec == again and rec.cause in ("finished", "died", "timeout")
    log = read_rows(tmp_path / "a" / "events.csv")
    assert log[-1][1] == rec.cause
    assert sum(float(r[2]) for r in log[1:]) == rec.total_return
    assert (tmp_path / "a" / "events.csv").read_bytes() == (tmp_path / "b" / "events.csv").read_bytes()


def test_play_rejects_bad_inputs(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        harness.cmd_play(None, tmp_path, policy=bad)
    with pytest.raises(ConfigError):
        harness.cmd_play(None, tmp_path, policy=tmp_path / "missing.json")
    with pytest.raises(ConfigError):
        harness.cmd_play(None, tmp_path, mode="tiny")
    with pytest.raises(ValueError):
        harness.cmd_play(None, tmp_path, level_seed=-5)


def test_trained_snapshot_beats_random(tmp_path):
    cfg = PipelineConfig(k=4, episodes=1500)
    built = build_pipeline(cfg, collect_demonstrations(cfg))
    enc = built.encoder()
    from manifold_rl.learner import QTable
    q = QTable()
    train(cfg, enc, q=q)
    snap = tmp_path / "q.json"
    save_snapshot(snap, q, enc)
    greedy, rand = [], []
    for seed in range(1000, 1100):
        mode = ("small", "large", "fire")[seed % 3]
        greedy.append(harness.cmd_play(None, tmp_path / "g", seed, snap, mode).total_return)
        rand.append(harness.cmd_play(None, tmp_path / "r", seed, None, mode).total_return)
    assert np.mean(greedy) > np.mean(rand)
    # same seed and snapshot: identical log
    harness.cmd_play(None, tmp_path / "g2", 1099, snap, "large")
    assert (tmp_path / "g" / "events.csv").read_bytes() == (tmp_path / "g2" / "events.csv").read_bytes()


# cli --------------------------------------------------------------------------------

def test_cli_sweep_and_exit_codes(tmp_path, small_ini, capsys):
    code = cli.main(["sweep", "--config", str(small_ini), "--out", str(tmp_path / "o"),
                     "--dims", "1", "--trials", "1", "--episodes", "2", "--jobs", "1"])
    assert code == 0 and (tmp_path / "o" / "sweep_k1.csv").exists()
    code = cli.main(["sweep", "--config", str(tmp_path / "missing.ini")])
    err = capsys.readouterr().err
    assert code != 0 and err.startswith("error:") and err.count("\n") == 1
    assert cli.main(["play", "--out", str(tmp_path / "p"), "--level", "2"]) == 0
    assert cli.main(["loadings", "--config", str(small_ini), "--out", str(tmp_path / "l")]) == 0
    assert cli.main(["collect", "--config", str(small_ini), "--out", str(tmp_path / "c")]) == 0


def test_cli_requires_subcommand():
    with pytest.raises(SystemExit):
        cli.main([])


def test_run_config_defaults():
    assert RunConfig().pipeline == PipelineConfig()
