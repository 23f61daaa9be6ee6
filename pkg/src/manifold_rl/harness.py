"""
Experiment runner: dimension sweeps, loading tables, single-episode replays.

Configuration is an INI file. Every key is optional; missing keys keep the
library defaults. Sections and keys::

    [pipeline]  demo_episodes demo_policy demo_pretrain_episodes standardize
                bins_per_dim episodes trials seed
    [learner]   alpha lam gamma epsilon
    [env]       step_limit activation goomba_period invulnerable_ticks
                fireball_range fireball_cooldown stomp_bounce
    [rewards]   kill_enemy mushroom fireflower coin hidden_block finish_level
                hurt die
    [level]     length height enemy_band ("lo,hi") coin_rate ground_coin_rate
                wall_rate pit_rate max_wall item_rate safe_start
    [sweep]     dims ("1,2,4,raw") jobs plot snapshot

Output files (all under the output directory):

    config.resolved           every setting actually used, as INI
    sweep_k{K}.csv            episode,mean_return,stderr   (K = 1..9 or raw)
    sweep_combined.csv        k,episode,mean_return,stderr,trials
    sweep_k{K}_trials.csv     per-trial returns (only with debug)
    sweep.svg                 smoothed learning curves
    sweep_meta.json           config hash, version, wall time
    loadings.csv, spectrum.csv, demonstrations.csv, events.csv

Numbers in CSV files use 15 significant digits, so equal configs give
byte-identical files whatever the worker count.
"""
from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import math
import os
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from importlib import metadata
from pathlib import Path

import numpy as np

from . import pca
from .learner import (
    LearnerParams, QTable, StateEncoder, load_snapshot, run_episode, save_snapshot,
)
from .pipeline import (
    ConfigError, PipelineConfig, build_pipeline, collect_demonstrations, fit_basis, make_encoder,
    train,
)
from .platformer import (
    FEATURE_NAMES, MODES, N_ACTIONS, EnvConfig, LevelConfig, Platformer, RewardSchedule,
    generate_level, write_event_log,
)

FINAL_WINDOW = 300
SMOOTHING = 50
ALL_DIMS = (1, 2, 3, 4, 5, 6, 7, 8, 9, None)
_PIPELINE_KEYS = ("demo_episodes", "demo_policy", "demo_pretrain_episodes", "standardize",
                  "bins_per_dim", "episodes", "trials", "seed")


def fmt(v) -> str:
    return format(float(v), ".15g")


def dim_label(k) -> str:
    return "raw" if k is None else str(k)


def parse_dims(text) -> tuple:
    dims = []
    for part in str(text).split(","):
        part = part.strip().lower()
        if not part:
            continue
        if part == "raw":
            dims.append(None)
            continue
        try:
            dims.append(int(part))
        except ValueError:
            raise ConfigError(f"bad dimension {part!r}; use integers 1-9 or 'raw'") from None
    if not dims:
        raise ConfigError("no dimensions given")
    for k in dims:
        if k is not None and not 1 <= k <= len(FEATURE_NAMES):
            raise ConfigError(f"dimension {k} outside 1..{len(FEATURE_NAMES)}")
    if len(set(dims)) != len(dims):
        raise ConfigError("duplicate dimensions")
    return tuple(dims)


def default_jobs() -> int:
    env = os.environ.get("MANIFOLD_RL_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"MANIFOLD_RL_JOBS must be an integer, got {env!r}") from None
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


@dataclass(frozen=True)
class SweepSettings:
    dims: tuple = ALL_DIMS
    jobs: int | None = None
    plot: bool = True
    snapshot: bool = False


@dataclass(frozen=True)
class RunConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    sweep: SweepSettings = field(default_factory=SweepSettings)


# config file ------------------------------------------------------------------

def _coerce(raw: str, like, key):
    try:
        if isinstance(like, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if isinstance(like, int):
            return int(raw)
        if isinstance(like, float):
            return float(raw)
        if isinstance(like, tuple):
            return tuple(int(p) for p in raw.split(","))
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None


def _section_values(parser, section, template, allowed):
    out = {}
    if not parser.has_section(section):
        return out
    for key, raw in parser.items(section):
        if key not in allowed:
            raise ConfigError(f"unknown key [{section}] {key}")
        out[key] = _coerce(raw, getattr(template, key), f"[{section}] {key}")
    return out


def _field_names(obj):
    return tuple(f.name for f in fields(obj))


def load_config(path=None, overrides=None) -> RunConfig:
    """Read an INI config (or defaults when ``path`` is None), then apply overrides.

    ``overrides`` maps ``seed``, ``trials``, ``episodes``, ``dims`` and ``jobs``
    to values; None entries are ignored.
    """
    parser = configparser.ConfigParser()
    if path is not None:
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
    known = {"pipeline", "learner", "env", "rewards", "level", "sweep"}
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"unknown section [{section}]")

    defaults = PipelineConfig()
    pipe = _section_values(parser, "pipeline", defaults, _PIPELINE_KEYS)
    params = LearnerParams(**_section_values(parser, "learner", defaults.params,
                                             _field_names(LearnerParams)))
    rewards = RewardSchedule(**_section_values(parser, "rewards", defaults.env.rewards,
                                               _field_names(RewardSchedule)))
    env_keys = tuple(n for n in _field_names(EnvConfig) if n != "rewards")
    env = EnvConfig(**_section_values(parser, "env", defaults.env, env_keys), rewards=rewards)
    level = LevelConfig(**_section_values(parser, "level", defaults.level,
                                          _field_names(LevelConfig)))

    sweep_raw = dict(parser.items("sweep")) if parser.has_section("sweep") else {}
    for key in sweep_raw:
        if key not in ("dims", "jobs", "plot", "snapshot"):
            raise ConfigError(f"unknown key [sweep] {key}")
    sweep = SweepSettings(
        dims=parse_dims(sweep_raw["dims"]) if "dims" in sweep_raw else ALL_DIMS,
        jobs=_coerce(sweep_raw["jobs"], 1, "[sweep] jobs") if "jobs" in sweep_raw else None,
        plot=_coerce(sweep_raw.get("plot", "true"), True, "[sweep] plot"),
        snapshot=_coerce(sweep_raw.get("snapshot", "false"), True, "[sweep] snapshot"),
    )

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in ("seed", "trials", "episodes"):
            pipe[key] = int(value)
        elif key == "dims":
            sweep = replace(sweep, dims=parse_dims(value) if isinstance(value, str) else tuple(value))
        elif key == "jobs":
            sweep = replace(sweep, jobs=int(value))
        else:
            raise ConfigError(f"unknown override {key}")
    if sweep.jobs is not None and sweep.jobs < 1:
        raise ConfigError("jobs must be at least 1")
    cfg = PipelineConfig(params=params, env=env, level=level, **pipe)
    return RunConfig(cfg, sweep)


def resolved_text(run: RunConfig) -> str:
    """The fully resolved configuration as INI text (stable key order)."""
    cfg = run.pipeline
    parser = configparser.ConfigParser()

    def put(section, obj, names):
        parser[section] = {}
        for name in names:
            v = getattr(obj, name)
            if isinstance(v, tuple):
                v = ",".join(str(p) for p in v)
            elif isinstance(v, float):
                v = fmt(v)
            parser[section][name] = str(v).lower() if isinstance(v, bool) else str(v)

    put("pipeline", cfg, _PIPELINE_KEYS)
    put("learner", cfg.params, _field_names(LearnerParams))
    put("env", cfg.env, tuple(n for n in _field_names(EnvConfig) if n != "rewards"))
    put("rewards", cfg.env.rewards, _field_names(RewardSchedule))
    put("level", cfg.level, _field_names(LevelConfig))
    parser["sweep"] = {
        "dims": ",".join(dim_label(k) for k in run.sweep.dims),
        "plot": str(run.sweep.plot).lower(),
        "snapshot": str(run.sweep.snapshot).lower(),
    }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def _prepare_out(out) -> Path:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc.strerror}") from None
    return out


def _write_resolved(out: Path, run: RunConfig) -> str:
    text = resolved_text(run)
    (out / "config.resolved").write_text(text)
    return text


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


# sweep ------------------------------------------------------------------------

@dataclass
class SweepResult:
    """Per-k learning curves. ``returns[k]`` is a trials x episodes array."""

    dims: tuple
    returns: dict
    config_hash: str = ""
    wall_time: float = 0.0

    def mean(self, k):
        return self.returns[k].mean(axis=0)

    def stderr(self, k):
        r = self.returns[k]
        if r.shape[0] < 2:
            return np.zeros(r.shape[1])
        return r.std(axis=0, ddof=1) / math.sqrt(r.shape[0])

    def final_means(self, k, window=FINAL_WINDOW):
        """Per-trial mean return over the last ``window`` episodes."""
        r = self.returns[k]
        return r[:, -min(window, r.shape[1]):].mean(axis=1)


def _trial_worker(task):
    cfg, encoder, trial, want_q = task
    q = QTable(N_ACTIONS)
    records = train(cfg, encoder, trial=trial, q=q)
    return [r.total_return for r in records], (q.to_dict() if want_q else None)


def run_sweep(run: RunConfig, jobs: int | None = None):
    """Train every (k, trial) pair; merge in (k, trial) order.

    Demonstrations and the PCA basis are shared by all k, so the sweep
    differs between dimensions only in the truncation.
    """
    cfg = run.pipeline
    jobs = jobs or run.sweep.jobs or default_jobs()
    started = time.perf_counter()
    projected = [k for k in run.sweep.dims if k is not None]
    encoders = {}
    if projected:
        demos = collect_demonstrations(cfg)
        basis = fit_basis(demos, cfg.standardize)
    for k in run.sweep.dims:
        kc = replace(cfg, k=k)
        built = build_pipeline(kc, demos, basis) if k is not None else None
        encoders[k] = (kc, make_encoder(kc, built))

    tasks = [(encoders[k][0], encoders[k][1], trial, run.sweep.snapshot and trial == 0)
             for k in run.sweep.dims for trial in range(cfg.trials)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_trial_worker, tasks))
    else:
        results = [_trial_worker(t) for t in tasks]

    returns, snapshots = {}, {}
    it = iter(results)
    for k in run.sweep.dims:
        rows = []
        for trial in range(cfg.trials):
            rets, qdoc = next(it)
            rows.append(rets)
            if qdoc is not None:
                snapshots[k] = (QTable.from_dict(qdoc), encoders[k][1])
        returns[k] = np.array(rows, dtype=float).reshape(cfg.trials, cfg.episodes)
    result = SweepResult(tuple(run.sweep.dims), returns,
                         wall_time=time.perf_counter() - started)
    return result, snapshots


def write_sweep(out: Path, result: SweepResult, debug=False, plot=True):
    with open(out / "sweep_combined.csv", "w", newline="") as comb:
        cw = csv.writer(comb, lineterminator="\n")
        cw.writerow(["k", "episode", "mean_return", "stderr", "trials"])
        for k in result.dims:
            label = dim_label(k)
            mean, se = result.mean(k), result.stderr(k)
            n = result.returns[k].shape[0]
            with open(out / f"sweep_k{label}.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["episode", "mean_return", "stderr"])
                for ep, (m, s) in enumerate(zip(mean, se), start=1):
                    w.writerow([ep, fmt(m), fmt(s)])
                    cw.writerow([label, ep, fmt(m), fmt(s), n])
            if debug:
                with open(out / f"sweep_k{label}_trials.csv", "w", newline="") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(["episode", *(f"trial_{t}" for t in range(n))])
                    for ep in range(result.returns[k].shape[1]):
                        w.writerow([ep + 1, *(fmt(v) for v in result.returns[k][:, ep])])
    if plot:
        (out / "sweep.svg").write_text(sweep_svg(result))


def cmd_sweep(config=None, out=".", overrides=None, debug=False):
    run = load_config(config, overrides)
    out = _prepare_out(out)
    text = _write_resolved(out, run)
    result, snapshots = run_sweep(run)
    result.config_hash = hashlib.sha256(text.encode()).hexdigest()
    write_sweep(out, result, debug=debug, plot=run.sweep.plot)
    for k, (q, enc) in snapshots.items():
        save_snapshot(out / f"snapshot_k{dim_label(k)}.json", q, enc)
    meta = {"config_hash": result.config_hash, "version": _version(),
            "wall_time_s": round(result.wall_time, 3),
            "dims": [dim_label(k) for k in result.dims],
            "trials": run.pipeline.trials, "episodes": run.pipeline.episodes}
    (out / "sweep_meta.json").write_text(json.dumps(meta, indent=1) + "\n")
    return result


# plot -----------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
            "#7f7f7f", "#bcbd22", "#17becf")


def trailing_mean(values, window=SMOOTHING):
    values = np.asarray(values, dtype=float)
    csum = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(1, len(values) + 1)
    lo = np.maximum(0, idx - window)
    return (csum[idx] - csum[lo]) / (idx - lo)


def sweep_svg(result: SweepResult, width=820, height=500) -> str:
    """Smoothed mean curves with +-1 SE bands; bold where final mean >= baseline."""
    left, right, top, bottom = 70, 120, 20, 50
    pw, ph = width - left - right, height - top - bottom
    curves = {k: (trailing_mean(result.mean(k)), trailing_mean(result.stderr(k)))
              for k in result.dims}
    n_ep = max(len(m) for m, _ in curves.values()) if curves else 1
    lo = min((m - s).min() for m, s in curves.values()) if n_ep else 0.0
    hi = max((m + s).max() for m, s in curves.values()) if n_ep else 1.0
    if hi - lo < 1e-9:
        lo, hi = lo - 1.0, hi + 1.0
    baseline = result.final_means(None).mean() if None in result.dims else None

    def sx(i):
        return left + pw * (i / max(n_ep - 1, 1))

    def sy(v):
        return top + ph * (1.0 - (v - lo) / (hi - lo))

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="12">',
             f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>']
    for t in range(5):
        v = lo + (hi - lo) * t / 4
        parts.append(f'<text x="{left - 6}" y="{sy(v) + 4:.1f}" text-anchor="end">{v:.0f}</text>')
    parts.append(f'<text x="{left}" y="{height - 15}">1</text>')
    parts.append(f'<text x="{left + pw}" y="{height - 15}" text-anchor="end">{n_ep}</text>')
    parts.append(f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle">episode</text>')
    parts.append(f'<text x="15" y="{top + ph / 2}" transform="rotate(-90 15 {top + ph / 2})" '
                 f'text-anchor="middle">mean return (smoothed)</text>')
    for i, k in enumerate(result.dims):
        mean, se = curves[k]
        color = _PALETTE[i % len(_PALETTE)]
        xs = [sx(j) for j in range(len(mean))]
        upper = " ".join(f"{x:.1f},{sy(v):.1f}" for x, v in zip(xs, mean + se))
        lower = " ".join(f"{x:.1f},{sy(v):.1f}" for x, v in reversed(list(zip(xs, mean - se))))
        parts.append(f'<polygon points="{upper} {lower}" fill="{color}" fill-opacity="0.15" '
                     f'stroke="none"/>')
        bold = (k is not None and baseline is not None
                and result.final_means(k).mean() >= baseline)
        line = " ".join(f"{x:.1f},{sy(v):.1f}" for x, v in zip(xs, mean))
        parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" '
                     f'stroke-width="{3.0 if bold else 1.2}"/>')
        ly = top + 16 * (i + 1)
        parts.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 30}" '
                     f'y2="{ly - 4}" stroke="{color}" stroke-width="{3.0 if bold else 1.2}"/>')
        parts.append(f'<text x="{left + pw + 35}" y="{ly}">k = {dim_label(k)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# loadings, collect, play ---------------------------------------------------------

def write_spectrum_csv(path, basis: pca.PrincipalBasis):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["component", "eigenvalue", "explained_ratio", "cumulative"])
        vals = np.clip(basis.eigenvalues, 0.0, None)
        total = vals.sum()
        for j in range(basis.p):
            cum = pca.explained_variance_ratio(basis, j + 1)
            w.writerow([j + 1, fmt(basis.eigenvalues[j]), fmt(vals[j] / total), fmt(cum)])


def cmd_loadings(config=None, out=".", overrides=None):
    run = load_config(config, overrides)
    out = _prepare_out(out)
    _write_resolved(out, run)
    demos = collect_demonstrations(run.pipeline)
    basis = fit_basis(demos, run.pipeline.standardize)
    pca.write_loadings_csv(out / "loadings.csv", basis, FEATURE_NAMES)
    write_spectrum_csv(out / "spectrum.csv", basis)
    pca.save_basis(out / "basis.json", basis)
    return basis


def cmd_collect(config=None, out=".", overrides=None):
    run = load_config(config, overrides)
    out = _prepare_out(out)
    _write_resolved(out, run)
    demos = collect_demonstrations(run.pipeline)
    demos.to_csv(out / "demonstrations.csv")
    return demos


def cmd_play(config=None, out=".", level_seed=0, policy=None, mode="small", overrides=None):
    """One episode on one level: random actions, or greedy over a saved Q-table."""
    run = load_config(config, overrides)
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    q = encoder = None
    if policy is not None:
        try:
            q, encoder = load_snapshot(policy)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read policy file {policy}: {exc}") from None
        # snapshots saved without an encoder are keyed on raw observations
        encoder = encoder or StateEncoder(None, None)
    out = _prepare_out(out)
    _write_resolved(out, run)
    spec = generate_level(level_seed, run.pipeline.difficulty, run.pipeline.level)
    env = Platformer(run.pipeline.env, log_events=True)
    rng = random.Random(f"play:{run.pipeline.seed}:{level_seed}")
    if q is None:
        q, encoder = QTable(N_ACTIONS), StateEncoder(None, None)
        params = LearnerParams(epsilon=1.0)
    else:
        params = replace(run.pipeline.params, epsilon=0.0)
    record = run_episode(env, encoder, q, params, rng, reset_args=(spec, mode), learn=False)
    write_event_log(out / "events.csv", env.events)
    return record
