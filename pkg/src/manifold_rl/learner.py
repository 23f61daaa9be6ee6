"""
Watkins's Q(lambda) with replacing traces over discretized manifold states.

States reach the learner as tuples of bin indices produced by a Discretizer
from PCA coordinates (or, for the full-state baseline, as the raw integer
observation tuple). The Q-table stores one row of 12 action values per
visited state; unseen states read as all zeros.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pca import TruncatedBasis, project

TRACE_EVICT = 1e-6


class LearnerError(ValueError):
    pass


@dataclass(frozen=True)
class LearnerParams:
    alpha: float = 0.01
    lam: float = 0.5
    gamma: float = 0.9
    epsilon: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise LearnerError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 <= self.lam <= 1.0:
            raise LearnerError(f"lambda must be in [0, 1], got {self.lam}")
        if not 0.0 <= self.gamma < 1.0:
            raise LearnerError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise LearnerError(f"epsilon must be in [0, 1], got {self.epsilon}")


class Discretizer:
    """Uniform per-component binning between ``lo`` and ``hi``.

    Bins are lower-inclusive; coordinates outside ``[lo, hi)`` clamp to the
    edge bins.
    """

    def __init__(self, lo, hi, bins_per_dim=20):
        lo = np.array(lo, dtype=float).ravel()
        hi = np.array(hi, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise LearnerError("lo and hi must have the same length")
        if bins_per_dim < 1:
            raise LearnerError("bins_per_dim must be positive")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise LearnerError("bounds must be finite")
        if np.any(hi < lo):
            raise LearnerError("hi must not be below lo")
        # widen degenerate components so every width is positive
        flat = hi - lo <= 0.0
        pad = np.maximum(np.abs(lo), 1.0) * 1e-9
        hi = np.where(flat, lo + pad, hi)
        self.lo, self.hi = lo, hi
        self.bins = int(bins_per_dim)
        self._lo = lo.tolist()
        self._inv = (self.bins / (hi - lo)).tolist()

    @property
    def k(self) -> int:
        return len(self._lo)

    @classmethod
    def from_coords(cls, coords, bins_per_dim=20):
        coords = np.asarray(coords, dtype=float)
        return cls(coords.min(axis=0), coords.max(axis=0), bins_per_dim)

    def __call__(self, coords) -> tuple:
        if len(coords) != len(self._lo):
            raise LearnerError(f"expected {len(self._lo)} coordinates, got {len(coords)}")
        top = self.bins - 1
        key = []
        for x, lo, inv in zip(coords, self._lo, self._inv):
            b = math.floor((x - lo) * inv)
            key.append(0 if b < 0 else (top if b > top else b))
        return tuple(key)

    def to_dict(self):
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist(), "bins_per_dim": self.bins}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["lo"], doc["hi"], doc["bins_per_dim"])


def discretize(d: Discretizer, coords) -> tuple:
    return d(coords)


class StateEncoder:
    """Raw observation -> state key, memoized per distinct observation.

    With ``basis is None`` the raw observation tuple is the key (full-state
    baseline). ``verify`` recomputes every lookup without the cache.
    """

    def __init__(self, basis: TruncatedBasis | None, discretizer: Discretizer | None,
                 verify=False):
        if (basis is None) != (discretizer is None):
            raise LearnerError("basis and discretizer must be given together")
        if basis is not None and basis.k != discretizer.k:
            raise LearnerError(f"basis k={basis.k} but discretizer k={discretizer.k}")
        self.basis = basis
        self.discretizer = discretizer
        self.verify = verify
        self._cache: dict = {}

    def encode_uncached(self, obs) -> tuple:
        if self.basis is None:
            return tuple(int(v) for v in obs)
        return self.discretizer(project(self.basis, obs).tolist())

    def __call__(self, obs) -> tuple:
        key = self._cache.get(obs)
        if key is None:
            key = self.encode_uncached(obs)
            self._cache[obs] = key
        elif self.verify and key != self.encode_uncached(obs):
            raise AssertionError(f"cached key for {obs} diverged from projection")
        return key


class QTable:
    """Sparse action-value table: ``rows[state] -> list of n_actions values``."""

    def __init__(self, n_actions=12):
        self.n_actions = n_actions
        self.rows: dict = {}
        self._zeros = (0.0,) * n_actions

    def __len__(self):
        return len(self.rows)

    def values(self, s):
        return self.rows.get(s, self._zeros)

    def get(self, s, a) -> float:
        row = self.rows.get(s)
        return 0.0 if row is None else row[a]

    def row(self, s) -> list:
        row = self.rows.get(s)
        if row is None:
            row = self.rows[s] = [0.0] * self.n_actions
        return row

    def max_value(self, s) -> float:
        row = self.rows.get(s)
        return 0.0 if row is None else max(row)

    def greedy_actions(self, s) -> list:
        row = self.rows.get(s)
        if row is None:
            return list(range(self.n_actions))
        best = max(row)
        return [a for a, v in enumerate(row) if v == best]

    def is_greedy(self, s, a) -> bool:
        row = self.rows.get(s)
        return row is None or row[a] == max(row)

    def entries(self):
        """Materialized (state, action, value) triples in sorted state order."""
        for s in sorted(self.rows):
            for a, v in enumerate(self.rows[s]):
                yield s, a, v

    def to_dict(self):
        return {"n_actions": self.n_actions,
                "entries": [[list(s), a, v] for s, a, v in self.entries()]}

    @classmethod
    def from_dict(cls, doc):
        q = cls(int(doc.get("n_actions", 12)))
        for key, a, v in doc["entries"]:
            q.row(tuple(key))[int(a)] = float(v)
        return q


def save_snapshot(path, q: QTable, encoder: StateEncoder | None = None):
    doc = q.to_dict()
    if encoder is not None and encoder.basis is not None:
        doc["encoder"] = {
            "basis": encoder.basis.parent.to_dict(k=encoder.basis.k),
            "discretizer": encoder.discretizer.to_dict(),
        }
    elif encoder is not None:
        doc["encoder"] = {"raw": True}
    Path(path).write_text(json.dumps(doc) + "\n")


def load_snapshot(path):
    """Returns ``(QTable, StateEncoder or None)``."""
    from .pca import PrincipalBasis, truncate

    doc = json.loads(Path(path).read_text())
    q = QTable.from_dict(doc)
    enc = doc.get("encoder")
    if enc is None:
        return q, None
    if enc.get("raw"):
        return q, StateEncoder(None, None)
    basis = PrincipalBasis.from_dict(enc["basis"])
    tb = truncate(basis, int(enc["basis"]["k"]))
    return q, StateEncoder(tb, Discretizer.from_dict(enc["discretizer"]))


class EligibilityTraces(dict):
    """(state, action) -> trace in (0, 1]."""

    def decay(self, factor):
        if factor <= 0.0:
            self.clear()
            return
        dead = []
        for k, v in self.items():
            v *= factor
            if v < TRACE_EVICT:
                dead.append(k)
            else:
                self[k] = v
        for k in dead:
            del self[k]


def select_action(q: QTable, s, params: LearnerParams, rng) -> int:
    """Epsilon-greedy with uniform tie-breaking among greedy actions.

    ``rng`` is a ``random.Random``; exactly one draw decides exploration and
    one more picks the action.
    """
    if rng.random() < params.epsilon:
        return rng.randrange(q.n_actions)
    row = q.rows.get(s)
    if row is None:
        return rng.randrange(q.n_actions)
    best = max(row)
    ties = [a for a, v in enumerate(row) if v == best]
    return ties[0] if len(ties) == 1 else ties[rng.randrange(len(ties))]


def update(q: QTable, traces: EligibilityTraces, s, a, r, s_next, done,
           next_greedy: bool, params: LearnerParams) -> float:
    """One Watkins Q(lambda) backup; returns the TD error."""
    if not math.isfinite(r):
        raise LearnerError(f"non-finite reward {r!r}")
    row = q.row(s)
    target = r if done else r + params.gamma * q.max_value(s_next)
    delta = target - row[a]
    traces[(s, a)] = 1.0
    if delta != 0.0:
        step = params.alpha * delta
        rows = q.rows
        for (ts, ta), e in traces.items():
            rows[ts][ta] += step * e
    if next_greedy and not done:
        traces.decay(params.gamma * params.lam)
    else:
        traces.clear()
    return delta


@dataclass(frozen=True)
class EpisodeRecord:
    total_return: float
    steps: int
    cause: str


def run_episode(env, encoder, q: QTable, params: LearnerParams, rng, reset_args=(),
                learn=True, trace_hook=None) -> EpisodeRecord:
    """Project -> discretize -> act -> step -> project -> update, until done.

    ``env`` follows the ``reset(*reset_args) -> obs`` / ``step(a) -> (obs,
    reward, done, cause)`` protocol. ``trace_hook(obs, key)`` sees every state
    fed to the learner.
    """
    traces = EligibilityTraces()
    obs = env.reset(*reset_args)
    s = encoder(obs)
    if trace_hook is not None:
        trace_hook(obs, s)
    a = select_action(q, s, params, rng)
    total, steps = 0.0, 0
    while True:
        obs, r, done, cause = env.step(a)
        total += r
        steps += 1
        s_next = encoder(obs)
        if trace_hook is not None:
            trace_hook(obs, s_next)
        if done:
            if learn:
                update(q, traces, s, a, r, s_next, True, False, params)
            return EpisodeRecord(total, steps, cause)
        a_next = select_action(q, s_next, params, rng)
        if learn:
            greedy = q.is_greedy(s_next, a_next)
            update(q, traces, s, a, r, s_next, False, greedy, params)
        s, a = s_next, a_next
