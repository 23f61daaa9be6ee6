"""Discrete-tick platformer with a 9-feature observation and 12 combined actions.

Physics per tick, in order:

1. jump impulse (only when ``can_jump``), fireball if requested and allowed;
2. horizontal movement one cell at a time (two cells when running);
3. vertical movement: rise while the jump timer runs, otherwise fall one cell;
4. goombas walk (every ``goomba_period`` ticks, once within ``activation``
   cells) and fall;
5. contact resolution, item pickup, termination checks.

Direction conventions shared by the observation features (index: dx, dy):

    0 E (1, 0)    1 NE (1, 1)    2 N (0, 1)    3 NW (-1, 1)
    4 W (-1, 0)   5 SW (-1, -1)  6 S (0, -1)   7 SE (1, -1)    8 still

The enemy bitmasks use a separate bit order so that the directions enemies
usually occupy (same row) sit in the low bits:

    bit 0 E, bit 1 W, bit 2 S, bit 3 N, bit 4 SE, bit 5 SW, bit 6 NE, bit 7 NW
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

from .level import (
    COIN, FIREFLOWER, GOOMBA, HIDDEN, BRICK, JUMP_TICKS, MUSHROOM, SOLID, START_X,
    AIR, LevelSpec,
)

FEATURE_NAMES = (
    "can_jump", "on_ground", "can_shoot", "direction", "enemies_near",
    "enemies_mid", "obstacles", "closest_enemy_x", "closest_enemy_y",
)
FEATURE_RANGES = ((0, 1), (0, 1), (0, 1), (0, 8), (0, 255), (0, 255), (0, 15), (0, 21), (0, 21))
N_FEATURES = len(FEATURE_NAMES)

SMALL, LARGE, FIRE = "small", "large", "fire"
MODES = (SMALL, LARGE, FIRE)

LEFT, NONE, RIGHT = -1, 0, 1

# action index = direction_slot * 4 + jump * 2 + run, direction slots left/none/right
N_ACTIONS = 12
ACTIONS = tuple((d, j, r) for d in (LEFT, NONE, RIGHT) for j in (0, 1) for r in (0, 1))


def action_index(direction: int, jump: bool, run: bool) -> int:
    return (direction + 1) * 4 + int(jump) * 2 + int(run)


def action_name(index: int) -> str:
    d, j, r = ACTIONS[index]
    parts = [{LEFT: "left", NONE: "none", RIGHT: "right"}[d]]
    if j:
        parts.append("jump")
    if r:
        parts.append("run_fire")
    return "+".join(parts)


_HEADING = {(1, 0): 0, (1, 1): 1, (0, 1): 2, (-1, 1): 3, (-1, 0): 4,
            (-1, -1): 5, (0, -1): 6, (1, -1): 7, (0, 0): 8}
_ENEMY_BIT = {(1, 0): 0, (-1, 0): 1, (0, -1): 2, (0, 1): 3,
              (1, -1): 4, (-1, -1): 5, (1, 1): 6, (-1, 1): 7}
FIELD_HALF = 10
ABSENT = 21


def _sign(v):
    return (v > 0) - (v < 0)


@dataclass(frozen=True)
class RewardSchedule:
    kill_enemy: float = 10.0
    mushroom: float = 58.0
    fireflower: float = 64.0
    coin: float = 16.0
    hidden_block: float = 24.0
    finish_level: float = 1024.0
    hurt: float = -42.0
    die: float = -512.0


@dataclass(frozen=True)
class EnvConfig:
    step_limit: int = 2000
    activation: int = 12
    goomba_period: int = 1
    invulnerable_ticks: int = 8
    fireball_range: int = 6
    fireball_cooldown: int = 6
    stomp_bounce: int = 2
    rewards: RewardSchedule = field(default_factory=RewardSchedule)


class StepAfterDone(RuntimeError):
    pass


class Goomba:
    __slots__ = ("x", "y", "dir", "alive", "awake")

    def __init__(self, x, y):
        self.x, self.y, self.dir, self.alive, self.awake = x, y, -1, True, False


@dataclass
class WorldState:
    """Everything the environment needs to continue an episode."""

    x: int
    y: int
    mode: str
    vx: int = 0
    vy: int = 0
    rise: int = 0
    jump_held: bool = False
    facing: int = 1
    invulnerable: int = 0
    cooldown: int = 0
    tick: int = 0
    score: float = 0.0
    done: bool = False
    cause: str = "running"
    goombas: list = field(default_factory=list)
    items: dict = field(default_factory=dict)


class Platformer:
    """Step/reset interface over one level at a time.

    ``reset`` accepts a LevelSpec; the tile grid is copied so coins and
    hidden blocks can be consumed without touching the spec.
    """

    def __init__(self, config: EnvConfig | None = None, log_events=False):
        self.config = config or EnvConfig()
        self.log_events = log_events
        self.events: list = []
        self.spec: LevelSpec | None = None
        self.state: WorldState | None = None
        self._tiles = None

    # tile helpers ---------------------------------------------------------
    def _solid(self, x, y):
        if x < 0 or x >= self._length:
            return True
        if y < 0 or y >= self._height:
            return False
        return self._tiles[x][y] in SOLID

    def reset(self, spec: LevelSpec, start_mode: str = SMALL):
        if start_mode not in MODES:
            raise ValueError(f"unknown start mode {start_mode!r}")
        self.spec = spec
        self._length, self._height = spec.length, spec.height
        self._tiles = [list(col) for col in spec.tiles]
        goombas, items = [], {}
        for (cx, cy), kind in spec.spawns:
            if kind == GOOMBA:
                goombas.append(Goomba(cx, cy))
            else:
                items[(cx, cy)] = kind
        self.state = WorldState(x=START_X, y=1, mode=start_mode, goombas=goombas, items=items)
        self.events = []
        return self.observe()

    def _event(self, kind, reward):
        st = self.state
        st.score += reward
        if self.log_events:
            self.events.append((st.tick, kind, reward))
        return reward

    def step(self, action: int):
        """Advance one tick. Returns ``(observation, reward, done, cause)``."""
        st = self.state
        if st is None or st.done:
            raise StepAfterDone("step() called on a finished episode; call reset()")
        cfg = self.config
        rw = cfg.rewards
        dx, jump, run = ACTIONS[action]
        solid = self._solid
        tiles = self._tiles
        reward = 0.0
        st.tick += 1
        x0, y0 = st.x, st.y

        on_ground = solid(x0, y0 - 1)
        if jump and on_ground and not st.jump_held and st.rise == 0:
            st.rise = JUMP_TICKS
        st.jump_held = bool(jump)
        if dx:
            st.facing = dx

        if run and st.mode == FIRE and st.cooldown == 0:
            st.cooldown = cfg.fireball_cooldown
            reward += self._fireball()
        elif st.cooldown:
            st.cooldown -= 1

        # horizontal
        x = x0
        for _ in range(2 if run else 1):
            if not dx or solid(x + dx, y0):
                break
            x += dx
            if tiles[x][y0] == COIN:
                tiles[x][y0] = AIR
                reward += self._event("coin", rw.coin)
        # vertical
        y = y0
        if st.rise > 0:
            above = y + 1
            if above >= self._height or solid(x, above):
                st.rise = 0
            elif tiles[x][above] == HIDDEN:
                tiles[x][above] = BRICK
                st.rise = 0
                reward += self._event("hidden_block", rw.hidden_block)
            else:
                y = above
                st.rise -= 1
        elif not solid(x, y - 1):
            y -= 1
        st.x, st.y = x, y
        st.vx, st.vy = _sign(x - x0), _sign(y - y0)

        if y < 0:
            reward += self._event("die", rw.die)
            return self._finish(reward, "died")
        if 0 <= y < self._height and tiles[x][y] == COIN:
            tiles[x][y] = AIR
            reward += self._event("coin", rw.coin)

        reward += self._move_goombas(x0, y0)
        if st.done:
            return self._finish(reward, st.cause)

        kind = st.items.pop((x, y), None)
        if kind == MUSHROOM:
            if st.mode == SMALL:
                st.mode = LARGE
            reward += self._event("mushroom", rw.mushroom)
        elif kind == FIREFLOWER:
            st.mode = FIRE
            reward += self._event("fireflower", rw.fireflower)

        if st.invulnerable:
            st.invulnerable -= 1
        if x >= self.spec.finish_x:
            reward += self._event("finish_level", rw.finish_level)
            return self._finish(reward, "finished")
        if st.tick >= cfg.step_limit:
            return self._finish(reward, "timeout")
        return self.observe(), reward, False, "running"

    def _finish(self, reward, cause):
        st = self.state
        st.done, st.cause = True, cause
        if self.log_events:
            self.events.append((st.tick, cause, 0.0))
        return self.observe(), reward, True, cause

    def _fireball(self):
        st = self.state
        for dist in range(1, self.config.fireball_range + 1):
            cx = st.x + st.facing * dist
            if self._solid(cx, st.y):
                return 0.0
            for g in st.goombas:
                if g.alive and g.x == cx and abs(g.y - st.y) <= 1:
                    g.alive = False
                    return self._event("kill_enemy", self.config.rewards.kill_enemy)
        return 0.0

    def _move_goombas(self, ax0, ay0):
        st = self.state
        cfg = self.config
        solid = self._solid
        reward = 0.0
        falling = st.vy < 0
        walk = st.tick % cfg.goomba_period == 0
        for g in st.goombas:
            if not g.alive:
                continue
            if not g.awake:
                if abs(g.x - st.x) > cfg.activation:
                    continue
                g.awake = True
            gx0, gy0 = g.x, g.y
            if walk:
                if solid(g.x + g.dir, g.y):
                    g.dir = -g.dir
                else:
                    g.x += g.dir
            if not solid(g.x, g.y - 1):
                g.y -= 1
                if g.y < 0:
                    g.alive = False
                    continue
            same = g.x == st.x and g.y == st.y
            crossed = (g.y == st.y and gy0 == ay0
                       and _sign(g.x - st.x) != _sign(gx0 - ax0) and g.x != st.x)
            if not (same or crossed):
                continue
            if falling and same:
                g.alive = False
                st.rise = cfg.stomp_bounce
                reward += self._event("kill_enemy", cfg.rewards.kill_enemy)
            elif st.invulnerable == 0:
                if st.mode == SMALL:
                    reward += self._event("die", cfg.rewards.die)
                    st.done, st.cause = True, "died"
                    return reward
                st.mode = LARGE if st.mode == FIRE else SMALL
                st.invulnerable = cfg.invulnerable_ticks
                reward += self._event("hurt", cfg.rewards.hurt)
        return reward

    # observation ----------------------------------------------------------
    def observe(self):
        """The 9 integer features of the current world state, as a tuple."""
        st = self.state
        x, y = st.x, st.y
        solid = self._solid
        on_ground = 1 if solid(x, y - 1) else 0
        can_jump = 1 if (on_ground and not st.jump_held and st.rise == 0) else 0
        can_shoot = 1 if (st.mode == FIRE and st.cooldown == 0) else 0
        heading = _HEADING[(st.vx, st.vy)]

        near = mid = 0
        best = None
        for g in st.goombas:
            if not g.alive:
                continue
            ex, ey = g.x - x, g.y - y
            cheb = max(abs(ex), abs(ey))
            if cheb == 1:
                near |= 1 << _ENEMY_BIT[(ex, ey)]
            elif 2 <= cheb <= 3:
                mid |= 1 << _ENEMY_BIT[(_sign(ex), _sign(ey))]
            if cheb <= FIELD_HALF:
                # Euclidean distance, then row-major scan order (dy, dx)
                rank = (ex * ex + ey * ey, ey, ex)
                if best is None or rank < best:
                    best = rank
        if best is None:
            cex = cey = ABSENT
        else:
            cex, cey = best[2] + FIELD_HALF, best[1] + FIELD_HALF

        fx = x + st.facing
        obstacles = 0
        for j in range(4):
            if solid(fx, y + j):
                obstacles |= 1 << j
        return (can_jump, on_ground, can_shoot, heading, near, mid, obstacles, cex, cey)


def write_event_log(path, events):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["tick", "event", "reward"])
        for tick, kind, reward in events:
            writer.writerow([tick, kind, format(reward, ".15g")])


def with_rewards(config: EnvConfig, **overrides) -> EnvConfig:
    return replace(config, rewards=replace(config.rewards, **overrides))
