"""Seeded tile-grid levels for the platformer.

Coordinates are integer cells: ``x`` grows to the right, ``y`` grows upward
and row 0 is the ground layer. A column with no tile at ``y = 0`` is a pit.
"""
from __future__ import annotations

import json
import math
import random
from collections import deque
from dataclasses import dataclass, field

AIR, GROUND, BRICK, HIDDEN, COIN = 0, 1, 2, 3, 4
TILE_NAMES = {AIR: "air", GROUND: "ground", BRICK: "brick", HIDDEN: "hidden_block", COIN: "coin"}
SOLID = (GROUND, BRICK)

GOOMBA, MUSHROOM, FIREFLOWER = "goomba", "mushroom", "fireflower"
ENTITY_KINDS = (GOOMBA, MUSHROOM, FIREFLOWER)

SEED_MAX = 10**6
START_X = 2
JUMP_TICKS = 4
MAX_GEN_ATTEMPTS = 50


class LevelError(ValueError):
    pass


@dataclass(frozen=True)
class LevelConfig:
    """Generator knobs. ``enemy_band`` is goombas per 100 cells (inclusive)."""

    length: int = 96
    height: int = 10
    enemy_band: tuple = (6, 9)
    coin_rate: float = 0.35
    ground_coin_rate: float = 1.0
    wall_rate: float = 0.45
    pit_rate: float = 0.0
    max_wall: int = 3
    item_rate: float = 0.5
    safe_start: int = 8


@dataclass
class LevelSpec:
    seed: int
    difficulty: int
    length: int
    height: int
    # tiles[x][y]
    tiles: list
    spawns: list = field(default_factory=list)

    @property
    def finish_x(self) -> int:
        return self.length - 3

    def tile(self, x, y) -> int:
        if x < 0 or x >= self.length:
            return GROUND
        if y < 0 or y >= self.height:
            return AIR
        return self.tiles[x][y]

    def enemy_count(self) -> int:
        return sum(1 for _, kind in self.spawns if kind == GOOMBA)

    def to_dict(self):
        return {
            "seed": self.seed,
            "difficulty": self.difficulty,
            "length": self.length,
            "height": self.height,
            "tiles": ["".join(str(t) for t in col) for col in self.tiles],
            "spawns": [[list(cell), kind] for cell, kind in self.spawns],
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            seed=int(doc["seed"]),
            difficulty=int(doc["difficulty"]),
            length=int(doc["length"]),
            height=int(doc["height"]),
            tiles=[[int(c) for c in col] for col in doc["tiles"]],
            spawns=[(tuple(cell), kind) for cell, kind in doc["spawns"]],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def render(self) -> str:
        """ASCII picture, top row first. Handy when debugging generators."""
        glyph = {AIR: ".", GROUND: "#", BRICK: "B", HIDDEN: "?", COIN: "o"}
        ents = {tuple(cell): kind[0].upper() for cell, kind in self.spawns}
        rows = []
        for y in range(self.height - 1, -1, -1):
            rows.append("".join(ents.get((x, y), glyph[self.tiles[x][y]])
                                for x in range(self.length)))
        return "\n".join(rows)


def flat_level(length=32, height=10, seed=0):
    """Flat ground, nothing else. Used by tests to stage exact situations."""
    tiles = [[GROUND] + [AIR] * (height - 1) for _ in range(length)]
    return LevelSpec(seed=seed, difficulty=0, length=length, height=height,
                     tiles=tiles, spawns=[])


def _solid(tiles, length, height, x, y):
    if x < 0 or x >= length:
        return True
    if y < 0 or y >= height:
        return False
    return tiles[x][y] in SOLID


def _runner_reaches_finish(spec: LevelSpec) -> bool:
    """Walk right, jumping whenever a wall blocks the way.

    Uses the same transitions as the search below, so success is a witness
    path; failure proves nothing.
    """
    tiles, length, height = spec.tiles, spec.length, spec.height

    def solid(x, y):
        return _solid(tiles, length, height, x, y)

    x, y, rise = START_X, 1, 0
    for _ in range(8 * length):
        if x >= spec.finish_x:
            return True
        if rise == 0 and solid(x, y - 1) and solid(x + 1, y):
            rise = JUMP_TICKS
        if not solid(x + 1, y):
            x += 1
        if rise > 0:
            if solid(x, y + 1) or y + 1 >= height:
                rise = 0
            else:
                y, rise = y + 1, rise - 1
        elif not solid(x, y - 1):
            y -= 1
        if y < 0:
            return False
    return False


def is_traversable(spec: LevelSpec) -> bool:
    """Breadth-first search over the agent's static physics (no enemies).

    The search state is (x, y, remaining rise ticks); moves are the same
    one-cell steps the environment performs, so a True result means some
    action sequence reaches the finish column.
    """
    if _runner_reaches_finish(spec):
        return True
    tiles, length, height = spec.tiles, spec.length, spec.height

    def solid(x, y):
        return _solid(tiles, length, height, x, y)

    start = (START_X, 1, 0)
    seen = {start}
    queue = deque([start])
    while queue:
        x, y, rise = queue.popleft()
        if x >= spec.finish_x:
            return True
        on_ground = solid(x, y - 1)
        rises = [rise]
        if on_ground and rise == 0:
            rises.append(JUMP_TICKS)
        for r in rises:
            for dx in (-1, 0, 1):
                nx = x + dx
                if solid(nx, y):
                    nx = x
                ny, nr = y, r
                if nr > 0:
                    if solid(nx, y + 1) or y + 1 >= height:
                        nr = 0
                    else:
                        ny, nr = y + 1, nr - 1
                elif not solid(nx, y - 1):
                    ny = y - 1
                if ny < 0:
                    continue
                state = (nx, ny, nr)
                if state not in seen:
                    seen.add(state)
                    queue.append(state)
    return False


def _build(rng: random.Random, seed, difficulty, cfg: LevelConfig) -> LevelSpec:
    length, height = cfg.length, cfg.height
    tiles = [[GROUND] + [AIR] * (height - 1) for _ in range(length)]
    # left boundary wall
    tiles[0] = [GROUND] * height
    flat = [False] * length
    x = cfg.safe_start
    end = length - 6
    while x < end:
        roll = rng.random()
        if roll < cfg.pit_rate:
            width = rng.randint(1, 2)
            for i in range(width):
                if x + i < end:
                    tiles[x + i][0] = AIR
            x += width + 2
        elif roll < cfg.pit_rate + cfg.wall_rate:
            h = rng.randint(1, cfg.max_wall)
            width = rng.randint(1, 2)
            for i in range(width):
                if x + i < end:
                    for y in range(1, h + 1):
                        tiles[x + i][y] = GROUND
            x += width + 2
        elif roll < cfg.pit_rate + cfg.wall_rate + 0.15:
            # brick ledge with a hidden block underneath one end
            width = rng.randint(2, 4)
            for i in range(width):
                if x + i < end:
                    tiles[x + i][5] = BRICK
                    flat[x + i] = True
                    if rng.random() < cfg.coin_rate:
                        tiles[x + i][6] = COIN
            hx = x + width
            if hx < end:
                tiles[hx][4] = HIDDEN
                flat[hx] = True
            x += width + 2
        else:
            width = rng.randint(3, 6)
            for i in range(width):
                if x + i < end:
                    flat[x + i] = True
                    if rng.random() < cfg.ground_coin_rate:
                        tiles[x + i][1] = COIN
            x += width

    spawns = []
    lo, hi = cfg.enemy_band
    # counts whose density per 100 cells stays inside the band
    n_enemies = rng.randint(math.ceil(lo * length / 100), max(math.ceil(lo * length / 100),
                                                              math.floor(hi * length / 100)))
    # free ground cells past the safe zone
    slots = [cx for cx in range(cfg.safe_start + 2, end)
             if flat[cx] and tiles[cx][0] in SOLID and tiles[cx][1] in (AIR, COIN)]
    rng.shuffle(slots)
    used = set()
    for cx in slots:
        if len(spawns) >= n_enemies:
            break
        if any(abs(cx - u) < 2 for u in used):
            continue
        used.add(cx)
        spawns.append(((cx, 1), GOOMBA))
    for kind in (MUSHROOM, FIREFLOWER):
        if rng.random() < cfg.item_rate:
            free = [cx for cx in slots if cx not in used]
            if free:
                cx = rng.choice(free)
                used.add(cx)
                spawns.append(((cx, 1), kind))
    spawns.sort(key=lambda s: (s[0][0], s[0][1], s[1]))
    return LevelSpec(seed=seed, difficulty=difficulty, length=length, height=height,
                     tiles=tiles, spawns=spawns)


def generate_level(seed: int, difficulty: int = 0, cfg: LevelConfig | None = None) -> LevelSpec:
    """Deterministic level for ``(seed, difficulty)``.

    Candidate layouts are drawn from one RNG stream until one passes the
    traversability search; exhausting the attempt cap raises LevelError.
    """
    if not 0 <= seed <= SEED_MAX:
        raise LevelError(f"seed must be in [0, {SEED_MAX}], got {seed}")
    if difficulty < 0:
        raise LevelError(f"difficulty must be non-negative, got {difficulty}")
    cfg = cfg or LevelConfig()
    rng = random.Random(f"level:{seed}:{difficulty}")
    for _ in range(MAX_GEN_ATTEMPTS):
        spec = _build(rng, seed, difficulty, cfg)
        if is_traversable(spec):
            return spec
    raise LevelError(f"no traversable level for seed={seed} after {MAX_GEN_ATTEMPTS} attempts")
