"""World geometry: rectangular maps with axis-aligned obstacles and point beacons.

An :class:`Environment` is immutable.  Obstacles are closed rectangles
``(x_min, y_min, x_max, y_max)``; touching an obstacle boundary counts as a
collision.  Symmetric worlds are built by tiling a template
(:class:`SymmetrySpec`); the three presets ``world10``, ``World18`` and
``WORLD27`` follow that recipe, and :func:`generate_labyrinth` builds a
corridor map with irregular beacons.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .state import TWO_PI, Pose

Rect = tuple[float, float, float, float]
Point = tuple[float, float]

#: Rejection-sampling budget for :func:`sample_free_pose`.
MAX_REJECTIONS = 10_000


class MapError(ValueError):
    """Raised for malformed or invalid map data."""


@dataclass(frozen=True)
class Environment:
    """Rectangular world ``[0, width] x [0, height]``.

    ``tiles`` is set only for worlds produced by :func:`generate_symmetric_world`
    (and their non-symmetric variants) and records ``(tiles_x, tiles_y)``.
    """

    width: float
    height: float
    obstacles: tuple[Rect, ...] = ()
    beacons: tuple[Point, ...] = ()
    name: str = "unnamed"
    tiles: tuple[int, int] | None = field(default=None, compare=True)

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(tuple(map(float, o)) for o in self.obstacles))
        object.__setattr__(self, "beacons", tuple(tuple(map(float, b)) for b in self.beacons))
        object.__setattr__(self, "width", float(self.width))
        object.__setattr__(self, "height", float(self.height))
        if self.tiles is not None:
            object.__setattr__(self, "tiles", (int(self.tiles[0]), int(self.tiles[1])))
        self._validate()

    def _validate(self) -> None:
        w, h = self.width, self.height
        if not (w > 0 and h > 0):
            raise MapError(f"map {self.name!r}: width and height must be positive, got {w}x{h}")
        for i, o in enumerate(self.obstacles):
            if len(o) != 4:
                raise MapError(f"obstacle {i}: expected 4 numbers, got {len(o)}")
            x0, y0, x1, y1 = o
            if not (x1 > x0 and y1 > y0):
                raise MapError(f"obstacle {i} {o}: non-positive area")
            if x0 < 0 or y0 < 0 or x1 > w or y1 > h:
                raise MapError(f"obstacle {i} {o}: outside world [0,{w}]x[0,{h}]")
        for i, b in enumerate(self.beacons):
            if len(b) != 2:
                raise MapError(f"beacon {i}: expected 2 numbers, got {len(b)}")
            if not (0 <= b[0] <= w and 0 <= b[1] <= h):
                raise MapError(f"beacon {i} {b}: outside world [0,{w}]x[0,{h}]")
        if not self.beacons:
            raise MapError(f"map {self.name!r}: at least one beacon is required")
        if self.tiles is not None and min(self.tiles) < 1:
            raise MapError(f"map {self.name!r}: invalid tile counts {self.tiles}")

    @cached_property
    def beacon_array(self) -> np.ndarray:
        a = np.array(self.beacons, dtype=float).reshape(-1, 2)
        a.flags.writeable = False
        return a

    @cached_property
    def obstacle_array(self) -> np.ndarray:
        a = np.array(self.obstacles, dtype=float).reshape(-1, 4)
        a.flags.writeable = False
        return a

    @property
    def n_beacons(self) -> int:
        return len(self.beacons)

    @property
    def tile_size(self) -> tuple[float, float]:
        if self.tiles is None:
            raise MapError(f"map {self.name!r} is not a tiled world")
        return self.width / self.tiles[0], self.height / self.tiles[1]

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "width": self.width,
            "height": self.height,
            "obstacles": [list(o) for o in self.obstacles],
            "beacons": [list(b) for b in self.beacons],
        }
        if self.tiles is not None:
            d["tiles"] = list(self.tiles)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Environment":
        missing = {"width", "height", "beacons"} - set(d)
        if missing:
            raise MapError(f"map is missing keys: {sorted(missing)}")
        try:
            return cls(
                width=d["width"],
                height=d["height"],
                obstacles=tuple(tuple(o) for o in d.get("obstacles", [])),
                beacons=tuple(tuple(b) for b in d["beacons"]),
                name=str(d.get("name", "unnamed")),
                tiles=tuple(d["tiles"]) if d.get("tiles") is not None else None,
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, MapError):
                raise
            raise MapError(f"malformed map entry: {exc}") from exc


@dataclass(frozen=True)
class SymmetrySpec:
    """Tiling recipe: a tile template replicated ``tiles_x`` by ``tiles_y`` times.

    Obstacles and beacons of the template are given relative to the tile origin.
    """

    tiles_x: int
    tiles_y: int
    tile_w: float
    tile_h: float
    tile_obstacles: tuple[Rect, ...] = ()
    tile_beacons: tuple[Point, ...] = ()

    def __post_init__(self):
        if self.tiles_x < 1 or self.tiles_y < 1:
            raise MapError(f"tile counts must be >= 1, got {self.tiles_x}x{self.tiles_y}")
        if not (self.tile_w > 0 and self.tile_h > 0):
            raise MapError("tile size must be positive")
        for o in self.tile_obstacles:
            if not (0 <= o[0] < o[2] <= self.tile_w and 0 <= o[1] < o[3] <= self.tile_h):
                raise MapError(f"tile obstacle {o} not inside the tile")
        for b in self.tile_beacons:
            if not (0 <= b[0] <= self.tile_w and 0 <= b[1] <= self.tile_h):
                raise MapError(f"tile beacon {b} not inside the tile")

    @property
    def width(self) -> float:
        return self.tiles_x * self.tile_w

    @property
    def height(self) -> float:
        return self.tiles_y * self.tile_h

    def translations(self) -> np.ndarray:
        """All tile offsets ``(i * tile_w, j * tile_h)``, row-major over tiles."""
        ii, jj = np.meshgrid(np.arange(self.tiles_x), np.arange(self.tiles_y), indexing="xy")
        return np.column_stack([ii.ravel() * self.tile_w, jj.ravel() * self.tile_h])


def _preset_tile(size: float) -> tuple[tuple[Rect, ...], tuple[Point, ...]]:
    # Four beacons near the tile corners plus one near the centre.  Positions
    # are deliberately irregular: the tile pattern has no mirror or rotation
    # symmetry, so tile translations are the world's only symmetries.
    frac = ((0.2, 0.2), (0.8, 0.25), (0.3, 0.8), (0.75, 0.7), (0.45, 0.5))
    beacons = tuple((a * size, b * size) for a, b in frac)
    obstacle = ((0.6 * size, 0.3 * size, 0.7 * size, 0.6 * size),)
    return obstacle, beacons


def preset_spec(name: str) -> SymmetrySpec:
    """Return the :class:`SymmetrySpec` for ``world10``, ``World18`` or ``WORLD27``."""
    table = {"world10": (2, 5.0), "World18": (3, 6.0), "WORLD27": (3, 9.0)}
    if name not in table:
        raise MapError(f"unknown symmetric preset {name!r}; choose from {sorted(table)}")
    n, size = table[name]
    obstacles, beacons = _preset_tile(size)
    return SymmetrySpec(n, n, size, size, obstacles, beacons)


PRESETS = ("world10", "World18", "WORLD27", "labyrinth")


def make_preset(name: str, nonsymmetric: bool = False, seed: int = 0) -> Environment:
    """Build a named preset map.

    The non-symmetric variants drop the contents of the last tile.
    """
    if name == "labyrinth":
        if nonsymmetric:
            raise MapError("the labyrinth preset has no non-symmetric variant")
        return generate_labyrinth(seed)
    spec = preset_spec(name)
    env = generate_symmetric_world(spec, seed, name=name)
    if nonsymmetric:
        env = make_nonsymmetric(env, spec.tiles_x * spec.tiles_y - 1)
    return env


def generate_symmetric_world(spec: SymmetrySpec, seed: int = 0, name: str | None = None) -> Environment:
    """Replicate the tile template over a ``tiles_x`` x ``tiles_y`` grid.

    The layout is fully determined by ``spec``; ``seed`` is accepted for a
    uniform generator signature and does not change the result.
    """
    obstacles, beacons = [], []
    for dx, dy in spec.translations():
        obstacles.extend((o[0] + dx, o[1] + dy, o[2] + dx, o[3] + dy) for o in spec.tile_obstacles)
        beacons.extend((b[0] + dx, b[1] + dy) for b in spec.tile_beacons)
    return Environment(
        width=spec.width,
        height=spec.height,
        obstacles=tuple(obstacles),
        beacons=tuple(beacons),
        name=name or f"tiled{spec.tiles_x}x{spec.tiles_y}",
        tiles=(spec.tiles_x, spec.tiles_y),
    )


def tile_of(env: Environment, points) -> np.ndarray:
    """Row-major tile index of each point (points on a shared edge go to the lower tile)."""
    tw, th = env.tile_size
    p = np.atleast_2d(np.asarray(points, dtype=float))
    i = np.clip(np.floor(p[:, 0] / tw).astype(int), 0, env.tiles[0] - 1)
    j = np.clip(np.floor(p[:, 1] / th).astype(int), 0, env.tiles[1] - 1)
    return j * env.tiles[0] + i


def make_nonsymmetric(env: Environment, tile_index: int) -> Environment:
    """Remove every obstacle and beacon belonging to tile ``tile_index``.

    Ownership is decided by the obstacle centre / beacon position.
    """
    if env.tiles is None:
        raise MapError("make_nonsymmetric needs a tiled world")
    n_tiles = env.tiles[0] * env.tiles[1]
    if not 0 <= tile_index < n_tiles:
        raise MapError(f"tile_index {tile_index} out of range [0, {n_tiles})")
    obs = env.obstacle_array
    keep_obs = ()
    if len(obs):
        centres = np.column_stack([(obs[:, 0] + obs[:, 2]) / 2, (obs[:, 1] + obs[:, 3]) / 2])
        mask = tile_of(env, centres) != tile_index
        keep_obs = tuple(o for o, m in zip(env.obstacles, mask) if m)
    mask_b = tile_of(env, env.beacon_array) != tile_index
    keep_b = tuple(b for b, m in zip(env.beacons, mask_b) if m)
    return Environment(
        width=env.width,
        height=env.height,
        obstacles=keep_obs,
        beacons=keep_b,
        name=f"n-{env.name}",
        tiles=env.tiles,
    )


def translation_self_maps(points, translation, width: float, height: float, atol: float = 1e-9) -> bool:
    """True if shifting ``points`` by ``translation`` lands (within bounds) on ``points`` again.

    Translated points that leave ``[0,width]x[0,height]`` are ignored.
    """
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    q = p + np.asarray(translation, dtype=float)
    inside = (q[:, 0] >= -atol) & (q[:, 0] <= width + atol) & (q[:, 1] >= -atol) & (q[:, 1] <= height + atol)
    q = q[inside]
    if len(q) == 0:
        return True
    d = np.abs(q[:, None, :] - p[None, :, :]).max(axis=2)
    return bool(np.all(d.min(axis=1) <= atol))


def generate_labyrinth(seed: int = 0, size: float = 10.0, cells: int = 5, n_beacons: int = 16) -> Environment:
    """Corridor map: a braided random maze with a few pillars and irregular beacons.

    The maze lives on a ``cells`` x ``cells`` grid; a random spanning tree
    opens passages, a handful of extra walls are knocked out to create loops.
    Beacons are scattered in free space with a minimum spacing.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1AB]))
    c = size / cells
    t = 0.2 * c  # wall thickness

    # walls between horizontally/vertically adjacent cells
    walls = {((i, j), (i + 1, j)) for i in range(cells - 1) for j in range(cells)}
    walls |= {((i, j), (i, j + 1)) for i in range(cells) for j in range(cells - 1)}
    seen = {(0, 0)}
    stack = [(0, 0)]
    while stack:
        i, j = stack[-1]
        nbrs = [(i + di, j + dj) for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1))
                if 0 <= i + di < cells and 0 <= j + dj < cells and (i + di, j + dj) not in seen]
        if not nbrs:
            stack.pop()
            continue
        nxt = nbrs[rng.integers(len(nbrs))]
        walls.discard(tuple(sorted([(i, j), nxt])))
        seen.add(nxt)
        stack.append(nxt)
    walls = sorted(walls)
    extra = rng.choice(len(walls), size=min(3, len(walls)), replace=False)
    walls = [w for k, w in enumerate(walls) if k not in set(extra.tolist())]

    obstacles = []
    for (i0, j0), (i1, j1) in walls:
        if i1 != i0:  # vertical wall on x = i1 * c
            x = i1 * c
            rect = (x - t / 2, j0 * c, x + t / 2, (j0 + 1) * c)
        else:  # horizontal wall on y = j1 * c
            y = j1 * c
            rect = (i0 * c, y - t / 2, (i0 + 1) * c, y + t / 2)
        obstacles.append(tuple(float(np.clip(v, 0.0, size)) for v in rect))
    pillar_cells = rng.choice(cells * cells, size=4, replace=False)
    for k in pillar_cells:
        cx, cy = (k % cells + 0.5) * c, (k // cells + 0.5) * c
        obstacles.append((cx - 0.15 * c, cy - 0.15 * c, cx + 0.15 * c, cy + 0.15 * c))

    probe = Environment(size, size, tuple(obstacles), ((0.0, 0.0),), name="labyrinth")
    beacons: list[Point] = []
    while len(beacons) < n_beacons:
        p = rng.uniform(0.0, size, size=2)
        if collides(probe, p) or _clearance(probe, p) < 0.1 * c:
            continue
        if beacons and np.min(np.linalg.norm(np.array(beacons) - p, axis=1)) < 0.6 * c:
            continue
        beacons.append((float(p[0]), float(p[1])))
    return Environment(size, size, tuple(obstacles), tuple(beacons), name="labyrinth")


def _clearance(env: Environment, p) -> float:
    obs = env.obstacle_array
    if not len(obs):
        return np.inf
    dx = np.maximum(np.maximum(obs[:, 0] - p[0], p[0] - obs[:, 2]), 0.0)
    dy = np.maximum(np.maximum(obs[:, 1] - p[1], p[1] - obs[:, 3]), 0.0)
    return float(np.min(np.hypot(dx, dy)))


def collides_many(env: Environment, points) -> np.ndarray:
    """Vectorised :func:`collides` over an ``(n, 2)`` array of points."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = p[:, 0], p[:, 1]
    hit = (x < 0) | (x > env.width) | (y < 0) | (y > env.height)
    obs = env.obstacle_array
    if len(obs):
        inside = (
            (x[:, None] >= obs[None, :, 0]) & (x[:, None] <= obs[None, :, 2])
            & (y[:, None] >= obs[None, :, 1]) & (y[:, None] <= obs[None, :, 3])
        )
        hit |= inside.any(axis=1)
    return hit


def collides(env: Environment, p) -> bool:
    """Point is outside the world or inside/on the boundary of an obstacle."""
    return bool(collides_many(env, [p])[0])


def segment_collides(env: Environment, a, b) -> bool:
    """Closed segment ``ab`` leaves the world or touches any obstacle.

    Uses Liang-Barsky clipping of the segment against each closed rectangle.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if collides_many(env, [a, b]).any():
        return True
    obs = env.obstacle_array
    if not len(obs):
        return False
    d = b - a
    t0 = np.zeros(len(obs))
    t1 = np.ones(len(obs))
    ok = np.ones(len(obs), dtype=bool)
    for axis in (0, 1):
        lo, hi = obs[:, axis], obs[:, axis + 2]
        if d[axis] == 0.0:
            ok &= (a[axis] >= lo) & (a[axis] <= hi)
            continue
        with np.errstate(over="ignore"):  # subnormal d gives +-inf, which clips correctly
            ta = (lo - a[axis]) / d[axis]
            tb = (hi - a[axis]) / d[axis]
        t0 = np.maximum(t0, np.minimum(ta, tb))
        t1 = np.minimum(t1, np.maximum(ta, tb))
    return bool(np.any(ok & (t0 <= t1)))


def k_nearest_beacons(env: Environment, p, k: int) -> list[tuple[int, float]]:
    """The ``k`` nearest beacons to ``p`` as ``(index, distance)``, nearest first.

    Ties are broken by the lower beacon index.
    """
    idx, dist = k_nearest_many(env, np.asarray(p, dtype=float)[None, :2], k)
    return [(int(i), float(d)) for i, d in zip(idx[0], dist[0])]


def k_nearest_many(env: Environment, points: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Batched nearest-beacon query: ``(indices, distances)`` both of shape ``(n, k)``."""
    if not 1 <= k <= env.n_beacons:
        raise ValueError(f"k={k} must be in [1, {env.n_beacons}] for map {env.name!r}")
    diff = points[:, None, :2] - env.beacon_array[None, :, :]
    dist = np.sqrt(diff[..., 0] ** 2 + diff[..., 1] ** 2)
    order = np.argsort(dist, axis=1, kind="stable")[:, :k]
    return order, np.take_along_axis(dist, order, axis=1)


def free_area_fraction(env: Environment, n: int = 200_000, rng=None) -> float:
    """Monte-Carlo estimate of the obstacle-free fraction of the world."""
    rng = np.random.default_rng(0) if rng is None else rng
    pts = rng.uniform((0, 0), (env.width, env.height), size=(n, 2))
    return float(1.0 - collides_many(env, pts).mean())


def sample_free_positions(env: Environment, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` positions uniform over free space, by batched rejection sampling."""
    out = np.empty((0, 2))
    drawn = 0
    while len(out) < n:
        need = n - len(out)
        batch = max(2 * need, 16)
        pts = rng.uniform((0.0, 0.0), (env.width, env.height), size=(batch, 2))
        out = np.vstack([out, pts[~collides_many(env, pts)]])
        drawn += batch
        if drawn > MAX_REJECTIONS * max(n, 1) and len(out) < n:
            raise RuntimeError(f"map {env.name!r}: could not find free space after {drawn} draws")
    return out[:n]


def sample_free_pose(env: Environment, rng: np.random.Generator) -> Pose:
    """Uniform free position and uniform heading in ``[0, 2*pi)``."""
    for _ in range(MAX_REJECTIONS):
        x, y = rng.uniform((0.0, 0.0), (env.width, env.height))
        if not collides(env, (x, y)):
            return Pose(float(x), float(y), float(rng.uniform(0.0, TWO_PI)))
    raise RuntimeError(f"map {env.name!r}: no free pose after {MAX_REJECTIONS} draws")


def free_space_centroid(env: Environment, resolution: int = 200) -> np.ndarray:
    """Centroid of the free region, from a midpoint grid."""
    xs = (np.arange(resolution) + 0.5) * env.width / resolution
    ys = (np.arange(resolution) + 0.5) * env.height / resolution
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    free = pts[~collides_many(env, pts)]
    return free.mean(axis=0)


def save_map(env: Environment, path) -> None:
    Path(path).write_text(json.dumps(env.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_map(path) -> Environment:
    """Read a map file written by :func:`save_map` (or by hand)."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MapError(f"{path}: not a valid map file ({exc})") from exc
    if not isinstance(data, dict):
        raise MapError(f"{path}: top level must be an object")
    try:
        return Environment.from_dict(data)
    except MapError as exc:
        raise MapError(f"{path}: {exc}") from exc
