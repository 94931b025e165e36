"""Object-goal navigation over top-down semantic grids.

Navigability comes from floor cells, goals from class localization plus
a breadth-first search to the nearest navigable cell, and planning from
A* over 8-connectivity with the octile heuristic. Episode suites are
seeded so every run is reproducible bit for bit.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NavigationError
from .ingest import Vocabulary
from .semmap import SemanticGrid, localize_class

SQRT2 = math.sqrt(2.0)

# (dx, dy, cost); diagonals listed after the straight moves
_MOVES = (
    (1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
    (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2),
)


@dataclass
class NavConfig:
    success_radius_m: float = 1.0
    floor_name: str = "floor"


@dataclass
class Episode:
    scene_id: str
    start: tuple[int, int]          # (ix, iy)
    target_class: int
    seed: int


@dataclass
class EpisodeResult:
    stop: tuple[int, int]
    path_length: int                # cells, including start
    cost: float
    success: bool
    reason: str = ""                # empty on success


def navigable_mask(grid: SemanticGrid, vocab: Vocabulary, floor_name: str = "floor") -> np.ndarray:
    """Boolean navigability raster.

    A cell is navigable when it is floor, or undetected but 4-adjacent
    to at least two floor cells (fills small observation gaps).
    """
    floor_id = vocab.id_of(floor_name)
    is_floor = grid.classes == floor_id
    neighbors = np.zeros(grid.classes.shape, dtype=np.int32)
    neighbors[1:, :] += is_floor[:-1, :]
    neighbors[:-1, :] += is_floor[1:, :]
    neighbors[:, 1:] += is_floor[:, :-1]
    neighbors[:, :-1] += is_floor[:, 1:]
    nav = is_floor | ((grid.classes == 0) & (neighbors >= 2))
    if not nav.any():
        raise NavigationError("grid has no navigable cell")
    return nav


def nearest_navigable(nav: np.ndarray, target_cells: np.ndarray) -> tuple[int, int]:
    """First navigable cell found by multi-source BFS from the targets.

    The search expands 4-adjacency through any cell; ties at the same
    depth resolve to the raster-scan-first cell.
    """
    target_cells = np.asarray(target_cells)
    if target_cells.size == 0:
        raise ValueError("target cell set is empty")
    h, w = nav.shape
    visited = np.zeros((h, w), dtype=bool)
    frontier = sorted(int(c[1]) * w + int(c[0]) for c in target_cells)
    for f in frontier:
        visited.flat[f] = True
    while frontier:
        for f in frontier:
            if nav.flat[f]:
                return (f % w, f // w)
        nxt = []
        for f in frontier:
            x, y = f % w, f // w
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nx, ny = x + dx, y + dy
                if 0 <= nx < w and 0 <= ny < h and not visited[ny, nx]:
                    visited[ny, nx] = True
                    nxt.append(ny * w + nx)
        frontier = sorted(nxt)
    raise NavigationError("no navigable cell reachable from the target")


def octile(a: tuple[int, int], b: tuple[int, int]) -> float:
    dx = abs(a[0] - b[0])
    dy = abs(a[1] - b[1])
    return max(dx, dy) + (SQRT2 - 1.0) * min(dx, dy)


def astar(nav: np.ndarray, start: tuple[int, int], goal: tuple[int, int]):
    """Optimal 8-connected path from start to goal, or None if unreachable.

    Straight moves cost 1, diagonals sqrt(2); a diagonal is forbidden
    when both of its orthogonal neighbor cells are blocked (no corner
    cutting through a wall gap).
    """
    h, w = nav.shape
    sx, sy = start
    gx, gy = goal
    if not nav[sy, sx]:
        raise NavigationError(f"start cell {start} is not navigable")
    if not nav[gy, gx]:
        raise NavigationError(f"goal cell {goal} is not navigable")
    if start == goal:
        return [start], 0.0

    start_f = sy * w + sx
    goal_f = gy * w + gx
    g = {start_f: 0.0}
    parent = {start_f: -1}
    open_heap = [(octile(start, goal), start_f)]
    closed = np.zeros(h * w, dtype=bool)
    while open_heap:
        _, cur = heapq.heappop(open_heap)
        if closed[cur]:
            continue
        if cur == goal_f:
            path = []
            node = cur
            while node != -1:
                path.append((node % w, node // w))
                node = parent[node]
            path.reverse()
            return path, g[cur]
        closed[cur] = True
        cx, cy = cur % w, cur // w
        for dx, dy, cost in _MOVES:
            nx, ny = cx + dx, cy + dy
            if not (0 <= nx < w and 0 <= ny < h) or not nav[ny, nx]:
                continue
            if dx and dy and not (nav[cy, nx] or nav[ny, cx]):
                continue  # both orthogonal neighbors blocked
            nf = ny * w + nx
            cand = g[cur] + cost
            if cand < g.get(nf, math.inf):
                g[nf] = cand
                parent[nf] = cur
                heapq.heappush(open_heap, (cand + octile((nx, ny), goal), nf))
    return None


def run_episode(
    grid: SemanticGrid,
    nav: np.ndarray,
    episode: Episode,
    config: NavConfig | None = None,
) -> EpisodeResult:
    """Plan to the nearest navigable pose of the target and walk the path.

    Success means stopping within the success radius of the goal pose.
    """
    config = config or NavConfig()
    sx, sy = episode.start
    if not nav[sy, sx]:
        raise NavigationError(f"episode start {episode.start} is not navigable")
    targets = localize_class(grid, episode.target_class)
    if targets.shape[0] == 0:
        return EpisodeResult(episode.start, 1, 0.0, False, "class-not-in-map")
    try:
        goal = nearest_navigable(nav, targets)
    except NavigationError:
        return EpisodeResult(episode.start, 1, 0.0, False, "no-navigable-goal")
    planned = astar(nav, episode.start, goal)
    if planned is None:
        return EpisodeResult(episode.start, 1, 0.0, False, "unreachable")
    path, cost = planned
    stop = path[-1]
    dist_m = math.hypot(stop[0] - goal[0], stop[1] - goal[1]) * grid.resolution
    success = dist_m <= config.success_radius_m
    return EpisodeResult(stop, len(path), cost, success, "" if success else "stopped-short")


def detected_target_classes(grid: SemanticGrid, vocab: Vocabulary) -> np.ndarray:
    """Classes present in the grid that are valid navigation targets."""
    present = np.unique(grid.classes)
    skip = set(vocab.background) | {0}
    return np.asarray(sorted(int(c) for c in present if int(c) not in skip), dtype=np.int64)


def sample_episode(
    grid: SemanticGrid,
    nav: np.ndarray,
    vocab: Vocabulary,
    scene_id: str,
    seed: int,
    rng: np.random.Generator,
) -> Episode:
    """Draw a random navigable start and a random detected target class."""
    candidates = detected_target_classes(grid, vocab)
    if candidates.size == 0:
        raise NavigationError(f"scene {scene_id}: no target classes detected")
    target = int(candidates[rng.integers(candidates.size)])
    ys, xs = np.nonzero(nav)
    pick = int(rng.integers(xs.size))
    return Episode(scene_id, (int(xs[pick]), int(ys[pick])), target, seed)


@dataclass
class SuiteReport:
    seeds: list[int]
    per_seed_sr: list[float]             # percent
    episodes: list[tuple[Episode, EpisodeResult]] = field(default_factory=list)

    def summary(self) -> dict:
        mean = float(np.mean(self.per_seed_sr))
        std = float(np.std(self.per_seed_sr, ddof=1)) if len(self.per_seed_sr) > 1 else 0.0
        out = {f"R{i + 1}": round(sr, 6) for i, sr in enumerate(self.per_seed_sr)}
        out["Avg-SR"] = {"mean": round(mean, 6), "std": round(std, 6)}
        out["seeds"] = list(self.seeds)
        return out


def run_suite(
    scenes: dict[str, tuple[SemanticGrid, np.ndarray]],
    vocab: Vocabulary,
    seeds: list[int],
    episodes_per_scene: int = 1,
    config: NavConfig | None = None,
    target_overrides: dict[str, int] | None = None,
) -> SuiteReport:
    """Run the seeded episode suite and report per-seed success rates.

    Episodes are sampled from a generator keyed on (seed, scene index)
    so reruns with the same seeds are bit-identical. ``target_overrides``
    pins the target class for specific scenes (absent classes then count
    as failures).
    """
    if not seeds:
        raise ValueError("at least one seed is required")
    config = config or NavConfig()
    scene_ids = sorted(scenes)
    report = SuiteReport(seeds=list(seeds), per_seed_sr=[])
    for seed in seeds:
        successes = 0
        total = 0
        for scene_index, scene_id in enumerate(scene_ids):
            grid, nav = scenes[scene_id]
            rng = np.random.default_rng([seed, scene_index])
            for _ in range(episodes_per_scene):
                episode = sample_episode(grid, nav, vocab, scene_id, seed, rng)
                if target_overrides and scene_id in target_overrides:
                    episode = Episode(
                        scene_id, episode.start, target_overrides[scene_id], seed
                    )
                result = run_episode(grid, nav, episode, config)
                report.episodes.append((episode, result))
                successes += int(result.success)
                total += 1
        report.per_seed_sr.append(100.0 * successes / total)
    return report
