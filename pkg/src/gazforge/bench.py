"""Spatial-join timing harness.

Each cell joins uniform random points against a regular rows x cols grid
of rectangles. Timed rows:

* ``oracle``: the independent single-loop oracle.
* ``kernel``: the job's join kernel in one in-process pass, no engine.
* ``mapreduce``: the engine at each requested worker count, pool startup
  included.

``speedup`` is the baseline row's wall time over the row's wall time.
The baseline is the oracle by default; ``baseline="kernel"`` isolates the
parallelism gain from the kernel's algorithmic advantage. Every timed
result is checked against the oracle's counts.
"""

from __future__ import annotations

import math
import resource
import statistics
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .ingest import PolygonLayer
from .jobs import PointBatch, PreparedLayer, _join_block, spatial_join_job
from .mapreduce import DEFAULT_BLOCK_SIZE, KeyedCounts
from .model import Polygon
from .oracle import sequential_spatial_join

BENCH_BOX = (-125.0, 24.0, -66.0, 50.0)
CSV_HEADER = "scenario,n_points,n_polygons,workers,wall_ms,speedup"


@dataclass(frozen=True)
class BenchRow:
    scenario: str
    n_points: int
    n_polygons: int
    workers: int
    wall_ms: float
    speedup: float

    def csv(self) -> str:
        return f"{self.scenario},{self.n_points},{self.n_polygons},{self.workers},{self.wall_ms:.3f},{self.speedup:.4f}"


@dataclass
class BenchReport:
    rows: list[BenchRow]
    peak_rss_kb: dict[tuple[int, int], int]
    baseline: str = "oracle"

    def to_csv(self) -> str:
        return CSV_HEADER + "\n" + "".join(r.csv() + "\n" for r in self.rows)

    def speedup(self, n_points: int, n_polygons: int, workers: int) -> float:
        for r in self.rows:
            if (r.scenario, r.n_points, r.n_polygons, r.workers) == ("mapreduce", n_points, n_polygons, workers):
                return r.speedup
        raise KeyError((n_points, n_polygons, workers))

    def _ms(self, scenario: str, n_points: int, n_polygons: int) -> float:
        for r in self.rows:
            if (r.scenario, r.n_points, r.n_polygons) == (scenario, n_points, n_polygons):
                return r.wall_ms
        raise KeyError((scenario, n_points, n_polygons))

    def summary(self) -> str:
        mr = [r for r in self.rows if r.scenario == "mapreduce"]
        if not mr:
            return "no mapreduce rows"
        n_pts = max(r.n_points for r in mr)
        n_pol = max(r.n_polygons for r in mr if r.n_points == n_pts)
        cell = [r for r in mr if (r.n_points, r.n_polygons) == (n_pts, n_pol)]
        best = max(cell, key=lambda r: r.speedup)
        ora, ker = self._ms("oracle", n_pts, n_pol), self._ms("kernel", n_pts, n_pol)
        lines = [
            f"largest cell: {n_pts} points x {n_pol} polygons (oracle {ora:.1f} ms, kernel {ker:.1f} ms)",
            *(f"  workers={r.workers}: {r.wall_ms:.1f} ms, speedup {r.speedup:.2f}x vs {self.baseline}"
              f" ({ker / r.wall_ms:.2f}x vs kernel)" for r in cell),
            f"best speedup at largest cell: {best.speedup:.2f}x vs {self.baseline} with {best.workers} workers",
        ]
        for (p, q), kb in sorted(self.peak_rss_kb.items()):
            lines.append(f"  peak RSS after {p} x {q}: {kb / 1024:.1f} MiB")
        return "\n".join(lines)


def grid_shape(n: int) -> tuple[int, int]:
    """Factor pair (rows, cols) of ``n`` closest to square."""
    if n < 1:
        raise ValueError("polygon count must be >= 1")
    rows = int(math.isqrt(n))
    while n % rows:
        rows -= 1
    return rows, n // rows


def grid_layer(n_polygons: int, box=BENCH_BOX) -> PolygonLayer:
    rows, cols = grid_shape(n_polygons)
    x0, y0, x1, y1 = box
    xs = np.linspace(x0, x1, cols + 1).tolist()
    ys = np.linspace(y0, y1, rows + 1).tolist()
    items = []
    for i in range(rows):
        for j in range(cols):
            ring = [(xs[j], ys[i]), (xs[j + 1], ys[i]), (xs[j + 1], ys[i + 1]), (xs[j], ys[i + 1]), (xs[j], ys[i])]
            items.append((f"r{i:04d}c{j:04d}", Polygon(ring)))
    return PolygonLayer.from_polygons(f"grid{n_polygons}", items)


def uniform_points(n: int, seed: int, box=BENCH_BOX) -> PointBatch:
    rng = np.random.Generator(np.random.PCG64(seed))
    x0, y0, x1, y1 = box
    return PointBatch(rng.uniform(x0, x1, n), rng.uniform(y0, y1, n))


def sequential_join(batch: PointBatch, layer: PolygonLayer) -> KeyedCounts:
    """The job's kernel over all points at once, without the engine."""
    return KeyedCounts(dict(sorted(_join_block(batch, PreparedLayer(layer), False))))


def _median_ms(fn: Callable[[], KeyedCounts], repeats: int) -> tuple[float, KeyedCounts]:
    times = []
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        times.append((time.perf_counter() - t0) * 1000.0)
    return statistics.median(times), result


def _peak_rss_kb() -> int:
    own = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    kids = resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss
    return max(own, kids)


class BenchMismatch(RuntimeError):
    pass


BASELINES = ("oracle", "kernel")


def run_bench(
    points_sizes: Sequence[int],
    polygon_sizes: Sequence[int],
    workers: Sequence[int],
    repeats: int = 3,
    *,
    block_size: int = DEFAULT_BLOCK_SIZE,
    seed: int = 0,
    baseline: str = "oracle",
    log: Callable[[str], None] | None = None,
) -> BenchReport:
    if baseline not in BASELINES:
        raise ValueError(f"baseline must be one of {BASELINES}")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if any(n < 1 for n in points_sizes) or any(n < 1 for n in polygon_sizes) or any(w < 1 for w in workers):
        raise ValueError("sizes and worker counts must be >= 1")
    rows: list[BenchRow] = []
    peak: dict[tuple[int, int], int] = {}
    for n_pts in points_sizes:
        batch = uniform_points(n_pts, seed + n_pts)
        for n_pol in polygon_sizes:
            layer = grid_layer(n_pol)
            ora_ms, ora = _median_ms(
                lambda: KeyedCounts(dict(sorted(sequential_spatial_join(batch.lon, batch.lat, layer)[0].items()))),
                repeats,
            )
            ker_ms, ker = _median_ms(lambda: sequential_join(batch, layer), repeats)
            if ker != ora:
                raise BenchMismatch(f"join kernel disagrees with oracle at {n_pts} x {n_pol}")
            base_ms = ora_ms if baseline == "oracle" else ker_ms
            rows.append(BenchRow("oracle", n_pts, n_pol, 1, ora_ms, base_ms / ora_ms))
            rows.append(BenchRow("kernel", n_pts, n_pol, 1, ker_ms, base_ms / ker_ms))
            for w in workers:
                ms, got = _median_ms(
                    lambda: spatial_join_job(batch, layer, False, w, block_size=block_size), repeats
                )
                if got != ora:
                    raise BenchMismatch(f"mapreduce (workers={w}) disagrees with oracle at {n_pts} x {n_pol}")
                rows.append(BenchRow("mapreduce", n_pts, n_pol, w, ms, base_ms / ms))
                if log:
                    log(f"{n_pts} pts x {n_pol} polys, workers={w}: {ms:.1f} ms "
                        f"(oracle {ora_ms:.1f} ms, kernel {ker_ms:.1f} ms)")
            peak[(n_pts, n_pol)] = _peak_rss_kb()
    return BenchReport(rows, peak, baseline)
