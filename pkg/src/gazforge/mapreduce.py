"""A local MapReduce executor.

Input is split into record-count blocks; mappers run over the blocks on a
process pool of exactly ``workers`` processes; emissions are grouped by key
in (block_id, in-block) order; reducers run per key. Output does not depend
on the worker count or on scheduling.

With the ``fork`` start method the job (partitions, mapper, reducer) is
inherited by the workers instead of pickled, so mappers may be closures.
Under ``spawn`` they must be picklable.
"""

from __future__ import annotations

import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator, Sequence

DEFAULT_BLOCK_SIZE = 10_000

__all__ = [
    "DEFAULT_BLOCK_SIZE",
    "Partition",
    "KeyedCounts",
    "MapReduceError",
    "MapReduceEngine",
    "split",
    "run_job",
    "sum_reducer",
]


class MapReduceError(RuntimeError):
    """A mapper or reducer raised. ``block_id`` is None for reduce failures."""

    def __init__(self, message: str, block_id: int | None = None, key: str | None = None):
        super().__init__(message)
        self.block_id = block_id
        self.key = key

    def __reduce__(self):
        return (type(self), (self.args[0], self.block_id, self.key))


@dataclass(frozen=True)
class Partition:
    block_id: int
    records: Sequence

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class KeyedCounts:
    """Job output: key -> count, plus optional sorted id lists."""

    counts: dict[str, int] = field(default_factory=dict)
    ids: dict[str, tuple[str, ...]] | None = None

    def __post_init__(self):
        for k, c in self.counts.items():
            if c < 0:
                raise ValueError(f"negative count for {k!r}")
        if self.ids is not None:
            for k, ids in self.ids.items():
                if len(ids) != self.counts.get(k, 0):
                    raise ValueError(f"id list length for {k!r} does not match its count")

    def __len__(self) -> int:
        return len(self.counts)

    def __contains__(self, key) -> bool:
        return key in self.counts

    def __getitem__(self, key: str) -> int:
        return self.counts[key]

    def get(self, key: str, default: int = 0) -> int:
        return self.counts.get(key, default)

    def total(self) -> int:
        return sum(self.counts.values())

    def ranked(self) -> list[tuple[str, int]]:
        """Entries by count descending, then key ascending."""
        return sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))

    def to_tsv(self, limit: int | None = None) -> str:
        rows = self.ranked()
        if limit is not None:
            rows = rows[:limit]
        lines = []
        for key, count in rows:
            if self.ids is not None:
                lines.append(f"{key}\t{count}\t{','.join(self.ids.get(key, ()))}")
            else:
                lines.append(f"{key}\t{count}")
        return "".join(line + "\n" for line in lines)


def split(records: Sequence, block_size: int) -> list[Partition]:
    """Cut ``records`` into contiguous blocks of ``block_size`` (last may be short)."""
    if not isinstance(block_size, int) or block_size < 1:
        raise ValueError(f"block_size must be a positive integer, got {block_size!r}")
    n = len(records)
    return [Partition(i, records[start:start + block_size]) for i, start in enumerate(range(0, n, block_size))]


def sum_reducer(key: str, values: list[int]) -> int:
    return sum(values)


# Job state installed in each worker process (and in the parent for workers=1).
_JOB: dict[str, Any] = {}


def _install(partitions, mapper, reducer, block_mapper) -> None:
    _JOB.clear()
    _JOB.update(partitions=partitions, mapper=mapper, reducer=reducer, block_mapper=block_mapper)


def _emissions(partition: Partition) -> Iterator[tuple[str, Any]]:
    mapper = _JOB["mapper"]
    if _JOB["block_mapper"]:
        yield from mapper(partition.records)
    else:
        for record in partition.records:
            yield from mapper(record)


def _map_block(index: int) -> tuple[int, dict[str, list]]:
    partition = _JOB["partitions"][index]
    grouped: dict[str, list] = {}
    try:
        for key, value in _emissions(partition):
            grouped.setdefault(key, []).append(value)
    except Exception as exc:
        raise MapReduceError(
            f"mapper failed on block {partition.block_id}: {type(exc).__name__}: {exc}",
            block_id=partition.block_id,
        ) from exc
    return partition.block_id, grouped


def _reduce_chunk(groups: list[tuple[str, list]]) -> list[tuple[str, Any]]:
    reducer = _JOB["reducer"]
    out = []
    for key, values in groups:
        try:
            out.append((key, reducer(key, values)))
        except Exception as exc:
            raise MapReduceError(
                f"reducer failed on key {key!r}: {type(exc).__name__}: {exc}", key=key
            ) from exc
    return out


def _shuffle(block_outputs: Iterable[tuple[int, dict[str, list]]]) -> dict[str, list]:
    groups: dict[str, list] = {}
    for _, grouped in sorted(block_outputs, key=lambda bo: bo[0]):
        for key, values in grouped.items():
            groups.setdefault(key, []).extend(values)
    return groups


def _to_keyed_counts(results: Iterable[tuple[str, Any]]) -> KeyedCounts:
    counts: dict[str, int] = {}
    ids: dict[str, tuple[str, ...]] = {}
    with_ids = False
    for key, result in sorted(results, key=lambda kr: kr[0]):
        if isinstance(result, tuple):
            count, id_list = result
            ids[key] = tuple(id_list)
            with_ids = True
        else:
            count = result
        counts[key] = int(count)
    return KeyedCounts(counts, ids if with_ids else None)


def _chunks(items: list, n: int) -> list[list]:
    size = -(-len(items) // n) if items else 0
    return [items[i:i + size] for i in range(0, len(items), size)] if size else []


def _context():
    methods = mp.get_all_start_methods()
    return mp.get_context("fork" if "fork" in methods else "spawn")


def run_job(
    partitions: Sequence[Partition],
    mapper: Callable,
    reducer: Callable[[str, list], Any],
    workers: int = 1,
    *,
    block_mapper: bool = False,
) -> KeyedCounts:
    """Run one MapReduce job.

    ``mapper`` takes a record and returns an iterable of ``(key, value)``
    pairs; with ``block_mapper=True`` it takes a whole partition's records
    instead, which lets vectorized mappers pre-combine per block. The
    reducer receives the key and its values in (block_id, in-block) order
    and returns either a count or a ``(count, ids)`` pair.
    """
    if not isinstance(workers, int) or workers < 1:
        raise ValueError(f"workers must be a positive integer, got {workers!r}")
    partitions = list(partitions)
    if workers == 1 or len(partitions) == 0:
        _install(partitions, mapper, reducer, block_mapper)
        try:
            groups = _shuffle(_map_block(i) for i in range(len(partitions)))
            return _to_keyed_counts(_reduce_chunk(sorted(groups.items())))
        finally:
            _JOB.clear()

    with ProcessPoolExecutor(
        max_workers=workers,
        mp_context=_context(),
        initializer=_install,
        initargs=(partitions, mapper, reducer, block_mapper),
    ) as pool:
        futures = [pool.submit(_map_block, i) for i in range(len(partitions))]
        outputs = []
        try:
            for fut in futures:
                outputs.append(fut.result())
        except BaseException:
            for fut in futures:
                fut.cancel()
            raise
        groups = _shuffle(outputs)
        reduce_futures = [pool.submit(_reduce_chunk, chunk) for chunk in _chunks(sorted(groups.items()), workers)]
        results = []
        for fut in reduce_futures:
            results.extend(fut.result())
    return _to_keyed_counts(results)


@dataclass
class MapReduceEngine:
    """Holds execution settings; one job at a time per instance."""

    workers: int = 1
    block_size: int = DEFAULT_BLOCK_SIZE

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")

    def run(self, records: Sequence, mapper: Callable, reducer: Callable, *, block_mapper: bool = False) -> KeyedCounts:
        return run_job(split(records, self.block_size), mapper, reducer, self.workers, block_mapper=block_mapper)


def default_workers() -> int:
    """``GAZFORGE_WORKERS`` if set, else 1."""
    raw = os.environ.get("GAZFORGE_WORKERS")
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ValueError(f"GAZFORGE_WORKERS must be an integer, got {raw!r}") from None
        if value >= 1:
            return value
    return 1
