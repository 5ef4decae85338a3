"""Data-parallel execution: k-space shard plans, allreduce, worker pool.

Workers are threads running identical code on disjoint contiguous sample
shards; image-space arrays stay replicated. The only collective is an
allreduce (elementwise sum over worker contributions, accumulated in
ascending worker order, result broadcast to every worker), so
communication volume is image-sized regardless of shard sizes. BLAS
thread pools are pinned to one thread inside the pool so worker count is
the only parallelism knob.
"""

import threading
from dataclasses import dataclass

from threadpoolctl import threadpool_limits


class SpmdError(RuntimeError):
    """Raised when the worker pool fails collectively (timeout, mismatch)."""


@dataclass(frozen=True)
class ShardPlan:
    """Contiguous split of n_total samples across n_workers.

    bounds[r] = (start, stop) of worker r's shard; shards are disjoint
    and cover the full range in ascending order. Default plans are
    near-even (sizes differ by at most one sample). Order-stable plans
    (chunk_size > 0) additionally align every boundary to a global chunk
    grid so each reduction chunk is owned by exactly one worker; shard
    sizes then differ by at most one chunk.
    """

    n_total: int
    bounds: tuple
    chunk_size: int = 0

    @property
    def n_workers(self):
        return len(self.bounds)

    def shard_size(self, rank):
        start, stop = self.bounds[rank]
        return stop - start

    @property
    def n_chunks(self):
        if not self.chunk_size:
            return 0
        return -(-self.n_total // self.chunk_size)

    def worker_chunks(self, rank):
        """Chunk ids and absolute sample ranges owned by one worker."""
        if not self.chunk_size:
            raise ValueError("plan was built without a reduction chunk grid")
        start, stop = self.bounds[rank]
        first = start // self.chunk_size
        last = -(-stop // self.chunk_size)
        ids = tuple(range(first, last))
        ranges = tuple(
            (i * self.chunk_size, min((i + 1) * self.chunk_size, self.n_total))
            for i in ids)
        return ids, ranges


def default_chunk_size(n_total):
    """Reduction chunk size: fixed for a dataset, independent of workers.

    Capped at 128 samples for contraction efficiency while guaranteeing
    at least 16 chunks (when the data allows) so modest worker counts
    always align.
    """
    return min(128, max(1, n_total // 16))


def make_shard_plan(n_total, n_workers, chunk_size=None):
    """Near-even contiguous shard plan; every worker gets >= 1 sample.

    With chunk_size set, samples are tiled into global chunks
    [i*chunk_size, (i+1)*chunk_size) ∩ [0, n_total) (the last chunk may
    be ragged) and whole chunks are split near-evenly instead, keeping
    the chunk grid identical for every worker count.
    """
    if n_workers < 1:
        raise ValueError(f"n_workers must be >= 1, got {n_workers}")
    if n_total < n_workers:
        raise ValueError(
            f"cannot shard {n_total} samples across {n_workers} workers")
    if chunk_size is None:
        base, extra = divmod(n_total, n_workers)
        bounds = []
        start = 0
        for r in range(n_workers):
            stop = start + base + (1 if r < extra else 0)
            bounds.append((start, stop))
            start = stop
        return ShardPlan(n_total, tuple(bounds))
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
    n_chunks = -(-n_total // chunk_size)
    if n_workers > n_chunks:
        raise ValueError(
            f"cannot split {n_chunks} reduction chunks across {n_workers} "
            f"workers; lower the worker count or the chunk size")
    base, extra = divmod(n_chunks, n_workers)
    bounds = []
    chunk_start = 0
    for r in range(n_workers):
        chunk_stop = chunk_start + base + (1 if r < extra else 0)
        bounds.append((chunk_start * chunk_size,
                       min(chunk_stop * chunk_size, n_total)))
        chunk_start = chunk_stop
    return ShardPlan(n_total, tuple(bounds), chunk_size)


@dataclass
class PhaseCounter:
    calls: int = 0
    elements: int = 0


class CommStats:
    """Thread-safe running totals of collective traffic, tagged by phase."""

    def __init__(self):
        self._lock = threading.Lock()
        self.allreduce_calls = 0
        self.elements_reduced = 0
        self.per_phase = {}

    def record(self, phase, n_elements):
        with self._lock:
            self.allreduce_calls += 1
            self.elements_reduced += n_elements
            counter = self.per_phase.setdefault(phase, PhaseCounter())
            counter.calls += 1
            counter.elements += n_elements

    def snapshot(self):
        with self._lock:
            return {
                "allreduce_calls": self.allreduce_calls,
                "elements_reduced": self.elements_reduced,
                "per_phase": {
                    name: {"calls": c.calls, "elements": c.elements}
                    for name, c in self.per_phase.items()
                },
            }


def allreduce_sum(contributions, stats=None, phase="default"):
    """Elementwise sum of same-shape arrays in ascending contributor order.

    Bitwise-equal to serially adding the contributions left to right.
    """
    if not contributions:
        raise ValueError("allreduce needs at least one contribution")
    first = contributions[0]
    for c in contributions[1:]:
        if c.shape != first.shape:
            raise ValueError(
                f"allreduce shape mismatch: {c.shape} vs {first.shape}")
        if c.dtype != first.dtype:
            raise ValueError(
                f"allreduce dtype mismatch: {c.dtype} vs {first.dtype}")
    total = first.copy()
    for c in contributions[1:]:
        total += c
    if stats is not None:
        stats.record(phase, total.size)
    return total


def ordered_chunk_sum(contributions, stats=None, phase="default"):
    """Order-stable reduction: fold chunk partials by ascending global id.

    contributions is one (chunk_ids, stack) pair per worker, where stack
    holds one same-shape array per owned chunk. The fold order depends
    only on the global chunk ids, never on how chunks are distributed,
    so the result is bitwise identical for every worker count. Counts as
    one result-size allreduce.
    """
    if not contributions:
        raise ValueError("allreduce needs at least one contribution")
    pairs = []
    for ids, stack in contributions:
        if len(ids) != len(stack):
            raise ValueError(
                f"worker sent {len(stack)} chunk partials for {len(ids)} ids")
        pairs.extend(zip(ids, stack))
    pairs.sort(key=lambda p: p[0])
    ids = [i for i, _ in pairs]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate chunk ids across workers")
    first = pairs[0][1]
    for _, arr in pairs[1:]:
        if arr.shape != first.shape:
            raise ValueError(
                f"allreduce shape mismatch: {arr.shape} vs {first.shape}")
        if arr.dtype != first.dtype:
            raise ValueError(
                f"allreduce dtype mismatch: {arr.dtype} vs {first.dtype}")
    total = first.copy()
    for _, arr in pairs[1:]:
        total += arr
    if stats is not None:
        stats.record(phase, total.size)
    return total


class _Collective:
    """Barrier-synchronized allreduce shared by one worker pool."""

    def __init__(self, n_workers, stats, timeout):
        self.n_workers = n_workers
        self.stats = stats
        self.timeout = timeout
        self.barrier = threading.Barrier(n_workers)
        self.slots = [None] * n_workers
        self.result = None
        self.failure = None
        self.phase = "setup"

    def _wait(self):
        try:
            self.barrier.wait(timeout=self.timeout)
        except threading.BrokenBarrierError:
            raise SpmdError(
                "collective barrier broke (worker error, or workers made "
                "mismatched numbers of allreduce calls)") from None

    def _reduce(self, rank, payload, reducer):
        self.slots[rank] = payload
        self._wait()
        if rank == 0:
            try:
                self.result = reducer(self.slots, self.stats, self.phase)
                self.failure = None
            except Exception as exc:
                self.failure = exc
        self._wait()
        if self.failure is not None:
            raise SpmdError(f"allreduce failed: {self.failure}") from self.failure
        return self.result if rank == 0 else self.result.copy()

    def allreduce(self, rank, arr):
        return self._reduce(rank, arr, allreduce_sum)

    def allreduce_ordered(self, rank, chunk_ids, stack):
        return self._reduce(rank, (chunk_ids, stack), ordered_chunk_sum)


class WorkerContext:
    """Per-worker handle passed to the SPMD body."""

    def __init__(self, rank, collective):
        self.rank = rank
        self.n_workers = collective.n_workers
        self._collective = collective

    def allreduce(self, arr):
        """Sum arr across all workers; every worker returns the same total."""
        return self._collective.allreduce(self.rank, arr)

    def allreduce_ordered(self, chunk_ids, stack):
        """Order-stable reduction of per-chunk partials (see ordered_chunk_sum)."""
        return self._collective.allreduce_ordered(self.rank, chunk_ids, stack)

    def set_phase(self, name):
        """Tag subsequent collective traffic for accounting."""
        self._collective.phase = name


def run_spmd(n_workers, worker_body, stats=None, barrier_timeout=120.0):
    """Run worker_body(ctx) on n_workers threads; results in rank order.

    Every worker must make the same sequence of ctx.allreduce calls. The
    first worker exception is re-raised after the pool shuts down. BLAS
    pools are limited to one thread for the duration.
    """
    if n_workers < 1:
        raise ValueError(f"n_workers must be >= 1, got {n_workers}")
    if stats is None:
        stats = CommStats()
    collective = _Collective(n_workers, stats, barrier_timeout)
    results = [None] * n_workers
    errors = []
    errors_lock = threading.Lock()

    def runner(rank):
        try:
            results[rank] = worker_body(WorkerContext(rank, collective))
        except BaseException as exc:
            with errors_lock:
                errors.append(exc)
            collective.barrier.abort()

    with threadpool_limits(limits=1):
        if n_workers == 1:
            runner(0)
        else:
            threads = [
                threading.Thread(target=runner, args=(rank,), daemon=True)
                for rank in range(n_workers)
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
    if errors:
        primary = next(
            (e for e in errors if not isinstance(e, SpmdError)), errors[0])
        raise primary
    return results
