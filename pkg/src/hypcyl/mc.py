"""Seeded Monte Carlo plumbing: keyed random streams and replication.

Every stream is a Philox generator whose key is derived from
(master_seed, stream path), so stream k draws the same numbers no matter
which worker runs it or in what order.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np


class ReplicationError(RuntimeError):
    def __init__(self, stream_id, cause):
        super().__init__(f"task failed on stream {stream_id}: {cause!r}")
        self.stream_id = stream_id
        self.cause = cause


class RngStream:
    """A reproducible random stream addressed by (master_seed, stream_id).

    Behaves like a ``numpy.random.Generator``; ``child(i)`` derives an
    independent sub-stream.
    """

    def __init__(self, master_seed, stream_id=()):
        if isinstance(stream_id, (int, np.integer)):
            stream_id = (int(stream_id),)
        self.master_seed = int(master_seed)
        self.stream_id = tuple(int(i) for i in stream_id)
        ss = np.random.SeedSequence(self.master_seed, spawn_key=self.stream_id)
        self.generator = np.random.Generator(np.random.Philox(key=ss.generate_state(2, np.uint64)))

    def child(self, i):
        return RngStream(self.master_seed, self.stream_id + (int(i),))

    def __getattr__(self, name):
        # only reached for attributes RngStream itself lacks
        return getattr(self.generator, name)

    def __repr__(self):
        return f"RngStream(master_seed={self.master_seed}, stream_id={self.stream_id})"


def as_stream(seed):
    return seed if isinstance(seed, RngStream) else RngStream(seed)


def seed_record(rng):
    """JSON-friendly provenance of a stream, or None for bare generators."""
    return [rng.master_seed, *rng.stream_id] if isinstance(rng, RngStream) else None


def as_generator(rng):
    """Accept an RngStream, a Generator or an int seed."""
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    return RngStream(rng).generator


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n: int
    ci95_low: float
    ci95_high: float
    master_seed: int | None = None

    @classmethod
    def from_values(cls, values, master_seed=None):
        v = np.asarray(values, dtype=float).reshape(-1)
        n = len(v)
        if n < 2:
            raise ValueError("need at least two replications")
        mean = float(v.mean())
        se = float(v.std(ddof=1) / math.sqrt(n))
        return cls(mean, se, n, mean - 1.96 * se, mean + 1.96 * se, master_seed)

    @classmethod
    def from_moments(cls, mean, stderr, n, master_seed=None):
        return cls(float(mean), float(stderr), int(n), mean - 1.96 * stderr, mean + 1.96 * stderr, master_seed)

    def scaled(self, c):
        lo, hi = sorted((self.ci95_low * c, self.ci95_high * c))
        return Estimate(self.mean * c, self.stderr * abs(c), self.n, lo, hi, self.master_seed)

    def within(self, target, k=3.0):
        return abs(self.mean - target) <= k * self.stderr

    def to_dict(self):
        return asdict(self)


def run_parallel(fn, jobs, workers=1):
    """Map fn over jobs, in order, optionally on a thread pool."""
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def replicate(task, reps, master_seed, workers=1):
    """Run ``task(stream)`` on streams 0..reps-1 and average the results.

    Task outputs may be scalars or equal-shape arrays; the result is an
    :class:`Estimate` (scalar) or a ``(mean, stderr)`` pair of arrays.
    ``master_seed`` may also be an RngStream, whose children are then used.
    """
    if reps < 2:
        raise ValueError("reps must be at least 2")
    root = as_stream(master_seed)

    def one(i):
        try:
            return task(root.child(i))
        except Exception as exc:  # noqa: BLE001 - re-raised with the stream id
            raise ReplicationError(root.child(i).stream_id, exc) from exc

    values = np.asarray(run_parallel(one, range(reps), workers), dtype=float)
    return _summarize(values, root.master_seed)


def replicate_batched(task, reps, master_seed, batch_size=10_000, workers=1):
    """Vectorized replication: ``task(stream, n)`` returns n replicate values.

    Batch b always uses stream b with the same n, so the output is
    independent of the worker count.
    """
    if reps < 2:
        raise ValueError("reps must be at least 2")
    root = as_stream(master_seed)
    sizes = [min(batch_size, reps - s) for s in range(0, reps, batch_size)]

    def one(b):
        try:
            out = np.asarray(task(root.child(b), sizes[b]), dtype=float)
        except Exception as exc:  # noqa: BLE001
            raise ReplicationError(root.child(b).stream_id, exc) from exc
        if out.shape[0] != sizes[b]:
            raise ReplicationError(root.child(b).stream_id, ValueError("wrong batch length"))
        return out

    values = np.concatenate(run_parallel(one, range(len(sizes)), workers))
    return _summarize(values, root.master_seed)


def _summarize(values, master_seed):
    if values.ndim == 1:
        return Estimate.from_values(values, master_seed)
    n = values.shape[0]
    return values.mean(axis=0), values.std(axis=0, ddof=1) / math.sqrt(n)


def binomial_estimate(hits, n, scale=1.0, master_seed=None):
    """Estimate of scale * p from a hit count, with binomial stderr."""
    p = hits / n
    se = math.sqrt(p * (1 - p) / n)
    return Estimate.from_moments(scale * p, scale * se, n, master_seed)
