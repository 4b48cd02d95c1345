"""Deterministic random streams and replica scheduling.

Streams are derived from ``SeedSequence(master, spawn_key=(label_key, i))``
so any replica can be regenerated on its own, and results never depend on
how replicas are spread over threads.
"""
from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = ["label_key", "seed_streams", "ReplicaStreams", "as_streams", "run_replicas"]


def label_key(label: str) -> int:
    """Stable 32-bit key of a label (independent of PYTHONHASHSEED)."""
    return int.from_bytes(hashlib.sha256(label.encode("utf8")).digest()[:4], "little")


def seed_streams(master_seed: int, labels: Sequence[str]) -> dict:
    labels = list(labels)
    if len(set(labels)) != len(labels):
        raise ValueError("stream labels must be distinct")
    keys = [label_key(lb) for lb in labels]
    if len(set(keys)) != len(keys):
        raise ValueError("label key collision; rename a label")
    return {lb: np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(master_seed), spawn_key=(k,))))
            for lb, k in zip(labels, keys)}


class ReplicaStreams:
    """Factory of per-replica generators for one labelled task."""

    def __init__(self, master_seed: int, label: str = "replicas"):
        self.master_seed = int(master_seed)
        self.label = label
        self._key = label_key(label)

    def generator(self, i: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self._key, int(i)))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, label: str) -> "ReplicaStreams":
        return ReplicaStreams(self.master_seed, f"{self.label}/{label}")

    def __repr__(self):
        return f"ReplicaStreams(seed={self.master_seed}, label={self.label!r})"


def as_streams(rng, label="replicas") -> ReplicaStreams:
    """Accept a seed, a ReplicaStreams or a Generator.

    A Generator is consumed for one 63-bit master seed, so a given
    generator state still determines every replica.
    """
    if isinstance(rng, ReplicaStreams):
        return rng
    if isinstance(rng, np.random.Generator):
        return ReplicaStreams(int(rng.integers(0, 2 ** 63 - 1)), label)
    if isinstance(rng, (int, np.integer)):
        return ReplicaStreams(int(rng), label)
    raise TypeError(f"cannot derive replica streams from {type(rng).__name__}")


def run_replicas(fn: Callable[[int, np.random.Generator], object], n: int, streams: ReplicaStreams,
                 threads: int = 1, start: int = 0) -> list:
    """fn(i, rng_i) for i in range(start, start + n), results in replica order."""
    idx = range(start, start + n)
    if threads <= 1 or n <= 1:
        return [fn(i, streams.generator(i)) for i in idx]
    with ThreadPoolExecutor(max_workers=int(threads)) as ex:
        return list(ex.map(lambda i: fn(i, streams.generator(i)), idx))
