"""Synthetic desk-scale benchmarks.

The evaluation protocols need labelled corpora; the real malware datasets are
not bundled, so experiments run on generated stand-ins: a 135-column binary
feature space with a small planted set of class markers and uninformative
background features.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset, FeatureVector

__all__ = ["make_binary_benchmark", "marker_ids"]

DEFAULT_DIM = 135
DEFAULT_POSITIVE_MARKERS = 10
DEFAULT_BENIGN_MARKERS = 8


def marker_ids(
    n_positive: int = DEFAULT_POSITIVE_MARKERS,
    n_benign: int = DEFAULT_BENIGN_MARKERS,
) -> tuple[list[int], list[int]]:
    """Ids of the planted positive-class and benign-class marker features."""
    return list(range(n_positive)), list(range(n_positive, n_positive + n_benign))


def make_binary_benchmark(
    n_samples: int = 2000,
    dim: int = DEFAULT_DIM,
    n_positive_markers: int = DEFAULT_POSITIVE_MARKERS,
    n_benign_markers: int = DEFAULT_BENIGN_MARKERS,
    marker_rate: float = 0.75,
    crossover_rate: float = 0.08,
    background_rate: float = 0.3,
    seed: int = 0,
) -> Dataset:
    """Balanced binary dataset with planted class markers.

    Positive samples carry each positive marker with probability
    ``marker_rate`` and each benign marker with ``crossover_rate`` (and vice
    versa); the remaining features are class-independent noise present at
    ``background_rate``.
    """
    if n_positive_markers + n_benign_markers >= dim:
        raise ValueError("markers must leave room for background features")
    rng = np.random.default_rng(seed)
    pos_ids, ben_ids = marker_ids(n_positive_markers, n_benign_markers)
    n_background = dim - n_positive_markers - n_benign_markers
    samples = []
    for i in range(n_samples):
        label = i % 2
        own_rate, other_rate = (marker_rate, crossover_rate)
        pos_bits = rng.random(n_positive_markers) < (own_rate if label else other_rate)
        ben_bits = rng.random(n_benign_markers) < (other_rate if label else own_rate)
        back_bits = rng.random(n_background) < background_rate
        entries = {}
        for fid, bit in zip(pos_ids, pos_bits):
            if bit:
                entries[fid] = 1.0
        for fid, bit in zip(ben_ids, ben_bits):
            if bit:
                entries[fid] = 1.0
        offset = n_positive_markers + n_benign_markers
        for j, bit in enumerate(back_bits):
            if bit:
                entries[offset + j] = 1.0
        samples.append((FeatureVector(entries, dim), label))
    vocabulary = {}
    for fid in pos_ids:
        vocabulary[fid] = f"pos_marker_{fid}"
    for fid in ben_ids:
        vocabulary[fid] = f"ben_marker_{fid - n_positive_markers}"
    for j in range(n_background):
        fid = n_positive_markers + n_benign_markers + j
        vocabulary[fid] = f"background_{j}"
    return Dataset(samples, vocabulary)
