"""Feature-space representation, dataset ingestion and tf-idf encoding.

Two on-disk formats are supported:

* token lists: one sample per line, label first, then whitespace-separated
  feature-name tokens (set-valued categorical features).
* numeric CSV: a header row of feature names, then one row per sample with
  the label in the first column followed by numeric feature values.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DatasetFormatError",
    "FeatureVector",
    "Dataset",
    "TfIdfEncoder",
    "load_dataset",
    "save_numeric_csv",
    "save_token_lists",
    "fit_tfidf",
    "train_test_split",
]


class DatasetFormatError(ValueError):
    """Raised when an input file does not parse as a dataset."""


@dataclass(frozen=True)
class FeatureVector:
    """Sparse non-negative feature vector; absent ids are exactly zero.

    ``entries`` maps feature id to value. Zero values are dropped at
    construction so the stored ids are exactly the support.
    """

    entries: dict[int, float]
    dim: int

    def __post_init__(self):
        if self.dim < 0:
            raise ValueError(f"dim must be >= 0, got {self.dim}")
        cleaned = {}
        for fid, val in self.entries.items():
            fid = int(fid)
            val = float(val)
            if not math.isfinite(val):
                raise ValueError(f"feature {fid} has non-finite value {val}")
            if val < 0:
                raise ValueError(f"feature {fid} has negative value {val}")
            if not 0 <= fid < self.dim:
                raise ValueError(f"feature id {fid} out of range for dim {self.dim}")
            if val != 0.0:
                cleaned[fid] = val
        object.__setattr__(self, "entries", cleaned)

    def value(self, fid: int) -> float:
        return self.entries.get(fid, 0.0)

    def support(self) -> tuple[int, ...]:
        """Ids with nonzero value, ascending."""
        return tuple(sorted(self.entries))

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dim)
        for fid, val in self.entries.items():
            dense[fid] = val
        return dense

    def restrict(self, ids) -> "FeatureVector":
        """Keep only the given ids at their original values, all else zero."""
        keep = set(ids)
        return FeatureVector({i: v for i, v in self.entries.items() if i in keep}, self.dim)

    def without(self, ids) -> "FeatureVector":
        """Zero out the given ids."""
        drop = set(ids)
        return FeatureVector({i: v for i, v in self.entries.items() if i not in drop}, self.dim)

    def adding(self, extra: dict[int, float]) -> "FeatureVector":
        """New vector with ``extra`` overlaid on the current entries."""
        merged = dict(self.entries)
        merged.update(extra)
        return FeatureVector(merged, self.dim)

    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.entries.values()))

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class Dataset:
    """Labelled samples over one shared feature space."""

    samples: list[tuple[FeatureVector, int]]
    vocabulary: dict[int, str]

    def __post_init__(self):
        dims = {fv.dim for fv, _ in self.samples}
        if len(dims) > 1:
            raise ValueError(f"samples disagree on dim: {sorted(dims)}")
        for _, label in self.samples:
            if label not in (0, 1):
                raise ValueError(f"labels must be binary, got {label}")

    @property
    def dim(self) -> int:
        if self.samples:
            return self.samples[0][0].dim
        return len(self.vocabulary)

    def __len__(self) -> int:
        return len(self.samples)

    def vectors(self) -> list[FeatureVector]:
        return [fv for fv, _ in self.samples]

    def labels(self) -> np.ndarray:
        return np.array([label for _, label in self.samples], dtype=int)

    def to_dense(self) -> np.ndarray:
        """Design matrix, one dense row per sample."""
        X = np.zeros((len(self.samples), self.dim))
        for row, (fv, _) in enumerate(self.samples):
            for fid, val in fv.entries.items():
                X[row, fid] = val
        return X

    def feature_ids_by_name(self, names) -> list[int]:
        lookup = {name: fid for fid, name in self.vocabulary.items()}
        out = []
        for name in names:
            if name not in lookup:
                raise KeyError(f"unknown feature name {name!r}")
            out.append(lookup[name])
        return out


def _load_token_lists(path: Path) -> Dataset:
    vocabulary: dict[int, str] = {}
    index: dict[str, int] = {}
    raw_rows: list[tuple[int, set[int]]] = []
    with open(path, encoding="utf-8", newline=None) as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            try:
                label = int(tokens[0])
            except ValueError:
                raise DatasetFormatError(
                    f"{path}:{lineno}: expected integer label, got {tokens[0]!r}"
                ) from None
            if label not in (0, 1):
                raise DatasetFormatError(f"{path}:{lineno}: label must be 0 or 1, got {label}")
            ids = set()
            for tok in tokens[1:]:
                if tok not in index:
                    index[tok] = len(index)
                    vocabulary[index[tok]] = tok
                ids.add(index[tok])
            raw_rows.append((label, ids))
    if not raw_rows:
        raise DatasetFormatError(f"{path}: no samples")
    dim = len(vocabulary)
    samples = [
        (FeatureVector({fid: 1.0 for fid in ids}, dim), label) for label, ids in raw_rows
    ]
    return Dataset(samples, vocabulary)


def _load_numeric_csv(path: Path) -> Dataset:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = [(lineno, row) for lineno, row in enumerate(reader, start=1) if row]
    if not rows:
        raise DatasetFormatError(f"{path}: no samples")
    header_no, header = rows[0]
    body = rows[1:]
    if not body:
        raise DatasetFormatError(f"{path}: no samples")
    width = len(body[0][1])
    # Header either names the label column explicitly or lists feature names only.
    if len(header) == width:
        feature_names = [name.strip() for name in header[1:]]
    elif len(header) == width - 1:
        feature_names = [name.strip() for name in header]
    else:
        raise DatasetFormatError(
            f"{path}:{header_no}: header has {len(header)} columns, rows have {width}"
        )
    dim = len(feature_names)
    vocabulary = {fid: name for fid, name in enumerate(feature_names)}
    samples = []
    for lineno, row in body:
        if len(row) != width:
            raise DatasetFormatError(
                f"{path}:{lineno}: expected {width} columns, got {len(row)}"
            )
        try:
            label = int(float(row[0]))
            values = [float(cell) for cell in row[1:]]
        except ValueError:
            raise DatasetFormatError(f"{path}:{lineno}: non-numeric cell") from None
        if label not in (0, 1):
            raise DatasetFormatError(f"{path}:{lineno}: label must be 0 or 1, got {label}")
        entries = {fid: val for fid, val in enumerate(values) if val != 0.0}
        samples.append((FeatureVector(entries, dim), label))
    return Dataset(samples, vocabulary)


def load_dataset(path, format: str = "auto") -> Dataset:
    """Load a dataset from disk.

    ``format`` is ``token-lists``, ``numeric-csv`` or ``auto`` (pick
    ``numeric-csv`` for ``.csv`` paths, ``token-lists`` otherwise).
    """
    path = Path(path)
    if format == "auto":
        format = "numeric-csv" if path.suffix.lower() == ".csv" else "token-lists"
    if format == "token-lists":
        return _load_token_lists(path)
    if format == "numeric-csv":
        return _load_numeric_csv(path)
    raise ValueError(f"unknown dataset format {format!r}")


def save_numeric_csv(dataset: Dataset, path) -> None:
    """Write the numeric-CSV format: label column first, then feature columns."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        names = [dataset.vocabulary.get(fid, str(fid)) for fid in range(dataset.dim)]
        writer.writerow(["label"] + names)
        for fv, label in dataset.samples:
            row = [label] + [format(fv.value(fid), "g") for fid in range(dataset.dim)]
            writer.writerow(row)


def save_token_lists(dataset: Dataset, path) -> None:
    """Write the token-list format; nonzero features emit their names."""
    with open(path, "w", encoding="utf-8") as fh:
        for fv, label in dataset.samples:
            tokens = [dataset.vocabulary[fid] for fid in fv.support()]
            fh.write(" ".join([str(label)] + tokens) + "\n")


@dataclass
class TfIdfEncoder:
    """tf-idf weighting with smoothed idf and per-sample L2 normalization.

    idf(t) = ln((1 + N) / (1 + df(t))) + 1, fitted on the training split only.
    """

    idf: dict[int, float]
    vocabulary: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        for fid, val in self.idf.items():
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"idf for feature {fid} must be finite and > 0, got {val}")

    def encode(self, raw: FeatureVector) -> FeatureVector:
        """Encode a vector of raw counts: value = tf * idf, then L2-normalize."""
        weighted = {}
        for fid, count in raw.entries.items():
            if fid not in self.idf:
                raise KeyError(f"feature id {fid} not in the fitted vocabulary")
            weighted[fid] = count * self.idf[fid]
        norm = math.sqrt(sum(v * v for v in weighted.values()))
        if norm > 0:
            weighted = {fid: v / norm for fid, v in weighted.items()}
        return FeatureVector(weighted, raw.dim)

    def encode_dataset(self, dataset: Dataset) -> Dataset:
        encoded = [(self.encode(fv), label) for fv, label in dataset.samples]
        return Dataset(encoded, dict(dataset.vocabulary))


def fit_tfidf(train: Dataset) -> TfIdfEncoder:
    """Fit idf weights on a training split."""
    if not train.samples:
        raise ValueError("cannot fit tf-idf on an empty dataset")
    n = len(train.samples)
    df = {fid: 0 for fid in range(train.dim)}
    for fv, _ in train.samples:
        for fid in fv.entries:
            df[fid] += 1
    idf = {fid: math.log((1 + n) / (1 + df[fid])) + 1.0 for fid in range(train.dim)}
    return TfIdfEncoder(idf, dict(train.vocabulary))


def train_test_split(dataset: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Disjoint, label-stratified, seed-reproducible split.

    Each class contributes floor(train_fraction * class_count) samples to the
    training side.
    """
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    labels = dataset.labels()
    for label in (0, 1):
        members = np.flatnonzero(labels == label)
        if members.size == 0:
            continue
        order = rng.permutation(members)
        n_train = int(train_fraction * members.size)
        train_idx.extend(order[:n_train].tolist())
        test_idx.extend(order[n_train:].tolist())
    train_idx.sort()
    test_idx.sort()
    vocab = dict(dataset.vocabulary)
    train = Dataset([dataset.samples[i] for i in train_idx], vocab)
    test = Dataset([dataset.samples[i] for i in test_idx], vocab)
    return train, test
