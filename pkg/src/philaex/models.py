"""Black-box scoring interface with built-in classifiers and an external adapter.

All scorers expose f(x) -> [0, 1], the probability of the positive class.
The attribution pipeline only ever needs query access to that function.
"""

from __future__ import annotations

import json
import math
import os
import select
import socket
import subprocess
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .data import Dataset, FeatureVector, TfIdfEncoder

__all__ = [
    "DimensionMismatchError",
    "ScoringProtocolError",
    "ScoreModel",
    "LogisticModel",
    "RandomForestModel",
    "ExternalModel",
    "train_logistic",
    "train_random_forest",
    "ModelBundle",
    "save_model",
    "load_model",
]


class DimensionMismatchError(ValueError):
    """Sample dimension does not match the model's feature space."""


class ScoringProtocolError(RuntimeError):
    """The external scorer violated the line-delimited JSON protocol."""


class ScoreModel(ABC):
    """Scorer f(x) -> probability of the positive class in [0, 1]."""

    dim: int

    def _check(self, x: FeatureVector) -> None:
        if x.dim != self.dim:
            raise DimensionMismatchError(
                f"sample has dim {x.dim}, model expects {self.dim}"
            )

    @abstractmethod
    def score(self, x: FeatureVector) -> float:
        raise NotImplementedError

    def batch_score(self, xs: list[FeatureVector]) -> np.ndarray:
        return np.array([self.score(x) for x in xs])


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))


@dataclass
class LogisticModel(ScoreModel):
    weights: np.ndarray
    bias: float

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def score(self, x: FeatureVector) -> float:
        return float(self.batch_score([x])[0])

    def batch_score(self, xs: list[FeatureVector]) -> np.ndarray:
        if not xs:
            return np.zeros(0)
        for x in xs:
            self._check(x)
        z = np.full(len(xs), self.bias)
        for row, x in enumerate(xs):
            for fid, val in x.entries.items():
                z[row] += self.weights[fid] * val
        return _sigmoid(z)


def train_logistic(
    train: Dataset,
    l2: float = 1e-4,
    epochs: int = 200,
    lr: float = 0.1,
    seed: int = 0,
) -> LogisticModel:
    """Full-batch gradient descent on the L2-regularized logistic loss.

    The step size backtracks whenever a step would increase the objective,
    so the recorded per-epoch losses are non-increasing. ``seed`` is part of
    the signature for reproducibility bookkeeping; training itself is
    deterministic from a zero initialization.
    """
    if not train.samples:
        raise ValueError("cannot train on an empty dataset")
    if l2 < 0 or lr <= 0:
        raise ValueError("l2 must be >= 0 and lr > 0")
    del seed
    X = train.to_dense()
    y = train.labels().astype(float)
    n, m = X.shape
    w = np.zeros(m)
    b = 0.0

    def objective(w, b):
        z = X @ w + b
        ce = float(np.mean(np.logaddexp(0.0, z) - y * z))
        return ce + 0.5 * l2 * float(w @ w)

    losses = [objective(w, b)]
    step = lr
    for _ in range(epochs):
        p = _sigmoid(X @ w + b)
        grad_w = X.T @ (p - y) / n + l2 * w
        grad_b = float(np.mean(p - y))
        accepted = False
        for _ in range(60):
            w_new = w - step * grad_w
            b_new = b - step * grad_b
            loss_new = objective(w_new, b_new)
            if loss_new <= losses[-1]:
                w, b = w_new, b_new
                losses.append(loss_new)
                accepted = True
                break
            step /= 2.0
        if not accepted:
            losses.append(losses[-1])
            break
    model = LogisticModel(w, b)
    model.loss_history = losses
    return model


class RandomForestModel(ScoreModel):
    """Bagged axis-aligned decision trees; score is the positive-vote fraction.

    Each tree is stored as parallel arrays: ``feature`` (-1 marks a leaf),
    ``threshold``, ``left``/``right`` child indices and the leaf ``vote``.
    """

    def __init__(self, trees: list[dict[str, np.ndarray]], dim: int, max_depth: int):
        self.trees = trees
        self.dim = dim
        self.max_depth = max_depth

    @property
    def tree_count(self) -> int:
        return len(self.trees)

    def _votes(self, X: np.ndarray) -> np.ndarray:
        rows = np.arange(X.shape[0])
        votes = np.zeros((len(self.trees), X.shape[0]))
        for t, tree in enumerate(self.trees):
            feature, threshold = tree["feature"], tree["threshold"]
            left, right = tree["left"], tree["right"]
            idx = np.zeros(X.shape[0], dtype=np.int64)
            for _ in range(self.max_depth + 1):
                internal = feature[idx] >= 0
                if not internal.any():
                    break
                f = np.maximum(feature[idx], 0)
                go_left = X[rows, f] <= threshold[idx]
                nxt = np.where(go_left, left[idx], right[idx])
                idx = np.where(internal, nxt, idx)
            votes[t] = tree["vote"][idx]
        return votes

    def score(self, x: FeatureVector) -> float:
        return float(self.batch_score([x])[0])

    def batch_score(self, xs: list[FeatureVector]) -> np.ndarray:
        if not xs:
            return np.zeros(0)
        for x in xs:
            self._check(x)
        X = np.zeros((len(xs), self.dim))
        for row, x in enumerate(xs):
            for fid, val in x.entries.items():
                X[row, fid] = val
        return self._votes(X).mean(axis=0)


def _gini(pos: int, total: int) -> float:
    if total == 0:
        return 0.0
    p = pos / total
    return 2.0 * p * (1.0 - p)


def _grow_tree(X, y, idx, max_depth, n_candidates, rng):
    feature, threshold, left, right, vote = [], [], [], [], []

    def leaf(node_idx) -> int:
        node = len(feature)
        pos = int(y[node_idx].sum())
        feature.append(-1)
        threshold.append(0.0)
        left.append(node)
        right.append(node)
        vote.append(1 if 2 * pos > node_idx.size else 0)
        return node

    def build(node_idx, depth) -> int:
        pos = int(y[node_idx].sum())
        if depth >= max_depth or pos == 0 or pos == node_idx.size or node_idx.size < 2:
            return leaf(node_idx)
        best = None
        candidates = rng.choice(X.shape[1], size=n_candidates, replace=False)
        parent_gini = _gini(pos, node_idx.size)
        for f in candidates:
            vals = X[node_idx, f]
            uniq = np.unique(vals)
            if uniq.size < 2:
                continue
            for thr in (uniq[:-1] + uniq[1:]) / 2.0:
                mask = vals <= thr
                nl = int(mask.sum())
                nr = node_idx.size - nl
                if nl == 0 or nr == 0:
                    continue
                pl = int(y[node_idx[mask]].sum())
                cost = (nl * _gini(pl, nl) + nr * _gini(pos - pl, nr)) / node_idx.size
                if best is None or cost < best[0]:
                    best = (cost, int(f), float(thr), mask)
        if best is None or best[0] >= parent_gini:
            return leaf(node_idx)
        _, f, thr, mask = best
        node = len(feature)
        feature.append(f)
        threshold.append(thr)
        left.append(-1)
        right.append(-1)
        vote.append(0)
        left[node] = build(node_idx[mask], depth + 1)
        right[node] = build(node_idx[~mask], depth + 1)
        return node

    build(idx, 0)
    return {
        "feature": np.array(feature, dtype=np.int64),
        "threshold": np.array(threshold, dtype=float),
        "left": np.array(left, dtype=np.int64),
        "right": np.array(right, dtype=np.int64),
        "vote": np.array(vote, dtype=float),
    }


def train_random_forest(
    train: Dataset,
    tree_count: int = 100,
    max_depth: int = 10,
    seed: int = 0,
) -> RandomForestModel:
    """Bootstrap-sampled trees with sqrt(m) random feature candidates per split."""
    if tree_count < 1 or max_depth < 1:
        raise ValueError("tree_count and max_depth must be >= 1")
    if not train.samples:
        raise ValueError("cannot train on an empty dataset")
    X = train.to_dense()
    y = train.labels()
    n, m = X.shape
    n_candidates = max(1, int(math.sqrt(m)))
    seeds = np.random.SeedSequence(seed).spawn(tree_count)
    trees = []
    for tree_seed in seeds:
        rng = np.random.default_rng(tree_seed)
        boot = rng.integers(0, n, size=n)
        trees.append(_grow_tree(X, y, boot, max_depth, n_candidates, rng))
    return RandomForestModel(trees, dim=m, max_depth=max_depth)


class ExternalModel(ScoreModel):
    """Adapter for any scorer speaking the line-delimited JSON protocol.

    Requests are one JSON object per line ``{"id": <int>, "x": {"<feature-id>":
    <value>, ...}}``; responses are ``{"id": <int>, "score": <float>}`` and may
    arrive out of order. One connection is shared; callers are serialized by a
    lock so frames never interleave.
    """

    def __init__(self, transport, dim: int, timeout: float = 30.0):
        self._transport = transport
        self.dim = dim
        self.timeout = timeout
        self._lock = threading.Lock()
        self._next_id = 0
        self._pending: dict[int, float] = {}

    @classmethod
    def spawn(cls, cmd: list[str], dim: int, timeout: float = 30.0) -> "ExternalModel":
        """Run ``cmd`` as a subprocess scoring over stdio."""
        proc = subprocess.Popen(cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        return cls(_SubprocessTransport(proc), dim, timeout)

    @classmethod
    def connect(cls, host: str, port: int, dim: int, timeout: float = 30.0) -> "ExternalModel":
        """Connect to a TCP scorer."""
        sock = socket.create_connection((host, port), timeout=timeout)
        return cls(_SocketTransport(sock), dim, timeout)

    def close(self) -> None:
        self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False

    def _parse_response(self, line: str) -> tuple[int, float]:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ScoringProtocolError(f"response is not valid JSON: {line!r}") from exc
        if not isinstance(obj, dict) or "id" not in obj or "score" not in obj:
            raise ScoringProtocolError(f"response missing id/score: {line!r}")
        try:
            rid = int(obj["id"])
            score = float(obj["score"])
        except (TypeError, ValueError) as exc:
            raise ScoringProtocolError(f"non-numeric id/score: {line!r}") from exc
        if not (math.isfinite(score) and 0.0 <= score <= 1.0):
            raise ScoringProtocolError(f"score {score} outside [0, 1]")
        return rid, score

    def _collect(self, want: int) -> float:
        while want not in self._pending:
            line = self._transport.read_line(self.timeout)
            rid, score = self._parse_response(line)
            self._pending[rid] = score
        return self._pending.pop(want)

    def score(self, x: FeatureVector) -> float:
        return float(self.batch_score([x])[0])

    def batch_score(self, xs: list[FeatureVector]) -> np.ndarray:
        if not xs:
            return np.zeros(0)
        for x in xs:
            self._check(x)
        with self._lock:
            ids = []
            for x in xs:
                rid = self._next_id
                self._next_id += 1
                payload = {"id": rid, "x": {str(f): v for f, v in sorted(x.entries.items())}}
                self._transport.write_line(json.dumps(payload))
                ids.append(rid)
            return np.array([self._collect(rid) for rid in ids])


class _LineBuffer:
    """Newline framing over raw chunk reads; buffered wrappers would swallow
    pipelined responses and defeat select-based timeouts."""

    def __init__(self):
        self._buf = b""

    def next_line(self, recv_chunk) -> str:
        while b"\n" not in self._buf:
            chunk = recv_chunk()
            if not chunk:
                raise ScoringProtocolError("external scorer closed the connection")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line.decode("utf-8", errors="replace")


class _SubprocessTransport:
    def __init__(self, proc: subprocess.Popen):
        self.proc = proc
        self._lines = _LineBuffer()

    def write_line(self, line: str) -> None:
        if self.proc.poll() is not None:
            raise ScoringProtocolError("external scorer exited")
        try:
            self.proc.stdin.write((line + "\n").encode("utf-8"))
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ScoringProtocolError("external scorer closed its stdin") from exc

    def read_line(self, timeout: float) -> str:
        fd = self.proc.stdout.fileno()

        def recv_chunk() -> bytes:
            ready, _, _ = select.select([fd], [], [], timeout)
            if not ready:
                raise ScoringProtocolError(f"no response within {timeout}s")
            return os.read(fd, 65536)

        return self._lines.next_line(recv_chunk)

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


class _SocketTransport:
    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._lines = _LineBuffer()

    def write_line(self, line: str) -> None:
        try:
            self.sock.sendall((line + "\n").encode("utf-8"))
        except OSError as exc:
            raise ScoringProtocolError("external scorer connection broken") from exc

    def read_line(self, timeout: float) -> str:
        self.sock.settimeout(timeout)

        def recv_chunk() -> bytes:
            try:
                return self.sock.recv(65536)
            except socket.timeout:
                raise ScoringProtocolError(f"no response within {timeout}s") from None
            except OSError as exc:
                raise ScoringProtocolError("external scorer connection broken") from exc

        return self._lines.next_line(recv_chunk)

    def close(self) -> None:
        self.sock.close()


@dataclass
class ModelBundle:
    """A trained model plus the metadata needed to interpret raw samples."""

    model: ScoreModel
    vocabulary: dict[int, str] | None = None
    encoder: TfIdfEncoder | None = None


def save_model(
    model: ScoreModel,
    path,
    vocabulary: dict[int, str] | None = None,
    encoder: TfIdfEncoder | None = None,
) -> None:
    """Dump weights plus optional vocabulary and tf-idf table to JSON."""
    if isinstance(model, LogisticModel):
        obj = {
            "kind": "logistic",
            "dim": model.dim,
            "weights": model.weights.tolist(),
            "bias": model.bias,
        }
    elif isinstance(model, RandomForestModel):
        obj = {
            "kind": "forest",
            "dim": model.dim,
            "max_depth": model.max_depth,
            "trees": [
                {key: arr.tolist() for key, arr in tree.items()} for tree in model.trees
            ],
        }
    else:
        raise ValueError(f"cannot serialize model type {type(model).__name__}")
    if vocabulary is not None:
        obj["vocabulary"] = {str(fid): name for fid, name in vocabulary.items()}
    if encoder is not None:
        obj["idf"] = {str(fid): val for fid, val in encoder.idf.items()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh)
        fh.write("\n")


def load_model(path) -> ModelBundle:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    kind = obj.get("kind")
    if kind == "logistic":
        model = LogisticModel(np.array(obj["weights"], dtype=float), float(obj["bias"]))
    elif kind == "forest":
        trees = [
            {
                "feature": np.array(tree["feature"], dtype=np.int64),
                "threshold": np.array(tree["threshold"], dtype=float),
                "left": np.array(tree["left"], dtype=np.int64),
                "right": np.array(tree["right"], dtype=np.int64),
                "vote": np.array(tree["vote"], dtype=float),
            }
            for tree in obj["trees"]
        ]
        model = RandomForestModel(trees, dim=int(obj["dim"]), max_depth=int(obj["max_depth"]))
    else:
        raise ValueError(f"unknown model kind {kind!r} in {path}")
    vocabulary = None
    if "vocabulary" in obj:
        vocabulary = {int(fid): name for fid, name in obj["vocabulary"].items()}
    encoder = None
    if "idf" in obj:
        encoder = TfIdfEncoder(
            {int(fid): float(val) for fid, val in obj["idf"].items()},
            vocabulary or {},
        )
    return ModelBundle(model, vocabulary, encoder)
