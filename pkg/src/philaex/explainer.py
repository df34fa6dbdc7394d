"""Per-sample feature attribution for binary classifiers.

The pipeline, given a scorer f and a sample x:

1. greedily pick the core features whose presence alone drives f toward the
   0.5 decision borderline;
2. keep the remaining features whose individual addition to the core moves
   the score toward the model's prediction on the full sample;
3. score random presence-masks over the selected features and fit a Ridge
   regression to those scores; the fitted weights are the attributions.

Everything is a pure function of (model state, sample, config): a fixed seed
reproduces reports byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .data import FeatureVector
from .models import ScoreModel

__all__ = [
    "NothingToAttributeError",
    "ExplainerConfig",
    "SelectionTrace",
    "SurrogateTrainingSet",
    "AttributionReport",
    "select_core_features",
    "select_positive_contributors",
    "build_surrogate_set",
    "ridge_fit",
    "explain",
]


class NothingToAttributeError(ValueError):
    """Both selection stages came back empty; there is nothing to attribute."""


@dataclass(frozen=True)
class ExplainerConfig:
    """Knobs for one explanation run.

    ``mask_samples=None`` resolves to max(1000, 10 * n_selected) rows at fit
    time; an explicit value is used as given (floor of 2, the two forced
    masks).
    """

    max_core_features: int = 10
    alpha: float = 1.0
    mask_samples: int | None = None
    contribution_epsilon: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.max_core_features < 1:
            raise ValueError("max_core_features must be >= 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.mask_samples is not None and self.mask_samples < 2:
            raise ValueError("mask_samples must be >= 2")
        if self.contribution_epsilon < 0:
            raise ValueError("contribution_epsilon must be >= 0")


@dataclass(frozen=True)
class SelectionTrace:
    """What the two selection stages did.

    ``core`` holds (feature id, |f - 0.5| gap after adding it), in adoption
    order; the gap sequence is strictly decreasing. ``positive`` holds
    (feature id, individual score delta relative to the core).
    """

    core: tuple[tuple[int, float], ...]
    positive: tuple[tuple[int, float], ...]

    def __post_init__(self):
        gaps = [gap for _, gap in self.core]
        if any(b >= a for a, b in zip(gaps, gaps[1:])):
            raise ValueError("core gap sequence must be strictly decreasing")
        core_ids = {fid for fid, _ in self.core}
        if core_ids & {fid for fid, _ in self.positive}:
            raise ValueError("core and positive feature sets must be disjoint")


@dataclass
class SurrogateTrainingSet:
    """Mask design matrix and model scores for the Ridge fit.

    Row j of ``X`` is a 0/1 presence mask over ``feature_ids``; ``y[j]`` is
    the model's score on the correspondingly masked sample. The all-ones and
    all-zeros masks are always rows 0 and 1.
    """

    X: np.ndarray
    y: np.ndarray
    feature_ids: tuple[int, ...]

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise ValueError("X must be K x n with matching y of length K")
        if not (np.isfinite(self.y).all() and (self.y >= 0).all() and (self.y <= 1).all()):
            raise ValueError("surrogate labels must be finite and within [0, 1]")
        if not ((self.X == 1).all(axis=1).any() and (self.X == 0).all(axis=1).any()):
            raise ValueError("the all-ones and all-zeros mask rows are required")


@dataclass
class AttributionReport:
    """Attributions over the selected features of one sample.

    Features outside ``selected`` are implicitly attributed 0. Attributions
    are oriented toward the model's predicted class on the sample, so a
    positive value always means "supports the prediction".
    """

    sample_id: int | str | None
    original_score: float
    selected: tuple[int, ...]
    attributions: np.ndarray
    intercept: float
    trace: SelectionTrace
    fit_rms_residual: float = 0.0

    def __post_init__(self):
        self.attributions = np.asarray(self.attributions, dtype=float)
        if self.attributions.shape != (len(self.selected),):
            raise ValueError("one attribution per selected feature is required")

    def attribution_of(self, fid: int) -> float:
        """Attribution for any feature id; 0 for unselected features."""
        try:
            return float(self.attributions[self.selected.index(fid)])
        except ValueError:
            return 0.0

    def top_features(self, k: int) -> list[int]:
        """The k selected ids with largest attribution, ties broken by lower id."""
        order = sorted(range(len(self.selected)), key=lambda j: (-self.attributions[j], self.selected[j]))
        return [self.selected[j] for j in order[:k]]

    def to_dict(self, names: dict[int, str] | None = None) -> dict:
        names = names or {}
        return {
            "sample_id": self.sample_id,
            "original_score": self.original_score,
            "selected": [
                {
                    "feature_id": fid,
                    "name": names.get(fid, str(fid)),
                    "attribution": float(attr),
                }
                for fid, attr in zip(self.selected, self.attributions)
            ],
            "intercept": self.intercept,
            "core": [fid for fid, _ in self.trace.core],
            "positive": [fid for fid, _ in self.trace.positive],
        }

    def to_json(self, names: dict[int, str] | None = None, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(names), indent=indent)


def _score_gap(scores: np.ndarray) -> np.ndarray:
    return np.abs(scores - 0.5)


def _select_core(f: ScoreModel, x: FeatureVector, cfg: ExplainerConfig):
    support = list(x.support())
    if not support:
        raise ValueError("sample has no nonzero features")
    empty = FeatureVector({}, x.dim)
    gap = float(_score_gap(np.array([f.score(empty)]))[0])
    core: list[int] = []
    gaps: list[float] = []
    remaining = support
    while len(core) < cfg.max_core_features and remaining:
        candidates = [x.restrict(core + [fid]) for fid in remaining]
        cand_gaps = _score_gap(f.batch_score(candidates))
        best = int(np.argmin(cand_gaps))  # remaining is ascending, so ties pick the lowest id
        if not cand_gaps[best] < gap:
            break
        gap = float(cand_gaps[best])
        core.append(remaining.pop(best))
        gaps.append(gap)
    return core, gaps


def select_core_features(f: ScoreModel, x: FeatureVector, cfg: ExplainerConfig) -> list[int]:
    """Greedy core selection: adopt, one at a time, the present feature whose
    addition brings f closest to 0.5, stopping at the first non-improvement
    or at ``max_core_features``. An empty result is legal."""
    core, _ = _select_core(f, x, cfg)
    return core


def _select_positive(f: ScoreModel, x: FeatureVector, core, cfg: ExplainerConfig):
    core_vec = x.restrict(core)
    f_core = f.score(core_vec)
    f_full = f.score(x)
    direction = float(np.sign(f_full - f_core))
    if direction == 0.0:
        direction = float(np.sign(f_full - 0.5))
    rest = [fid for fid in x.support() if fid not in set(core)]
    if not rest or direction == 0.0:
        return [], []
    candidates = [x.restrict(list(core) + [fid]) for fid in rest]
    deltas = f.batch_score(candidates) - f_core
    picked = [
        (fid, float(delta))
        for fid, delta in zip(rest, deltas)
        if delta * direction > cfg.contribution_epsilon
    ]
    return [fid for fid, _ in picked], [delta for _, delta in picked]


def select_positive_contributors(
    f: ScoreModel, x: FeatureVector, core, cfg: ExplainerConfig
) -> list[int]:
    """Keep the non-core features whose individual addition to the core moves
    the score toward the model's prediction on the full sample by more than
    ``contribution_epsilon``; features pushing the other way are ignored."""
    ids, _ = _select_positive(f, x, core, cfg)
    return ids


def build_surrogate_set(
    f: ScoreModel, x: FeatureVector, selected, cfg: ExplainerConfig
) -> SurrogateTrainingSet:
    """Score random presence-masks over the selected features.

    Each mask keeps a subset of the selected features at their original
    values and zeroes every other coordinate of the sample. The all-ones and
    all-zeros masks are always included.
    """
    selected = list(selected)
    if not selected:
        raise NothingToAttributeError("nothing to attribute")
    n = len(selected)
    k = max(1000, 10 * n) if cfg.mask_samples is None else max(2, cfg.mask_samples)
    rng = np.random.default_rng(cfg.seed)
    masks = np.zeros((k, n), dtype=float)
    masks[0] = 1.0
    if k > 2:
        masks[2:] = rng.integers(0, 2, size=(k - 2, n)).astype(float)
    sel = np.array(selected)
    rows = [x.restrict(sel[mask == 1.0].tolist()) for mask in masks]
    y = f.batch_score(rows)
    return SurrogateTrainingSet(masks, y, tuple(selected))


def ridge_fit(ts: SurrogateTrainingSet, alpha: float) -> tuple[np.ndarray, float]:
    """Solve the L2-penalized least squares on centered data.

    The normal equations (Xc' Xc + alpha I) w = Xc' yc are solved by Cholesky
    factorization with one iterative-refinement pass; the intercept is
    mean(y) - mean_row(X) . w.
    """
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    X, y = ts.X, ts.y
    if X.shape[0] < 2:
        raise ValueError("at least two mask rows are required")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite values in the surrogate training set")
    xm = X.mean(axis=0)
    ym = float(y.mean())
    Xc = X - xm
    yc = y - ym
    A = Xc.T @ Xc + alpha * np.eye(X.shape[1])
    b = Xc.T @ yc
    factor = cho_factor(A)
    w = cho_solve(factor, b)
    w += cho_solve(factor, b - A @ w)
    intercept = ym - float(xm @ w)
    return w, intercept


def explain(
    f: ScoreModel,
    x: FeatureVector,
    cfg: ExplainerConfig,
    sample_id: int | str | None = None,
) -> AttributionReport:
    """Run the full pipeline and return the attribution report.

    The Ridge target is the model's confidence in its predicted class on x
    (f for positive predictions, 1 - f otherwise), so attributions read as
    support for the prediction regardless of the predicted class.

    Raises NothingToAttributeError when both selection stages come back
    empty (e.g. a constant scorer).
    """
    core, gaps = _select_core(f, x, cfg)
    positive, deltas = _select_positive(f, x, core, cfg)
    trace = SelectionTrace(tuple(zip(core, gaps)), tuple(zip(positive, deltas)))
    selected = core + positive
    if not selected:
        raise NothingToAttributeError("selection stages found no features to attribute")
    ts = build_surrogate_set(f, x, selected, cfg)
    original = f.score(x)
    oriented = ts.y if original >= 0.5 else 1.0 - ts.y
    fit_set = SurrogateTrainingSet(ts.X, oriented, ts.feature_ids)
    w, intercept = ridge_fit(fit_set, cfg.alpha)
    resid = fit_set.X @ w + intercept - fit_set.y
    report = AttributionReport(
        sample_id=sample_id,
        original_score=original,
        selected=tuple(selected),
        attributions=w,
        intercept=intercept,
        trace=trace,
        fit_rms_residual=float(np.sqrt(np.mean(resid**2))),
    )
    gaps_seq = [gap for _, gap in trace.core]
    assert all(b < a for a, b in zip(gaps_seq, gaps_seq[1:])), "core gap sequence must decrease"
    return report
