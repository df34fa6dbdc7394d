"""Explanation-fidelity metrics and comparison baselines.

Three protocols are implemented:

* good-explanation rate: over an attack set, the share of adversarial samples
  whose activated features are (at least to a threshold fraction) attributed
  positive values;
* deduction test: zero the top-attributed features of a positive sample and
  see whether the positive prediction survives;
* augmentation test: copy the top-attributed features of a positive sample
  into a benign one and see whether the prediction turns positive.

The PCR reported by the curve sweeps is the positive classification rate:
the fraction of manipulated samples the model still (or newly) classifies
positive. Deduction wants it low, augmentation wants it high.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .adversarial import AdversarialSample
from .data import Dataset, FeatureVector
from .explainer import (
    AttributionReport,
    ExplainerConfig,
    NothingToAttributeError,
    SelectionTrace,
    explain,
)
from .models import ScoreModel

__all__ = [
    "EvaluationCurve",
    "BaselineExplainer",
    "ExplainMethod",
    "make_method",
    "good_explanation_rate",
    "good_explanation_curve",
    "deduction_test",
    "augmentation_test",
    "pcr_curve",
    "curves_to_csv",
    "curves_to_json",
]

ExplainMethod = Callable[[ScoreModel, FeatureVector, object], AttributionReport]


@dataclass
class EvaluationCurve:
    """Metric values over a sweep of one parameter (threshold or k)."""

    points: list[tuple[float, float]]
    metric: str
    method: str
    mode: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        params = [p for p, _ in self.points]
        if any(b <= a for a, b in zip(params, params[1:])):
            raise ValueError("curve parameters must be strictly increasing")
        for _, value in self.points:
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"metric value {value} outside [0, 1]")

    def values(self) -> list[float]:
        return [v for _, v in self.points]

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "method": self.method,
            "mode": self.mode,
            "points": [{"parameter": p, "value": v} for p, v in self.points],
            "diagnostics": self.diagnostics,
        }


def curves_to_csv(curves: list[EvaluationCurve]) -> str:
    lines = ["parameter,metric,method,mode"]
    for curve in curves:
        for p, v in curve.points:
            lines.append(f"{p},{v},{curve.method},{curve.mode}")
    return "\n".join(lines) + "\n"


def curves_to_json(curves: list[EvaluationCurve], indent: int | None = None) -> str:
    return json.dumps([c.to_dict() for c in curves], indent=indent)


@dataclass
class BaselineExplainer:
    """Comparison explainers: ``random`` i.i.d. attributions over the sample's
    support, or a ``lime-style`` locally weighted linear fit on mask
    perturbations over the full support."""

    kind: str
    perturbation_count: int = 1000
    kernel_width: float = 0.75
    alpha: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("random", "lime-style"):
            raise ValueError(f"unknown baseline kind {self.kind!r}")
        if self.perturbation_count < 2 or self.kernel_width <= 0 or self.alpha <= 0:
            raise ValueError("bad baseline parameters")

    def explain(
        self, f: ScoreModel, x: FeatureVector, sample_id: int | str | None = None
    ) -> AttributionReport:
        support = x.support()
        if not support:
            raise NothingToAttributeError("sample has no nonzero features")
        original = f.score(x)
        if self.kind == "random":
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, *support]))
            attrs = rng.standard_normal(len(support))
            intercept = 0.0
            resid = 0.0
        else:
            attrs, intercept, resid = self._lime_fit(f, x, support, original)
        return AttributionReport(
            sample_id=sample_id,
            original_score=original,
            selected=support,
            attributions=attrs,
            intercept=intercept,
            trace=SelectionTrace((), ()),
            fit_rms_residual=resid,
        )

    def _lime_fit(self, f, x, support, original):
        n = len(support)
        k = max(self.perturbation_count, n + 2)
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, *support]))
        masks = np.ones((k, n))
        masks[1:] = rng.integers(0, 2, size=(k - 1, n)).astype(float)
        sel = np.array(support)
        rows = [x.restrict(sel[mask == 1.0].tolist()) for mask in masks]
        y = f.batch_score(rows)
        if original < 0.5:
            y = 1.0 - y
        dist = 1.0 - masks.mean(axis=1)
        wts = np.exp(-(dist**2) / self.kernel_width**2)
        B = np.hstack([np.ones((k, 1)), masks])
        WB = B * wts[:, None]
        A = B.T @ WB
        A[1:, 1:] += self.alpha * np.eye(n)
        beta = cho_solve(cho_factor(A), WB.T @ y)
        pred = B @ beta
        resid = float(np.sqrt(np.mean((pred - y) ** 2)))
        return beta[1:], float(beta[0]), resid


def make_method(
    name: str,
    explainer_cfg: ExplainerConfig | None = None,
    seed: int = 0,
    perturbation_count: int = 1000,
    kernel_width: float = 0.75,
) -> ExplainMethod:
    """Build a uniform (model, sample, id) -> report callable by method name."""
    if name == "philaex":
        cfg = explainer_cfg or ExplainerConfig(seed=seed)
        return lambda f, x, sid=None: explain(f, x, cfg, sample_id=sid)
    if name in ("random", "lime"):
        baseline = BaselineExplainer(
            kind="random" if name == "random" else "lime-style",
            perturbation_count=perturbation_count,
            kernel_width=kernel_width,
            seed=seed,
        )
        return lambda f, x, sid=None: baseline.explain(f, x, sample_id=sid)
    raise ValueError(f"unknown method {name!r}")


def good_explanation_rate(
    pairs: list[tuple[AdversarialSample, AttributionReport]],
    threshold: float,
    require_any_positive: bool = False,
) -> float:
    """Share of adversarial samples whose activated features are flagged.

    A sample counts as well explained when at least ``threshold`` of its
    activated features received a positive attribution (with threshold 0
    vacuously true unless ``require_any_positive``). Samples with empty
    activated sets are excluded from the denominator.
    """
    if not pairs:
        raise ValueError("no samples to evaluate")
    counted = 0
    good = 0
    for adv, report in pairs:
        if not adv.activated:
            continue
        positive = sum(1 for fid in adv.activated if report.attribution_of(fid) > 0)
        fraction = positive / len(adv.activated)
        counted += 1
        if fraction >= threshold and (positive >= 1 or not require_any_positive):
            good += 1
    if counted == 0:
        raise ValueError("every sample had an empty activated set")
    return good / counted


def good_explanation_curve(
    pairs: list[tuple[AdversarialSample, AttributionReport]],
    thresholds: list[float],
    method: str,
    require_any_positive: bool = False,
) -> EvaluationCurve:
    excluded = sum(1 for adv, _ in pairs if not adv.activated)
    points = [
        (t, good_explanation_rate(pairs, t, require_any_positive)) for t in thresholds
    ]
    return EvaluationCurve(
        points=points,
        metric="good_explanation_rate",
        method=method,
        mode="good-explanation",
        diagnostics={"samples": len(pairs) - excluded, "excluded_empty_activated": excluded},
    )


def _top_attributed(report: AttributionReport, k: int, what: str) -> list[int]:
    if k > len(report.selected):
        warnings.warn(
            f"{what}: k={k} exceeds the {len(report.selected)} selected features; clamped",
            stacklevel=3,
        )
        k = len(report.selected)
    if len(report.selected) and not report.attributions.any():
        warnings.warn(f"{what}: all attributions are zero, falling back to id order", stacklevel=3)
    return report.top_features(k)


def deduction_test(
    f: ScoreModel, x: FeatureVector, report: AttributionReport, k: int
) -> bool:
    """Zero the k top-attributed features of a positive sample; True if the
    positive prediction survives (low retention means a faithful explanation)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not f.score(x) > 0.5:
        raise ValueError("deduction test requires a positive-classified sample")
    removed = _top_attributed(report, k, "deduction")
    return f.score(x.without(removed)) > 0.5


def augmentation_test(
    f: ScoreModel,
    benign: FeatureVector,
    source_report: AttributionReport,
    source: FeatureVector,
    k: int,
) -> bool:
    """Copy the k top-attributed feature values of a positive source into a
    benign sample; True if the prediction flips to positive."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if f.score(benign) > 0.5:
        raise ValueError("augmentation test requires a benign-classified sample")
    if k == 0:
        return False
    copied = _top_attributed(source_report, k, "augmentation")
    modified = benign.adding({fid: source.value(fid) for fid in copied})
    return f.score(modified) > 0.5


def pcr_curve(
    f: ScoreModel,
    samples: Dataset,
    method: ExplainMethod,
    mode: str,
    ks: list[int],
    method_name: str = "",
    max_targets: int | None = None,
) -> EvaluationCurve:
    """Positive classification rate after top-k manipulation, swept over k.

    ``deduction`` explains and strips positive-classified samples;
    ``augmentation`` explains positive samples and copies their top features
    into benign ones (targets cycle through the explained sources). Samples
    whose explanation selects no features are excluded and counted in the
    curve diagnostics.
    """
    if mode not in ("deduction", "augmentation"):
        raise ValueError(f"unknown mode {mode!r}")
    scores = f.batch_score(samples.vectors())
    positive = [i for i, s in enumerate(scores) if s > 0.5]
    benign = [i for i, s in enumerate(scores) if s <= 0.5]
    excluded = 0

    if mode == "deduction":
        targets = positive[:max_targets] if max_targets else positive
        if not targets:
            raise ValueError("no positive-classified samples to manipulate")
        explained = []
        for idx in targets:
            x = samples.samples[idx][0]
            try:
                explained.append((x, method(f, x, idx)))
            except NothingToAttributeError:
                excluded += 1
        if not explained:
            raise ValueError("every explanation came back empty")
        points = []
        for k in ks:
            modified = [x.without(rep.top_features(k)) for x, rep in explained]
            retained = f.batch_score(modified) > 0.5
            points.append((float(k), float(np.mean(retained))))
        n_evaluated = len(explained)
    else:
        sources = positive[:max_targets] if max_targets else positive
        targets = benign[:max_targets] if max_targets else benign
        if not sources:
            raise ValueError("no positive-classified source samples")
        if not targets:
            raise ValueError("no benign-classified samples to manipulate")
        source_reports = []
        for idx in sources:
            x = samples.samples[idx][0]
            try:
                source_reports.append((x, method(f, x, idx)))
            except NothingToAttributeError:
                excluded += 1
        if not source_reports:
            raise ValueError("every source explanation came back empty")
        paired = [
            (samples.samples[t][0], *source_reports[j % len(source_reports)])
            for j, t in enumerate(targets)
        ]
        points = []
        for k in ks:
            modified = [
                target.adding({fid: src.value(fid) for fid in rep.top_features(k)})
                for target, src, rep in paired
            ]
            flipped = f.batch_score(modified) > 0.5
            points.append((float(k), float(np.mean(flipped))))
        n_evaluated = len(paired)

    return EvaluationCurve(
        points=points,
        metric="pcr",
        method=method_name,
        mode=mode,
        diagnostics={"samples": n_evaluated, "excluded_empty_selection": excluded},
    )
