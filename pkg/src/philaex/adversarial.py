"""Evasion-attack generation: add-only feature activation via a genetic algorithm.

Candidates are bit-strings over the addable features that are absent from the
seed sample. Fitness is the model's benign-class score of the candidate, so
maximizing fitness drives the positive-classified seed across the decision
boundary without touching any feature it already has.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, FeatureVector, TfIdfEncoder
from .models import ScoreModel

__all__ = [
    "NotPositiveSeedError",
    "AttackFailedError",
    "AttackConfig",
    "AdversarialSample",
    "generate",
    "build_attack_set",
    "attack_set_to_jsonl",
]

_FITNESS_TIE_TOL = 1e-12


class NotPositiveSeedError(ValueError):
    """The seed sample is not classified positive, so there is nothing to evade."""


class AttackFailedError(RuntimeError):
    """No seed produced a successful evasion; carries per-seed diagnostics."""

    def __init__(self, message: str, diagnostics: list[dict]):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class AttackConfig:
    addable_features: frozenset[int] = field(default_factory=frozenset)
    population_size: int = 50
    max_generations: int = 500
    stable_rounds: int = 10
    fitness_target: float = 0.99
    mutation_rate: float = 0.01
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "addable_features", frozenset(self.addable_features))
        if not self.addable_features:
            raise ValueError("addable_features must be non-empty")
        if not 0 < self.mutation_rate < 1:
            raise ValueError("mutation_rate must be in (0, 1)")
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.max_generations < 1 or self.stable_rounds < 1:
            raise ValueError("max_generations and stable_rounds must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")


@dataclass
class AdversarialSample:
    """Outcome of one evasion attempt (successful or not)."""

    base: FeatureVector
    activated: tuple[int, ...]
    final_score: float
    generations_used: int
    base_id: int | str | None = None

    @property
    def success(self) -> bool:
        """True when the evaded sample scores benign."""
        return self.final_score > 0.5

    def adversarial_vector(self, value: float = 1.0) -> FeatureVector:
        """The base sample with the activated features set (binary spaces)."""
        return self.base.adding({fid: value for fid in self.activated})

    def to_dict(self) -> dict:
        return {
            "base_id": self.base_id,
            "activated": list(self.activated),
            "final_score": self.final_score,
            "generations_used": self.generations_used,
        }


def _binary_materializer(base: FeatureVector):
    def materialize(ids: list[int]) -> FeatureVector:
        return base.adding({fid: 1.0 for fid in ids})

    return materialize


def _tfidf_materializer(encoder: TfIdfEncoder, raw_base: FeatureVector):
    # An added feature changes every coordinate through renormalization,
    # so the candidate is re-encoded from raw counts each time.
    def materialize(ids: list[int]) -> FeatureVector:
        return encoder.encode(raw_base.adding({fid: 1.0 for fid in ids}))

    return materialize


def generate(
    f: ScoreModel,
    seed_sample: FeatureVector,
    cfg: AttackConfig,
    *,
    encoder: TfIdfEncoder | None = None,
    rng: np.random.Generator | None = None,
    base_id: int | str | None = None,
) -> AdversarialSample:
    """Evolve an add-only evasive variant of a positive-classified sample.

    With ``encoder`` given, ``seed_sample`` is a raw count vector and every
    candidate is re-encoded (tf-idf with renormalization); otherwise features
    are activated with value 1 directly in model space.

    Termination is the first of: the generation cap, the best fitness holding
    steady for ``stable_rounds`` generations, or the best fitness exceeding
    ``fitness_target``. The returned sample is the best candidate either way;
    ``success`` tells whether it actually evades.
    """
    if encoder is not None:
        base = encoder.encode(seed_sample)
        materialize = _tfidf_materializer(encoder, seed_sample)
    else:
        base = seed_sample
        materialize = _binary_materializer(seed_sample)
    base_score = f.score(base)
    if base_score <= 0.5:
        raise NotPositiveSeedError(f"not a positive seed (score {base_score:.4f})")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    addable = sorted(set(cfg.addable_features) - set(seed_sample.support()))
    n_bits = len(addable)
    addable_arr = np.array(addable, dtype=int)
    pop = rng.integers(0, 2, size=(cfg.population_size, n_bits), dtype=np.int8)

    def bits_to_ids(bits: np.ndarray) -> list[int]:
        return addable_arr[bits == 1].tolist()

    best_bits = pop[0].copy()
    best_fitness = -np.inf
    prev_best = None
    stable = 0
    generations = 0
    for generation in range(1, cfg.max_generations + 1):
        generations = generation
        candidates = [materialize(bits_to_ids(bits)) for bits in pop]
        fitness = 1.0 - f.batch_score(candidates)
        gen_best = int(np.argmax(fitness))
        if fitness[gen_best] > best_fitness:
            best_fitness = float(fitness[gen_best])
            best_bits = pop[gen_best].copy()
        if prev_best is not None and abs(best_fitness - prev_best) <= _FITNESS_TIE_TOL:
            stable += 1
        else:
            stable = 0
        prev_best = best_fitness
        if best_fitness > cfg.fitness_target or stable >= cfg.stable_rounds:
            break
        if generation == cfg.max_generations:
            break
        nxt = np.empty_like(pop)
        nxt[0] = best_bits
        for i in range(1, cfg.population_size):
            parents = []
            for _ in range(2):
                a, b = rng.integers(0, cfg.population_size, size=2)
                parents.append(pop[a] if fitness[a] >= fitness[b] else pop[b])
            take_first = rng.random(n_bits) < 0.5
            child = np.where(take_first, parents[0], parents[1])
            flips = rng.random(n_bits) < cfg.mutation_rate
            nxt[i] = np.where(flips, 1 - child, child)
        pop = nxt
    return AdversarialSample(
        base=base,
        activated=tuple(bits_to_ids(best_bits)),
        final_score=best_fitness,
        generations_used=generations,
        base_id=base_id,
    )


def _seed_rng(seed: int, index: int) -> np.random.Generator:
    # Per-seed streams keyed by (seed, sample index) so results do not depend
    # on worker scheduling.
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def build_attack_set(
    f: ScoreModel,
    seeds: Dataset,
    count: int,
    cfg: AttackConfig,
    *,
    encoder: TfIdfEncoder | None = None,
    jobs: int = 1,
) -> list[AdversarialSample]:
    """Attack randomly drawn positive-classified seeds until ``count`` succeed.

    Raises AttackFailedError with per-seed diagnostics if every attempted
    seed fails. ``jobs`` > 1 attacks seeds in parallel; outcomes are collected
    in draw order so the result is identical to a sequential run.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return []
    if encoder is not None:
        scores = f.batch_score([encoder.encode(fv) for fv in seeds.vectors()])
    else:
        scores = f.batch_score(seeds.vectors())
    positive = [i for i, s in enumerate(scores) if s > 0.5]
    if not positive:
        raise NotPositiveSeedError("no positive-classified sample in the seed set")
    order = np.random.default_rng(cfg.seed).permutation(positive).tolist()

    def attack_one(idx: int) -> AdversarialSample:
        return generate(
            f,
            seeds.samples[idx][0],
            cfg,
            encoder=encoder,
            rng=_seed_rng(cfg.seed, idx),
            base_id=idx,
        )

    successes: list[AdversarialSample] = []
    diagnostics: list[dict] = []
    if jobs <= 1:
        for idx in order:
            adv = attack_one(idx)
            diagnostics.append(adv.to_dict())
            if adv.success:
                successes.append(adv)
            if len(successes) >= count:
                break
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            cursor = 0
            while cursor < len(order) and len(successes) < count:
                chunk = order[cursor : cursor + jobs]
                cursor += len(chunk)
                for adv in pool.map(attack_one, chunk):
                    diagnostics.append(adv.to_dict())
                    if adv.success and len(successes) < count:
                        successes.append(adv)
    if not successes:
        raise AttackFailedError(
            f"no successful evasion among {len(diagnostics)} seeds", diagnostics
        )
    return successes


def attack_set_to_jsonl(samples: list[AdversarialSample]) -> str:
    """One JSON object per line: {base_id, activated, final_score, generations_used}."""
    return "".join(json.dumps(s.to_dict()) + "\n" for s in samples)
