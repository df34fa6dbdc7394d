"""Command-line front end: train, explain, attack, evaluate.

Every command echoes its resolved configuration to ``run_config.json`` in the
output directory; feeding that file back through ``--config`` reproduces the
run bit for bit. Exit codes: 0 success, 2 usage error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .adversarial import AttackConfig, attack_set_to_jsonl, build_attack_set
from .data import Dataset, fit_tfidf, load_dataset, train_test_split
from .evaluation import (
    curves_to_csv,
    curves_to_json,
    good_explanation_curve,
    good_explanation_rate,
    make_method,
    pcr_curve,
)
from .explainer import ExplainerConfig, NothingToAttributeError, explain
from .models import ModelBundle, load_model, save_model, train_logistic, train_random_forest

__all__ = ["main"]


class UsageError(ValueError):
    """Bad flag combinations detected after argparse."""


def _parse_floats(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip() != ""]


def _parse_ints(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip() != ""]


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """CLI value if given, else config-file value, else built-in default."""
    from_file = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            echoed = json.load(fh)
        from_file = echoed.get("params", {})
    params = {}
    for key, default in defaults.items():
        cli_value = getattr(args, key, None)
        if cli_value is not None:
            params[key] = cli_value
        elif key in from_file:
            params[key] = from_file[key]
        else:
            params[key] = default
    return params


def _echo_config(command: str, params: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, "params": params}
    (out_dir / "run_config.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _load_data(params: dict) -> Dataset:
    return load_dataset(params["data"], format=params["format"])


def _prepare_splits(dataset: Dataset, params: dict):
    train, test = train_test_split(dataset, params["train_fraction"], params["seed"])
    fmt = params["format"]
    if fmt == "auto":
        fmt = "numeric-csv" if str(params["data"]).endswith(".csv") else "token-lists"
    use_tfidf = params["tfidf"] == "on" or (params["tfidf"] == "auto" and fmt == "token-lists")
    encoder = None
    if use_tfidf:
        encoder = fit_tfidf(train)
        train = encoder.encode_dataset(train)
        test = encoder.encode_dataset(test)
    return train, test, encoder


def _classification_metrics(model, test: Dataset) -> dict:
    scores = model.batch_score(test.vectors())
    labels = test.labels()
    predicted = scores > 0.5
    tp = int(((labels == 1) & predicted).sum())
    fn = int(((labels == 1) & ~predicted).sum())
    fp = int(((labels == 0) & predicted).sum())
    tn = int(((labels == 0) & ~predicted).sum())
    return {
        "accuracy": (tp + tn) / max(1, len(labels)),
        "tpr": tp / max(1, tp + fn),
        "fpr": fp / max(1, fp + tn),
        "test_samples": len(labels),
    }


TRAIN_DEFAULTS = {
    "data": None,
    "format": "auto",
    "model_kind": "logistic",
    "train_fraction": 0.67,
    "seed": 0,
    "tfidf": "auto",
    "l2": 1e-4,
    "lr": 0.1,
    "epochs": 200,
    "trees": 100,
    "max_depth": 10,
    "out_dir": ".",
    "model_name": "model.json",
    "metrics_name": "metrics.json",
}


def cmd_train(args: argparse.Namespace) -> int:
    params = _resolve(args, TRAIN_DEFAULTS)
    if params["data"] is None:
        raise UsageError("--data is required")
    if params["model_kind"] not in ("logistic", "forest"):
        raise UsageError(f"unknown model kind {params['model_kind']!r}")
    dataset = _load_data(params)
    train, test, encoder = _prepare_splits(dataset, params)
    if params["model_kind"] == "logistic":
        model = train_logistic(
            train,
            l2=params["l2"],
            epochs=params["epochs"],
            lr=params["lr"],
            seed=params["seed"],
        )
    else:
        model = train_random_forest(
            train,
            tree_count=params["trees"],
            max_depth=params["max_depth"],
            seed=params["seed"],
        )
    out_dir = Path(params["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    save_model(model, out_dir / params["model_name"], vocabulary=dataset.vocabulary, encoder=encoder)
    metrics = _classification_metrics(model, test)
    (out_dir / params["metrics_name"]).write_text(
        json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _echo_config("train", params, out_dir)
    print(
        f"trained {params['model_kind']} on {len(train)} samples: "
        f"accuracy={metrics['accuracy']:.4f} tpr={metrics['tpr']:.4f} fpr={metrics['fpr']:.4f}"
    )
    return 0


EXPLAIN_DEFAULTS = {
    "model": None,
    "data": None,
    "format": "auto",
    "indices": None,
    "limit": None,
    "seed": 0,
    "max_core_features": 10,
    "alpha": 1.0,
    "mask_samples": None,
    "epsilon": 1e-6,
    "timing": False,
    "jobs": 1,
    "out_dir": ".",
}


def _model_space_vectors(bundle: ModelBundle, dataset: Dataset):
    if bundle.encoder is not None:
        return [bundle.encoder.encode(fv) for fv in dataset.vectors()]
    return dataset.vectors()


def cmd_explain(args: argparse.Namespace) -> int:
    params = _resolve(args, EXPLAIN_DEFAULTS)
    if params["model"] is None or params["data"] is None:
        raise UsageError("--model and --data are required")
    bundle = load_model(params["model"])
    dataset = _load_data(params)
    vectors = _model_space_vectors(bundle, dataset)
    indices = (
        _parse_ints(params["indices"])
        if params["indices"]
        else list(range(len(vectors)))
    )
    if params["limit"] is not None:
        indices = indices[: params["limit"]]
    for idx in indices:
        if not 0 <= idx < len(vectors):
            raise UsageError(f"sample index {idx} out of range")
        if vectors[idx].dim != bundle.model.dim:
            raise ValueError(f"sample {idx} has dim {vectors[idx].dim}, model expects {bundle.model.dim}")
    cfg = ExplainerConfig(
        max_core_features=params["max_core_features"],
        alpha=params["alpha"],
        mask_samples=params["mask_samples"],
        contribution_epsilon=params["epsilon"],
        seed=params["seed"],
    )
    names = bundle.vocabulary or dataset.vocabulary

    def explain_one(idx: int) -> tuple[str, float]:
        start = time.perf_counter()
        try:
            line = explain(bundle.model, vectors[idx], cfg, sample_id=idx).to_json(names)
        except NothingToAttributeError:
            line = json.dumps({"sample_id": idx, "error": "nothing-to-attribute"})
        return line, time.perf_counter() - start

    if params["jobs"] > 1:
        with ThreadPoolExecutor(max_workers=params["jobs"]) as pool:
            results = list(pool.map(explain_one, indices))
    else:
        results = [explain_one(idx) for idx in indices]
    out_dir = Path(params["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "reports.jsonl").write_text(
        "".join(line + "\n" for line, _ in results), encoding="utf-8"
    )
    _echo_config("explain", params, out_dir)
    print(f"wrote {len(results)} reports to {out_dir / 'reports.jsonl'}")
    if params["timing"]:
        times = [elapsed for _, elapsed in results]
        median = statistics.median(times) if times else 0.0
        (out_dir / "timing.json").write_text(
            json.dumps({"per_sample_seconds": times, "median_seconds": median}, indent=2) + "\n",
            encoding="utf-8",
        )
        print(f"median explanation time: {median:.4f}s over {len(times)} samples")
    return 0


ATTACK_DEFAULTS = {
    "model": None,
    "data": None,
    "format": "auto",
    "count": 50,
    "addable_names": None,
    "addable_prefix": None,
    "addable_file": None,
    "population": 50,
    "max_generations": 500,
    "stable_rounds": 10,
    "fitness_target": 0.99,
    "mutation_rate": 0.01,
    "seed": 0,
    "jobs": 1,
    "out_dir": ".",
}


def _resolve_addable(params: dict, dataset: Dataset, bundle: ModelBundle) -> frozenset[int]:
    vocabulary = bundle.vocabulary or dataset.vocabulary
    by_name = {name: fid for fid, name in vocabulary.items()}
    names: list[str] = []
    if params["addable_names"]:
        names.extend(n.strip() for n in params["addable_names"].split(",") if n.strip())
    if params["addable_file"]:
        text = Path(params["addable_file"]).read_text(encoding="utf-8")
        names.extend(line.strip() for line in text.splitlines() if line.strip())
    ids = set()
    for name in names:
        if name not in by_name:
            raise UsageError(f"unknown addable feature name {name!r}")
        ids.add(by_name[name])
    if params["addable_prefix"]:
        ids.update(fid for fid, name in vocabulary.items() if name.startswith(params["addable_prefix"]))
    if not ids:
        raise UsageError("no addable features resolved; use --addable-names/--addable-prefix/--addable-file")
    return frozenset(ids)


def cmd_attack(args: argparse.Namespace) -> int:
    params = _resolve(args, ATTACK_DEFAULTS)
    if params["model"] is None or params["data"] is None:
        raise UsageError("--model and --data are required")
    bundle = load_model(params["model"])
    dataset = _load_data(params)
    out_dir = Path(params["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    if params["count"] == 0:
        (out_dir / "attack.jsonl").write_text("", encoding="utf-8")
        _echo_config("attack", params, out_dir)
        print("wrote 0 adversarial samples")
        return 0
    addable = _resolve_addable(params, dataset, bundle)
    cfg = AttackConfig(
        addable_features=addable,
        population_size=params["population"],
        max_generations=params["max_generations"],
        stable_rounds=params["stable_rounds"],
        fitness_target=params["fitness_target"],
        mutation_rate=params["mutation_rate"],
        seed=params["seed"],
    )
    samples = build_attack_set(
        bundle.model,
        dataset,
        params["count"],
        cfg,
        encoder=bundle.encoder,
        jobs=params["jobs"],
    )
    (out_dir / "attack.jsonl").write_text(attack_set_to_jsonl(samples), encoding="utf-8")
    _echo_config("attack", params, out_dir)
    print(f"wrote {len(samples)} adversarial samples to {out_dir / 'attack.jsonl'}")
    return 0


EVALUATE_DEFAULTS = {
    "model": None,
    "data": None,
    "format": "auto",
    "mode": None,
    "methods": "philaex,random,lime",
    "thresholds": "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9",
    "ks": "1,5,10,20",
    "attack": None,
    "max_targets": None,
    "seed": 0,
    "max_core_features": 10,
    "alpha": 1.0,
    "mask_samples": None,
    "epsilon": 1e-6,
    "out_dir": ".",
}

_KNOWN_METHODS = ("philaex", "random", "lime")
_MODES = ("good-explanation", "deduction", "augmentation")


def _load_attack_pairs(params: dict, dataset: Dataset, bundle: ModelBundle):
    """Rebuild adversarial vectors from an attack JSONL plus the seed dataset."""
    from .adversarial import AdversarialSample

    path = params["attack"]
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            base_id = obj["base_id"]
            raw_base = dataset.samples[base_id][0]
            activated = tuple(obj["activated"])
            if bundle.encoder is not None:
                adv_vec = bundle.encoder.encode(raw_base.adding({fid: 1.0 for fid in activated}))
                base_vec = bundle.encoder.encode(raw_base)
            else:
                adv_vec = raw_base.adding({fid: 1.0 for fid in activated})
                base_vec = raw_base
            sample = AdversarialSample(
                base=base_vec,
                activated=activated,
                final_score=obj["final_score"],
                generations_used=obj["generations_used"],
                base_id=base_id,
            )
            pairs.append((sample, adv_vec))
    if not pairs:
        raise ValueError(f"{path}: no adversarial samples")
    return pairs


def cmd_evaluate(args: argparse.Namespace) -> int:
    params = _resolve(args, EVALUATE_DEFAULTS)
    if params["model"] is None or params["data"] is None or params["mode"] is None:
        raise UsageError("--model, --data and --mode are required")
    if params["mode"] not in _MODES:
        raise UsageError(f"unknown mode {params['mode']!r}")
    method_names = [m.strip() for m in params["methods"].split(",") if m.strip()]
    for name in method_names:
        if name not in _KNOWN_METHODS:
            raise UsageError(f"unknown method {name!r}; known: {', '.join(_KNOWN_METHODS)}")
    bundle = load_model(params["model"])
    dataset = _load_data(params)
    cfg = ExplainerConfig(
        max_core_features=params["max_core_features"],
        alpha=params["alpha"],
        mask_samples=params["mask_samples"],
        contribution_epsilon=params["epsilon"],
        seed=params["seed"],
    )
    methods = {
        name: make_method(name, explainer_cfg=cfg, seed=params["seed"])
        for name in method_names
    }
    curves = []
    if params["mode"] == "good-explanation":
        if params["attack"] is None:
            raise UsageError("--attack is required for good-explanation mode")
        thresholds = _parse_floats(params["thresholds"])
        attack_pairs = _load_attack_pairs(params, dataset, bundle)
        for name, method in methods.items():
            report_pairs = []
            for adv, vec in attack_pairs:
                try:
                    report_pairs.append((adv, method(bundle.model, vec, adv.base_id)))
                except NothingToAttributeError:
                    continue
            curve = good_explanation_curve(report_pairs, thresholds, method=name)
            curve.diagnostics["at_least_one_positive_rate"] = good_explanation_rate(
                report_pairs, 0.0, require_any_positive=True
            )
            curves.append(curve)
    else:
        ks = _parse_ints(params["ks"])
        samples = dataset
        if bundle.encoder is not None:
            samples = bundle.encoder.encode_dataset(dataset)
        for name, method in methods.items():
            curves.append(
                pcr_curve(
                    bundle.model,
                    samples,
                    method,
                    params["mode"],
                    ks,
                    method_name=name,
                    max_targets=params["max_targets"],
                )
            )
    out_dir = Path(params["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "curves.csv").write_text(curves_to_csv(curves), encoding="utf-8")
    (out_dir / "curves.json").write_text(curves_to_json(curves, indent=2) + "\n", encoding="utf-8")
    _echo_config("evaluate", params, out_dir)
    print(f"wrote {len(curves)} curves to {out_dir / 'curves.csv'}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="philaex",
        description="Feature-attribution explanations, evasion attacks and fidelity evaluation for binary classifiers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="run_config.json from a previous run; CLI flags override it")
        p.add_argument("--out-dir", dest="out_dir", help="output directory (default .)")
        p.add_argument("--seed", type=int, help="seed for all randomness in this command")

    p_train = sub.add_parser("train", help="train a built-in classifier and report test metrics")
    add_common(p_train)
    p_train.add_argument("--data", help="dataset path")
    p_train.add_argument("--format", choices=["auto", "token-lists", "numeric-csv"])
    p_train.add_argument("--model-kind", dest="model_kind", choices=["logistic", "forest"])
    p_train.add_argument("--train-fraction", dest="train_fraction", type=float)
    p_train.add_argument("--tfidf", choices=["auto", "on", "off"])
    p_train.add_argument("--l2", type=float)
    p_train.add_argument("--lr", type=float)
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--trees", type=int)
    p_train.add_argument("--max-depth", dest="max_depth", type=int)
    p_train.add_argument("--out", dest="model_name", help="model file name inside --out-dir")
    p_train.add_argument("--metrics-out", dest="metrics_name")
    p_train.set_defaults(func=cmd_train)

    p_explain = sub.add_parser("explain", help="emit attribution reports for dataset samples")
    add_common(p_explain)
    p_explain.add_argument("--model", help="model JSON from train")
    p_explain.add_argument("--data", help="dataset path")
    p_explain.add_argument("--format", choices=["auto", "token-lists", "numeric-csv"])
    p_explain.add_argument("--indices", help="comma-separated sample indices (default: all)")
    p_explain.add_argument("--limit", type=int)
    p_explain.add_argument("--max-core-features", dest="max_core_features", type=int)
    p_explain.add_argument("--alpha", type=float)
    p_explain.add_argument("--mask-samples", dest="mask_samples", type=int)
    p_explain.add_argument("--epsilon", type=float)
    p_explain.add_argument("--timing", action=argparse.BooleanOptionalAction)
    p_explain.add_argument("--jobs", type=int)
    p_explain.set_defaults(func=cmd_explain)

    p_attack = sub.add_parser("attack", help="generate add-only adversarial samples")
    add_common(p_attack)
    p_attack.add_argument("--model", help="model JSON from train")
    p_attack.add_argument("--data", help="seed dataset path")
    p_attack.add_argument("--format", choices=["auto", "token-lists", "numeric-csv"])
    p_attack.add_argument("--count", type=int)
    p_attack.add_argument("--addable-names", dest="addable_names")
    p_attack.add_argument("--addable-prefix", dest="addable_prefix")
    p_attack.add_argument("--addable-file", dest="addable_file")
    p_attack.add_argument("--population", type=int)
    p_attack.add_argument("--max-generations", dest="max_generations", type=int)
    p_attack.add_argument("--stable-rounds", dest="stable_rounds", type=int)
    p_attack.add_argument("--fitness-target", dest="fitness_target", type=float)
    p_attack.add_argument("--mutation-rate", dest="mutation_rate", type=float)
    p_attack.add_argument("--jobs", type=int)
    p_attack.set_defaults(func=cmd_attack)

    p_eval = sub.add_parser("evaluate", help="fidelity curves: good-explanation, deduction, augmentation")
    add_common(p_eval)
    p_eval.add_argument("--model", help="model JSON from train")
    p_eval.add_argument("--data", help="dataset path")
    p_eval.add_argument("--format", choices=["auto", "token-lists", "numeric-csv"])
    p_eval.add_argument("--mode", choices=list(_MODES))
    p_eval.add_argument("--methods", help="comma-separated: philaex,random,lime")
    p_eval.add_argument("--thresholds", help="comma-separated for good-explanation")
    p_eval.add_argument("--ks", help="comma-separated feature counts for deduction/augmentation")
    p_eval.add_argument("--attack", help="attack.jsonl for good-explanation mode")
    p_eval.add_argument("--max-targets", dest="max_targets", type=int)
    p_eval.add_argument("--max-core-features", dest="max_core_features", type=int)
    p_eval.add_argument("--alpha", type=float)
    p_eval.add_argument("--mask-samples", dest="mask_samples", type=int)
    p_eval.add_argument("--epsilon", type=float)
    p_eval.set_defaults(func=cmd_evaluate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures map to exit 1 for scripting
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
