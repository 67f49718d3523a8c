"""
Orchestration en ligne de commande - simulation, entraînement, shading et
comparaison des politiques d'enchère
"""

import argparse
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from dotenv import load_dotenv

from .benchmarks import REGISTRY, PolicyContext, create_policy
from .config import DEFAULT_OUTPUT_DIR, OUTPUT_DIR_VARIABLE, ExperimentConfig, PolicyConfig, load_config
from .errors import ConfigError, ShadingError
from .evaluate import (
    compare, paired_surplus_delta, pct_of_optimal, price_regression_metrics, reports_frame, score
)
from .landscape import Request, generate_feedback, generate_requests, log_uniform_factor_policy
from .storage import (
    load_policy, read_feedback, read_requests, read_vocabulary, save_policy, write_csv,
    write_decisions, write_feedback, write_json, write_requests, write_vocabulary
)
from .winrate import Vocabulary

logger = logging.getLogger(__name__)

TRAIN_FEEDBACK = "train_feedback.jsonl"
EVAL_FEEDBACK = "eval_feedback.jsonl"
EVAL_REQUESTS = "eval_requests.jsonl"
VOCABULARY = "vocabulary.json"
DECISIONS = "decisions.jsonl"

# drapeau CLI -> paramètre de politique
POLICY_FLAGS = {
    "target_winrate": "target",
    "factor": "factor",
    "epsilon": "epsilon_relative",
    "max_steps": "max_steps",
    "floor_factor": "floor_factor"
}


def _experiment(args: argparse.Namespace) -> ExperimentConfig:
    """Configuration chargée puis surchargée par les drapeaux"""
    config = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "out", None):
        config.output_dir = args.out
    if getattr(args, "baseline", None):
        config.baseline = args.baseline
    if getattr(args, "reveal_mbtw", None) is not None:
        config.reveal_mbtw = args.reveal_mbtw
    if getattr(args, "policy", None):
        config.policies = [PolicyConfig(name) for name in args.policy]
    overrides = _flag_params(args)
    for policy in config.policies:
        accepted = REGISTRY[policy.name].defaults
        policy.params.update({k: v for k, v in overrides.items() if k in accepted})
    return config


def _flag_params(args: argparse.Namespace) -> Dict[str, Any]:
    return {param: getattr(args, flag) for flag, param in POLICY_FLAGS.items()
            if getattr(args, flag, None) is not None}


def _stream(requests: Sequence[Request]) -> List[Tuple[Any, float]]:
    return [(r.features, r.value) for r in requests]


def simulate_streams(config: ExperimentConfig) -> Dict[str, Any]:
    """Requêtes et retours d'exploration, chacun sur son propre flux aléatoire"""
    landscape = config.landscape_spec()
    vocabulary = config.vocabulary()
    requests = config.requests
    train_requests = generate_requests(requests.categories, vocabulary, requests.value_mu,
                                       requests.value_sigma, config.n_train, config.rng("train_requests"))
    eval_requests = generate_requests(requests.categories, vocabulary, requests.value_mu,
                                      requests.value_sigma, config.n_eval, config.rng("eval_requests"))
    exploration = log_uniform_factor_policy(config.train_bid_policy.low, config.train_bid_policy.high,
                                            config.rng("exploration"))
    train_batch = generate_feedback(landscape, exploration, _stream(train_requests),
                                    config.reveal_mbtw, config.rng("train_auctions"))
    eval_batch = generate_feedback(landscape, exploration, _stream(eval_requests),
                                   config.reveal_mbtw, config.rng("eval_auctions"))
    return {"landscape": landscape, "vocabulary": vocabulary, "train_requests": train_requests,
            "eval_requests": eval_requests, "train": train_batch, "eval": eval_batch}


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _experiment(args)
    streams = simulate_streams(config)
    out = Path(config.output_dir)
    write_feedback(out / TRAIN_FEEDBACK, streams["train"])
    write_feedback(out / EVAL_FEEDBACK, streams["eval"])
    write_requests(out / EVAL_REQUESTS, streams["eval_requests"])
    write_vocabulary(out / VOCABULARY, streams["vocabulary"])
    write_json(out / "config.json", config.to_dict())

    train, evaluation = streams["train"], streams["eval"]
    print(f"🎲 Simulation {streams['landscape'].kind} (graine {config.seed})")
    print(f"   Entraînement: {len(train)} retours, {sum(r.won for r in train)} gains")
    print(f"   Évaluation: {len(evaluation)} retours, {sum(r.won for r in evaluation)} gains")
    print(f"💾 Fichiers écrits dans {out}")
    return 0


def _training_vocabulary(args: argparse.Namespace, config: Optional[ExperimentConfig]) -> Optional[Vocabulary]:
    if args.vocabulary:
        return read_vocabulary(args.vocabulary)
    beside = Path(args.feedback).parent / VOCABULARY
    if beside.exists():
        return read_vocabulary(beside)
    return config.vocabulary() if config else None


def cmd_train(args: argparse.Namespace) -> int:
    name = args.policy[0] if args.policy else None
    if name not in REGISTRY:
        raise ConfigError(f"politique inconnue: {name!r} (connues: {', '.join(sorted(REGISTRY))})")
    config = load_config(args.config) if args.config else None
    records = read_feedback(args.feedback)

    params: Dict[str, Any] = {}
    context = PolicyContext(vocabulary=_training_vocabulary(args, config))
    if config:
        context = replace(config.policy_context(), vocabulary=context.vocabulary)
        configured = [p for p in config.policies if p.name == name]
        params.update(config.policy_params(configured[0]) if configured else {})
    accepted = REGISTRY[name].defaults
    params.update({k: v for k, v in _flag_params(args).items() if k in accepted})

    policy = create_policy(name, context, **params).fit(records)
    out = Path(args.out or _default_out()) / f"{name}.policy.json"
    save_policy(out, policy)

    print(f"🧠 Politique {name} entraînée sur {len(records)} retours")
    for key, value in policy.diagnostics.items():
        print(f"   {key}: {value:.6g}" if isinstance(value, float) else f"   {key}: {value}")
    print(f"💾 Modèle écrit: {out}")
    return 0


def cmd_shade(args: argparse.Namespace) -> int:
    policy = load_policy(args.model, PolicyContext())
    requests = read_requests(args.requests, policy.context.vocabulary)
    started = time.perf_counter()
    decisions = [policy.decide(features, value) for features, value in requests]
    elapsed = time.perf_counter() - started
    out = Path(args.out or _default_out()) / DECISIONS
    write_decisions(out, decisions)

    print(f"🎯 {len(decisions)} décisions ({policy.name})")
    if decisions:
        iterations = np.array([d["iterations"] for d in decisions])
        print(f"   Débit: {len(decisions) / max(elapsed, 1e-9):.0f} requêtes/s")
        print(f"   Itérations: médiane {np.median(iterations):.0f}, max {iterations.max()}")
        print(f"   Non convergées: {sum(not d['converged'] for d in decisions)}")
    print(f"💾 Décisions écrites: {out}")
    return 0


def run_experiment(config: ExperimentConfig) -> Dict[str, Any]:
    """
    Chaîne complète: simulation, entraînement et évaluation de chaque politique

    Toutes les politiques affrontent les mêmes enchères concurrentes (même
    flux aléatoire d'évaluation).
    """
    streams = simulate_streams(config)
    landscape = streams["landscape"]
    evaluation = _stream(streams["eval_requests"])
    oracle_cache: Dict[Any, float] = {}

    reports, batches, diagnostics = {}, {}, {}
    for policy_config in config.policies:
        name = policy_config.name
        policy = create_policy(name, config.policy_context(), **config.policy_params(policy_config))
        policy.fit(streams["train"].records)
        batch = generate_feedback(landscape, policy, evaluation, config.reveal_mbtw, config.rng("eval_auctions"))
        report = score(batch.records)
        report = replace(report, pct_of_optimal=pct_of_optimal(batch.records, landscape, config.grid_n, oracle_cache))
        if policy.estimates_mbtw:
            revealed = [r for r in batch.records if r.min_bid_to_win is not None]
            if len(revealed) >= 2:
                mse, r2 = price_regression_metrics(
                    [policy.predict_price(r.features, r.value) for r in revealed],
                    [r.min_bid_to_win for r in revealed]
                )
                report = replace(report, price_mse=mse, price_r2=r2)

        reports[name], batches[name], diagnostics[name] = report, batch, policy.diagnostics
        logger.info("📊 %s: surplus %.4f, taux de gain %.3f", name, report.surplus, report.win_rate)

    comparison = compare(reports, config.baseline)
    baseline = batches[config.baseline]
    paired = {}
    for name, batch in batches.items():
        if len(batch) == len(baseline) and not batch.rejected and not baseline.rejected:
            delta, se = paired_surplus_delta(batch.records, baseline.records)
            paired[name] = {"mean": delta, "se": se}
    return {"reports": reports, "comparison": comparison, "paired": paired, "diagnostics": diagnostics}


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _experiment(args)
    if config.baseline not in config.policy_names():
        raise ConfigError(f"baseline {config.baseline!r} absente des politiques ({', '.join(config.policy_names())})")
    result = run_experiment(config)
    out = Path(config.output_dir)

    document = {
        "v": 1,
        "baseline": config.baseline,
        "seed": config.seed,
        "policies": {
            name: {**report.to_dict(),
                   "overbid": report.overbid,
                   "diagnostics": result["diagnostics"][name],
                   "paired_surplus_delta": result["paired"].get(name)}
            for name, report in sorted(result["reports"].items())
        }
    }
    write_json(out / "reports.json", document)
    write_csv(out / "metrics.csv", reports_frame(result["reports"]))
    write_csv(out / "comparison.csv", result["comparison"])

    print(f"📊 Comparaison (écarts en % vs {config.baseline}):")
    print(result["comparison"].round(2).to_string())
    for name, report in sorted(result["reports"].items()):
        if report.overbid:
            print(f"⚠️ {name}: part de l'optimum {report.pct_of_optimal:.3f} > 1.02")
    print(f"💾 Rapports écrits dans {out}")
    return 0


def _default_out() -> str:
    return os.getenv(OUTPUT_DIR_VARIABLE) or DEFAULT_OUTPUT_DIR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bid_shading", description="Bid shading en enchères au premier prix")
    parser.add_argument("--verbose", "-v", action="store_true", help="Journalisation détaillée")
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--config", "-c", type=str, help="Configuration JSON d'expérience")
        sub.add_argument("--out", "-o", type=str, help="Dossier de sortie")

    def experiment(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--seed", type=int, help="Graine (remplace celle de la configuration)")
        sub.add_argument("--reveal-mbtw", action=argparse.BooleanOptionalAction, default=None,
                         help="Révéler l'enchère minimale gagnante")

    def hyperparams(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--target-winrate", type=float, help="Taux de gain visé (wr-maintainer)")
        sub.add_argument("--factor", type=float, help="Facteur constant (fixed)")
        sub.add_argument("--epsilon", type=float, help="Précision relative de la bissection (wr)")
        sub.add_argument("--max-steps", type=int, help="Pas maximum de la bissection (wr)")
        sub.add_argument("--floor-factor", type=float, help="Plancher phi * V (wr)")

    simulate = commands.add_parser("simulate", help="Générer requêtes et retours d'enchères")
    common(simulate)
    experiment(simulate)
    simulate.set_defaults(handler=cmd_simulate)

    train = commands.add_parser("train", help="Entraîner une politique sur des retours")
    common(train)
    hyperparams(train)
    train.add_argument("--policy", "-p", nargs=1, required=True, help="Nom de la politique")
    train.add_argument("--feedback", "-f", required=True, help="Fichier de retours (lignes JSON)")
    train.add_argument("--vocabulary", type=str, help="Vocabulaire JSON (défaut: à côté des retours)")
    train.set_defaults(handler=cmd_train)

    shade = commands.add_parser("shade", help="Calculer les enchères de requêtes")
    shade.add_argument("--model", "-m", required=True, help="Document de politique")
    shade.add_argument("--requests", "-r", required=True, help="Fichier de requêtes")
    shade.add_argument("--out", "-o", type=str, help="Dossier de sortie")
    shade.set_defaults(handler=cmd_shade)

    evaluate = commands.add_parser("evaluate", help="Simulation, entraînement et comparaison complets")
    common(evaluate)
    experiment(evaluate)
    hyperparams(evaluate)
    evaluate.add_argument("--policy", "-p", nargs="+", help="Politiques à comparer")
    evaluate.add_argument("--baseline", "-b", type=str, help="Politique de référence")
    evaluate.set_defaults(handler=cmd_evaluate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Point d'entrée principal"""
    load_dotenv()
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.handler(args)
    except ShadingError as e:
        print(f"❌ {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
