"""Command-line front end.

Subcommands:

  simulate CONFIG --out DIR      run the token dynamics, export CSV/JSON
                                 (and an SVG scatter for 2-D runs)
  analyze DIR                    verify the cluster structure of a stored
                                 run and write report.json
  train                          fit the sentiment model on a TSV corpus
  predict                        score one text with a saved model
  evaluate                       loss/accuracy/leader stats over a TSV set

Exit codes: 0 success, 1 bad input, 2 matrix not symmetric positive
definite, 3 a structural verdict failed, 4 training loss went non-finite.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import clusters, dynamics, formats, plots, sentiment
from .geometry import (
    DEFAULT_TIE_TOL,
    HARDMAX,
    SOFTMAX,
    AttentionSpec,
    NotPositiveDefiniteError,
    NotSymmetricError,
    TokenConfiguration,
    factorize_spd,
)

EXIT_OK = 0
EXIT_BAD_INPUT = 1
EXIT_NOT_SPD = 2
EXIT_VERDICT_FALSE = 3
EXIT_NON_FINITE = 4

_CONFIG_KEYS = {
    "tokens",
    "randomGen",
    "A",
    "alpha",
    "mode",
    "tau",
    "tieTol",
    "maxSteps",
    "convergenceTol",
    "stabilityWindow",
    "recordEvery",
    "seed",
}


class BadInputError(ValueError):
    pass


def _load_simulation_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise BadInputError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise BadInputError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise BadInputError("config must be a JSON object")
    unknown = set(cfg) - _CONFIG_KEYS
    if unknown:
        raise BadInputError(f"unknown config keys: {sorted(unknown)}")
    if ("tokens" in cfg) == ("randomGen" in cfg):
        raise BadInputError("config needs exactly one of 'tokens' or 'randomGen'")
    if "alpha" not in cfg:
        raise BadInputError("config needs 'alpha'")
    return cfg


def _tokens_from_config(cfg: dict) -> TokenConfiguration:
    if "tokens" in cfg:
        try:
            return TokenConfiguration(points=np.array(cfg["tokens"], dtype=float))
        except (TypeError, ValueError) as exc:
            raise BadInputError(f"bad 'tokens': {exc}") from None
    gen = cfg["randomGen"]
    if not isinstance(gen, dict) or not {"n", "d"} <= set(gen):
        raise BadInputError("'randomGen' needs at least 'n' and 'd'")
    n, d = int(gen["n"]), int(gen["d"])
    low = float(gen.get("low", -1.0))
    high = float(gen.get("high", 1.0))
    if n < 1 or d < 1 or not low < high:
        raise BadInputError("'randomGen' needs n >= 1, d >= 1, low < high")
    rng = np.random.default_rng(int(cfg.get("seed", 0)))
    return TokenConfiguration(points=rng.uniform(low, high, size=(n, d)))


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _load_simulation_config(args.config)
    z0 = _tokens_from_config(cfg)

    a_raw = np.array(cfg.get("A", np.eye(z0.dim).tolist()), dtype=float)
    a = factorize_spd(a_raw)

    mode = cfg.get("mode", HARDMAX)
    try:
        spec = AttentionSpec(
            a=a,
            alpha=float(cfg["alpha"]),
            mode=mode,
            tie_tol=float(cfg.get("tieTol", DEFAULT_TIE_TOL)),
            tau=float(cfg["tau"]) if "tau" in cfg else None,
        )
        run_cfg = dynamics.RunConfig(
            max_steps=int(cfg.get("maxSteps", 10_000)),
            convergence_tol=float(cfg.get("convergenceTol", 1e-10)),
            stability_window=int(cfg.get("stabilityWindow", 10)),
            record_every=int(cfg.get("recordEvery", 1)),
        )
    except ValueError as exc:
        raise BadInputError(str(exc)) from None

    traj = dynamics.run(z0, spec, run_cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_trajectory_csv(traj, out / formats.TRAJECTORY_CSV)
    if spec.mode == HARDMAX:
        formats.write_attention_json(traj, out / formats.ATTENTION_JSON)
    formats.write_run_json(traj, run_cfg, out / formats.RUN_JSON, seed=cfg.get("seed"))

    if z0.dim == 2:
        leaders: tuple = ()
        if spec.mode == HARDMAX:
            try:
                leaders = clusters.detect_leaders(traj)
            except clusters.PersistenceViolationError:
                leaders = ()
        plots.plot_tokens_svg(traj, leaders, out / "tokens.svg")

    last = traj.steps[-1].step + 1 if traj.steps else 0
    print(
        f"{traj.stop_reason} after {last} steps"
        f" (converged={traj.converged}, near_tie_steps={traj.near_tie_steps})"
    )
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    directory = Path(args.directory)
    traj, _run = formats.read_trajectory(directory)
    leaders = clusters.detect_leaders(traj)
    found = clusters.extract_clusters(traj, args.radius, leaders=leaders)
    report = clusters.verify_clustering(
        traj, leaders, found, traj.spec.a, cluster_radius=args.radius
    )
    formats.write_report_json(report, traj.spec, directory / "report.json")
    if traj.dim == 2:
        plots.plot_clusters_png(traj, report, directory / "clusters.png")

    verdicts = report.verdicts
    print(
        f"leaders={len(report.leaders)} clusters={len(report.clusters)} "
        f"every_token_clustered={verdicts.every_token_clustered} "
        f"leaders_distinct_vertices={verdicts.leaders_distinct_vertices} "
        f"non_vertices_are_projections={verdicts.non_vertices_are_projections}"
    )
    return EXIT_OK if verdicts.all_true else EXIT_VERDICT_FALSE


def _encode_dataset(
    rows: list[tuple[int, str]], vocab: sentiment.Vocabulary, length: int
) -> list[sentiment.Review]:
    return [
        sentiment.Review(
            word_indices=sentiment.encode_review(text, vocab, length), label=label
        )
        for label, text in rows
    ]


def cmd_train(args: argparse.Namespace) -> int:
    if args.init and not args.vocab_init:
        raise BadInputError("--init also needs --vocab-init")
    rows = formats.load_dataset_tsv(args.data)
    if args.init:
        model = formats.load_model(args.init)
        vocab = formats.load_vocabulary(args.vocab_init)
        if vocab.size != model.vocab_size:
            raise formats.FormatError(
                f"vocabulary has {vocab.size} words but the model expects "
                f"{model.vocab_size}"
            )
        reviews = _encode_dataset(rows, vocab, model.review_length)
    else:
        vocab = sentiment.build_vocabulary([text for _, text in rows])
        reviews = _encode_dataset(rows, vocab, args.length)
        model = sentiment.new_model(
            vocab_size=vocab.size,
            dim=args.dim,
            depth=args.depth,
            tau=args.tau,
            review_length=args.length,
            seed=args.seed,
        )
    cfg = sentiment.TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        epochs=args.epochs,
        seed=args.seed,
    )
    trained, history = sentiment.train(model, reviews, cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    formats.save_model(trained, out / "model.hmx")
    formats.save_vocabulary(vocab, out / "vocab.txt")
    formats.write_history_csv(history, out / "history.csv")
    if history:
        plots.plot_history_png(history, out / "history.png")
    if history:
        final = history[-1]
        print(
            f"trained {cfg.epochs} epochs: loss={final.loss:.6f} "
            f"accuracy={final.accuracy:.4f} alpha={trained.alpha:.6f}"
        )
    else:
        print("trained 0 epochs")
    return EXIT_OK


def _load_model_and_vocab(args) -> tuple[sentiment.SentimentModel, sentiment.Vocabulary]:
    model = formats.load_model(args.model)
    vocab = formats.load_vocabulary(args.vocab)
    if vocab.size != model.vocab_size:
        raise formats.FormatError(
            f"vocabulary has {vocab.size} words but the model expects "
            f"{model.vocab_size}"
        )
    return model, vocab


def cmd_predict(args: argparse.Namespace) -> int:
    model, vocab = _load_model_and_vocab(args)
    indices = sentiment.encode_review(args.text, vocab, model.review_length)
    yhat, traj = sentiment.forward(model, indices, mode=args.mode)
    label = sentiment.predicted_label(yhat)
    print(json.dumps({"probability": yhat, "label": label, "mode": args.mode}))
    if args.trace:
        words = [vocab.words[i] for i in indices]
        formats.write_trace_csv(traj, words, args.trace)
        if model.dim == 2:
            plots.plot_trace_png(traj, words, Path(args.trace).with_suffix(".png"))
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    model, vocab = _load_model_and_vocab(args)
    rows = formats.load_dataset_tsv(args.data)
    reviews = _encode_dataset(rows, vocab, model.review_length)
    report = sentiment.evaluate(model, reviews, mode=args.mode)
    stats = report.leader_stats
    print(
        json.dumps(
            {
                "loss": report.loss,
                "accuracy": report.accuracy,
                "mode": args.mode,
                "leader_stats": {
                    "mean": stats.mean,
                    "std": stats.std,
                    "min": stats.min,
                    "max": stats.max,
                    "fraction_detected_at_start": stats.fraction_detected_at_start,
                    "tie_artifacts": stats.tie_artifacts,
                },
            }
        )
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hardmax",
        description="Hardmax attention token dynamics and sentiment classifier",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the token dynamics from a JSON config")
    p.add_argument("config", help="simulation config (JSON)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="verify cluster structure of a stored run")
    p.add_argument("directory", help="directory written by simulate")
    p.add_argument("--radius", type=float, default=1e-6, help="cluster radius")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("train", help="train the sentiment model on a TSV corpus")
    p.add_argument("--data", required=True, help="label<TAB>text training file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dim", type=int, default=2, help="embedding dimension")
    p.add_argument("--depth", type=int, default=8, help="number of attention steps")
    p.add_argument("--tau", type=float, default=0.001, help="softmax temperature")
    p.add_argument("--lr", type=float, default=0.001, help="Adam learning rate")
    p.add_argument("--batch", type=int, default=64, help="batch size")
    p.add_argument("--epochs", type=int, default=100, help="training epochs")
    p.add_argument("--seed", type=int, default=0, help="init and shuffle seed")
    p.add_argument("--length", type=int, default=128, help="review length (tokens)")
    p.add_argument(
        "--init", help="resume from this model file instead of a fresh init"
    )
    p.add_argument(
        "--vocab-init",
        dest="vocab_init",
        help="vocabulary matching --init (required with --init)",
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score one text with a saved model")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--vocab", required=True, help="vocabulary file")
    p.add_argument("--mode", choices=[HARDMAX, SOFTMAX], default=HARDMAX)
    p.add_argument("--trace", help="write the review's token trajectory CSV here")
    p.add_argument("text", help="text to score")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="evaluate a saved model on a TSV dataset")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--vocab", required=True, help="vocabulary file")
    p.add_argument("--data", required=True, help="label<TAB>text dataset")
    p.add_argument("--mode", choices=[HARDMAX, SOFTMAX], default=HARDMAX)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (NotSymmetricError, NotPositiveDefiniteError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_SPD
    except sentiment.NonFiniteLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NON_FINITE
    except (
        BadInputError,
        formats.FormatError,
        sentiment.EmptyCorpusError,
        clusters.NotConvergedError,
        clusters.PersistenceViolationError,
        clusters.AmbiguousClusteringError,
        FileNotFoundError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
