# cli.py

"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 oracle or
training failure. Errors are also written to stderr as one JSON record.
A ``--config`` JSON file overrides flags; MEMGAUGE_SEED supplies the seed
when no ``--seed`` is given.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from memgauge import __version__
from memgauge.api.app import serve
from memgauge.config import get_settings
from memgauge.errors import ConfigError, IoFailure, SchemaViolation
from memgauge.models.metrics import ScoreCurve
from memgauge.models.noise import NoiseMode
from memgauge.models.oracle import CsrReport, OracleRequest, OracleResponse
from memgauge.models.run import Hyperparameters, StudyManifest
from memgauge.models.sample import BugMeta, Corpus, Task
from memgauge.services import criticality, noising, refmodel, report
from memgauge.services.corpus import load_corpus, normalize_source, write_corpus
from memgauge.services.metrics import score_curve, task_metrics
from memgauge.services.oracles import HttpOracle, ModelOracle, OraclePool, SubprocessOracle
from memgauge.services.study import run_study
from memgauge.services.synthetic import synthetic_method_corpus
from memgauge.services.telemetry import TraceWriter, read_trace
from memgauge.utils.error_handler import ErrorHandler
from memgauge.utils.logging_config import setup_logging

logger = logging.getLogger("memgauge")

TASKS = [task.value for task in Task]
MODES = [mode.value for mode in NoiseMode]
F1_AVERAGES = ["micro", "macro"]


def _read_json(path) -> dict:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise IoFailure(path, "config file not found") from e
    except OSError as e:
        raise IoFailure(path, str(e)) from e
    except ValueError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return payload


def apply_config(args: argparse.Namespace) -> argparse.Namespace:
    """Override parsed flags with the keys of the --config file."""
    if getattr(args, "config", None) is None or args.command == "run-study":
        return args
    for key, value in _read_json(args.config).items():
        dest = key.replace("-", "_")
        if dest in ("command", "handler", "config", "required_options") or not hasattr(args, dest):
            raise ConfigError(f"unknown config key '{key}' for '{args.command}'")
        setattr(args, dest, value)
    return args


def check_options(args: argparse.Namespace) -> argparse.Namespace:
    """Enforce required options and choices after --config has been merged in."""
    missing = [dest for dest in getattr(args, "required_options", ()) if getattr(args, dest, None) is None]
    if missing:
        flags = ", ".join("--" + dest.replace("_", "-") for dest in missing)
        raise ConfigError(f"'{args.command}' is missing required option(s): {flags}")
    for dest, allowed in (("task", TASKS), ("mode", MODES), ("f1_average", F1_AVERAGES)):
        value = getattr(args, dest, None)
        if value is not None and value not in allowed:
            raise ConfigError(f"invalid {dest} '{value}'; expected one of {', '.join(allowed)}")
    return args


def _seed(value: Optional[int]) -> int:
    return value if value is not None else get_settings().SEED


def _hyper(args) -> Hyperparameters:
    settings = get_settings()
    try:
        return Hyperparameters(
            epochs=args.epochs if args.epochs is not None else settings.EPOCHS,
            batch_size=args.batch_size if args.batch_size is not None else settings.BATCH_SIZE,
            learning_rate=args.learning_rate if args.learning_rate is not None else settings.LEARNING_RATE,
            dim=args.dim if args.dim is not None else settings.EMBEDDING_DIM,
            min_count=args.min_count if args.min_count is not None else settings.MIN_COUNT,
            seed=_seed(args.seed),
        )
    except ValidationError as e:
        raise ConfigError(f"invalid hyperparameters: {e.errors()[0]['msg']}") from e


# ---------------------------------------------------------------------------
# commands

def cmd_normalize(args) -> int:
    """Raw JSONL ({id, code, target_label?, target_tokens?, query_tokens?, bug_meta?}) to corpus JSONL."""
    task = Task(args.task)
    path = Path(args.input)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise IoFailure(path, str(e)) from e
    samples = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            code, sample_id = raw["code"], raw["id"]
            bug_meta = BugMeta(**raw["bug_meta"]) if raw.get("bug_meta") else None
        except KeyError as e:
            raise SchemaViolation(number, str(e.args[0]), "missing field") from e
        except ValidationError as e:
            raise SchemaViolation(number, "bug_meta", e.errors()[0]["msg"]) from e
        except (ValueError, TypeError) as e:
            raise SchemaViolation(number, "<record>", str(e)) from e
        samples.append(normalize_source(
            code, task, sample_id,
            target_label=raw.get("target_label", ""),
            target_tokens=raw.get("target_tokens", ()),
            query_tokens=raw.get("query_tokens", ()),
            bug_meta=bug_meta,
        ))
    write_corpus(Corpus.from_samples(task, samples), args.output)
    return 0


def cmd_synth(args) -> int:
    corpus = synthetic_method_corpus(
        labels=args.labels, per_label=args.per_label, vocab_size=args.vocab_size,
        seed=_seed(args.seed), signal=args.signal, prefix=args.prefix,
    )
    write_corpus(corpus, args.output)
    return 0


def cmd_noise(args) -> int:
    corpus = load_corpus(args.input, args.task)
    plan = noising.plan_noise(corpus, args.rate, args.mode, _seed(args.seed), top_k=args.top_k)
    noisy = noising.apply(corpus, plan, workers=get_settings().worker_count(len(corpus)) if args.parallel else 1)
    noising.write_noisy_corpus(noisy, plan, args.output)
    return 0


def cmd_train(args) -> int:
    task = Task(args.task)
    train_corpus = load_corpus(args.train, task)
    heldout = load_corpus(args.heldout, task)
    hyper = _hyper(args)
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    vocab = refmodel.build_vocab(train_corpus, hyper.min_count)
    model = refmodel.init_model(vocab, refmodel.class_catalogue(task, train_corpus, heldout), hyper.dim, hyper.seed)
    with TraceWriter(out_dir / "trace.jsonl") as sink:
        model = refmodel.train(
            model, train_corpus, heldout, hyper, sink,
            run_id=args.run_id, noise_rate=args.noise_rate, noise_mode=args.noise_mode,
        )
    refmodel.save_checkpoint(model, out_dir / "model.json")
    return 0


def cmd_analyze(args) -> int:
    trace = read_trace(args.trace)
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    series = task_metrics(trace, args.task, f1_average=args.f1_average)
    curves = [score_curve(trace, split) for split in trace.splits()]
    report.emit_csv([series[name] for name in sorted(series)], out_dir / "metrics.csv")
    report.emit_csv(curves, out_dir / "curves.csv", ScoreCurve)
    for name in sorted(series):
        report.emit_plot([series[name]], "trajectory", out_dir / f"{name}.svg", title=name)
    if curves:
        report.emit_plot(curves, "curve", out_dir / "score_curves.svg", title="score curves")
    return 0


def _oracle(args):
    chosen = [value for value in (args.model, args.oracle_command, args.oracle_url) if value]
    if len(chosen) != 1:
        raise ConfigError("give exactly one of --model, --oracle-command or --oracle-url")
    if args.model:
        return ModelOracle(refmodel.load_checkpoint(args.model))
    if args.oracle_command:
        return OraclePool(lambda: SubprocessOracle(args.oracle_command), size=args.pool_size)
    return HttpOracle(args.oracle_url)


def cmd_csr(args) -> int:
    test_set = load_corpus(args.test, args.task)
    oracle = _oracle(args)
    budget = args.budget if args.budget is not None else get_settings().CSR_QUERY_BUDGET
    try:
        result = criticality.csr(test_set, oracle, budget=budget, workers=args.workers,
                               run_id=args.run_id, noise_rate=args.noise_rate)
    finally:
        if hasattr(oracle, "close"):
            oracle.close()
    report.emit_csv([result], args.output, CsrReport)
    print(f"{result.ratio:.9g}")
    return 0


def cmd_report(args) -> int:
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    series = [s for path in args.metrics for s in report.load_metric_csv(path)]
    by_metric = {}
    for s in series:
        by_metric.setdefault(s.metric, []).append(s)
    for metric, collection in sorted(by_metric.items()):
        collection.sort(key=lambda s: (s.noise_rate, s.run_id))
        report.emit_csv(collection, out_dir / f"{metric}.csv")
        report.emit_plot(collection, "trajectory", out_dir / f"{metric}.svg", title=metric)
    return 0


def cmd_run_study(args) -> int:
    config_path = Path(args.config)
    payload = _read_json(config_path)
    payload.setdefault("noise_seed", get_settings().SEED)
    if "hyper" in payload and isinstance(payload["hyper"], dict):
        payload["hyper"].setdefault("seed", get_settings().SEED)
    else:
        payload.setdefault("hyper", {"seed": get_settings().SEED})
    try:
        manifest = StudyManifest.model_validate(payload)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(f"invalid study manifest {config_path}: {'.'.join(map(str, first['loc']))}: {first['msg']}") from e
    result = run_study(manifest, args.output_dir, base_dir=config_path.parent, workers=args.workers)
    if result.error is not None:
        sys.stderr.write(json.dumps(result.error, sort_keys=True) + "\n")
    else:
        print(result.directory)
    return result.exit_code


def cmd_oracle(args) -> int:
    """Serve a checkpoint over the stdin/stdout line protocol."""
    model = refmodel.load_checkpoint(args.model)
    out = sys.stdout
    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            request = OracleRequest.model_validate_json(line)
        except ValidationError as e:
            logger.warning(f"Skipping malformed oracle request: {e.errors()[0]['msg']}")
            continue
        prediction = refmodel.predict(model, request.tokens, request.query_tokens)
        response = OracleResponse(id=request.id, prediction=prediction.label, score=prediction.score)
        out.write(response.model_dump_json() + "\n")
        out.flush()
    return 0


def cmd_serve(args) -> int:
    serve(refmodel.load_checkpoint(args.model), checkpoint=args.model, host=args.host, port=args.port)
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_training_flags(parser):
    parser.add_argument("--epochs", type=int, help="Training epochs")
    parser.add_argument("--batch-size", type=int, help="Mini-batch size")
    parser.add_argument("--learning-rate", type=float, help="Gradient descent step size")
    parser.add_argument("--dim", type=int, help="Embedding width (model capacity)")
    parser.add_argument("--min-count", type=int, help="Minimum sub-token frequency")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memgauge", description="Memorization diagnostics for code models")
    parser.add_argument("--version", action="version", version=f"memgauge {__version__}")
    parser.add_argument("--log-level", default=None, help="Logging level (default from MEMGAUGE_LOG_LEVEL)")
    parser.add_argument("--log-file", default=None, help="Also log to this file")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, handler, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file whose keys override flags")
        p.set_defaults(handler=handler, required_options=())
        return p

    # required unless supplied by --config
    def need(p, flag, **kwargs):
        action = p.add_argument(flag, **kwargs)
        p.set_defaults(required_options=p.get_default("required_options") + (action.dest,))

    p = command("normalize", cmd_normalize, "Normalize raw source records into a corpus")
    need(p, "--input", help="Raw JSONL with id and code per line")
    need(p, "--task", choices=TASKS)
    need(p, "--output", help="Corpus JSONL to write")

    p = command("synth", cmd_synth, "Generate a synthetic method_name corpus")
    p.add_argument("--labels", type=int, default=10, help="Number of method names")
    p.add_argument("--per-label", type=int, default=200, help="Samples per method name")
    p.add_argument("--vocab-size", type=int, default=500, help="Pseudo-word vocabulary size")
    p.add_argument("--signal", type=float, default=0.5, help="Probability of a label-specific word")
    p.add_argument("--prefix", default="syn", help="Sample id prefix")
    p.add_argument("--seed", type=int, default=None)
    need(p, "--output")

    p = command("noise", cmd_noise, "Write a noisy variant of a corpus")
    need(p, "--input")
    need(p, "--task", choices=TASKS)
    need(p, "--mode", choices=MODES)
    need(p, "--rate", type=float, help="Fraction of samples to corrupt")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--top-k", type=int, default=None, help="identity_tokens: cue tokens per sample")
    p.add_argument("--parallel", action="store_true", help="Apply directives on a thread pool")
    need(p, "--output")

    p = command("train", cmd_train, "Train the reference model and record telemetry")
    need(p, "--train")
    need(p, "--heldout")
    need(p, "--task", choices=TASKS)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--run-id", default="run")
    p.add_argument("--noise-rate", type=float, default=0.0)
    p.add_argument("--noise-mode", default="")
    need(p, "--output-dir")
    _add_training_flags(p)

    p = command("analyze", cmd_analyze, "Compute metric series and score curves from a trace")
    need(p, "--trace")
    need(p, "--task", choices=TASKS)
    p.add_argument("--f1-average", choices=F1_AVERAGES, default="micro")
    need(p, "--output-dir")

    p = command("csr", cmd_csr, "Critical sample ratio of a test set")
    need(p, "--test")
    need(p, "--task", choices=TASKS)
    p.add_argument("--model", help="Reference-model checkpoint")
    p.add_argument("--oracle-command", help="External oracle speaking the line protocol")
    p.add_argument("--oracle-url", help="HTTP oracle base URL")
    p.add_argument("--pool-size", type=int, default=None, help="Subprocess oracle instances")
    p.add_argument("--budget", type=int, default=None, help="Renamings tried per sample")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--run-id", default="")
    p.add_argument("--noise-rate", type=float, default=0.0)
    need(p, "--output", help="CSV to write")

    p = command("report", cmd_report, "Combine metric CSVs into per-metric tables and charts")
    need(p, "--metrics", nargs="+")
    need(p, "--output-dir")

    p = command("run-study", cmd_run_study, "Run a full study from a JSON manifest")
    need(p, "--output-dir")
    p.add_argument("--workers", type=int, default=None, help="Parallel noise-rate pipelines")

    p = command("oracle", cmd_oracle, "Answer line-protocol queries on stdin/stdout")
    need(p, "--model")

    p = command("serve", cmd_serve, "Serve a checkpoint over HTTP")
    need(p, "--model")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    settings = get_settings()
    setup_logging(args.log_level or settings.LOG_LEVEL, args.log_file or settings.LOG_FILE)
    if args.command == "run-study" and not args.config:
        parser.error("run-study requires --config")
    try:
        args = check_options(apply_config(args))
        return args.handler(args)
    except Exception as e:
        return ErrorHandler.handle_exception(e, context=args.command, stream=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
