"""Command-line surface: gen | train | calibrate | score | eval | report.

Every command logs seed, config digest, and input digests to a run
manifest next to its output, so any artifact is traceable to exactly
what produced it.

Exit codes: 0 ok, 1 validation/config error, 2 I/O error, 3 model
format mismatch.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from .config import RunConfig
from .core_types import MessageFormatError, read_jsonl, write_jsonl
from .detector import calibrate, evaluate, read_reports_jsonl, score_stream, write_reports_jsonl
from .pipeline import (
    ModelVersionError,
    load_model,
    model_digest,
    save_model,
    train_pipeline,
)
from .report import render_reports
from .traffic_gen import (
    GenerationError,
    ScenarioConfig,
    dataset_digest,
    generate_scenario,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_VERSION = 3


def _file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _config_digest(data: dict) -> str:
    blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def _write_manifest(anchor: Path, command: str, seed, config_data: dict,
                    inputs: dict, outputs: dict) -> None:
    manifest = {
        "command": command,
        "seed": seed,
        "config_digest": _config_digest(config_data),
        "inputs": {name: _file_digest(Path(p)) for name, p in inputs.items()},
        "outputs": {name: _file_digest(Path(p)) for name, p in outputs.items()},
    }
    path = anchor.with_name(anchor.name + ".manifest.json")
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _load_scenario(path: str) -> ScenarioConfig:
    p = Path(path)
    if not p.exists():
        raise MessageFormatError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise GenerationError(f"config file {p} is not valid JSON: {e.msg}") from None
    if not isinstance(data, dict):
        raise GenerationError("scenario config must be a JSON object")
    return ScenarioConfig.from_dict(data)


def cmd_gen(args) -> int:
    cfg = _load_scenario(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    messages = generate_scenario(cfg)
    write_jsonl(messages, args.out)
    counts: dict[str, int] = {}
    for msg in messages:
        kind = msg.label.kind.value if msg.label else "unlabeled"
        counts[kind] = counts.get(kind, 0) + 1
    for kind in sorted(counts):
        print(f"{kind}: {counts[kind]}")
    print(f"total: {len(messages)}")
    print(f"digest: {dataset_digest(messages)}")
    _write_manifest(Path(args.out), "gen", cfg.seed, cfg.to_dict(), {},
                    {"dataset": args.out})
    return EXIT_OK


def cmd_train(args) -> int:
    run_cfg = RunConfig.load(args.config) if args.config else RunConfig()
    seed = args.seed if args.seed is not None else run_cfg.seed
    data_path = Path(args.data)
    if not data_path.exists():
        raise MessageFormatError(f"data file not found: {data_path}")
    messages = read_jsonl(data_path)
    model = train_pipeline(messages, run_cfg.pipeline_config(), seed)
    save_model(model, args.model_out)
    print(f"model digest: {model_digest(model)}")
    _write_manifest(Path(args.model_out), "train", seed, run_cfg.to_dict(),
                    {"data": args.data}, {"model": args.model_out})
    return EXIT_OK


def cmd_calibrate(args) -> int:
    model = load_model(args.model)
    data_path = Path(args.data)
    if not data_path.exists():
        raise MessageFormatError(f"data file not found: {data_path}")
    messages = read_jsonl(data_path)
    scores = score_stream(model, messages)
    from .traffic_gen import dataset_digest as ds_digest

    model.thresholds = calibrate(scores, args.q, corpus_digest=ds_digest(messages))
    out = args.model_out or args.model
    save_model(model, out)
    t = model.thresholds
    print(f"tau_sem={t.tau_sem:.6g} tau_topo={t.tau_topo:.6g} tau_temp={t.tau_temp:.6g} q={t.q}")
    _write_manifest(Path(out), "calibrate", None, {"q": args.q},
                    {"data": args.data, "model_in": args.model}, {"model": out})
    return EXIT_OK


def cmd_score(args) -> int:
    model = load_model(args.model)
    if model.thresholds is None:
        print("thresholds missing; run calibrate", file=sys.stderr)
        return EXIT_USAGE
    data_path = Path(args.data)
    if not data_path.exists():
        raise MessageFormatError(f"data file not found: {data_path}")
    messages = read_jsonl(data_path)
    reports = score_stream(model, messages, model.thresholds)
    write_reports_jsonl(reports, args.out)
    n_anom = sum(1 for r in reports if r.verdict)
    print(f"scored {len(reports)} messages, {n_anom} anomalous")
    _write_manifest(Path(args.out), "score", None, {},
                    {"data": args.data, "model": args.model}, {"reports": args.out})
    return EXIT_OK


def cmd_eval(args) -> int:
    reports_path = Path(args.reports)
    data_path = Path(args.data)
    for p in (reports_path, data_path):
        if not p.exists():
            raise MessageFormatError(f"input file not found: {p}")
    reports = read_reports_jsonl(reports_path)
    messages = read_jsonl(data_path)
    metrics = evaluate(reports, messages)
    Path(args.out).write_text(metrics.to_json() + "\n", encoding="utf-8")
    print(f"precision={metrics.precision:.3f} recall={metrics.recall:.3f} "
          f"f1={metrics.f1:.3f} auc={metrics.auc:.3f}")
    for kind, rec in metrics.per_kind_recall.items():
        stage = metrics.per_kind_modal_stage.get(kind, "-")
        print(f"  {kind}: recall={rec:.3f} modal_stage={stage}")
    _write_manifest(Path(args.out), "eval", None, {},
                    {"reports": args.reports, "data": args.data}, {"metrics": args.out})
    return EXIT_OK


def cmd_report(args) -> int:
    reports_path = Path(args.reports)
    if not reports_path.exists():
        raise MessageFormatError(f"input file not found: {reports_path}")
    reports = read_reports_jsonl(reports_path)
    result = render_reports(reports, args.out_dir)
    print(f"wrote {result['csv']}")
    print(f"wrote {result['summary']}")
    for stage, path in result["histograms"].items():
        print(f"wrote {path}")
    _write_manifest(Path(args.out_dir) / "report", "report", None, {},
                    {"reports": args.reports},
                    {"csv": result["csv"], "summary": result["summary"]})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cn-sentinel",
        description="Multidomain anomaly detection for 5G core control-plane traffic.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a labeled synthetic dataset")
    p.add_argument("--config", required=True, help="scenario config JSON")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train the detection pipeline on benign traffic")
    p.add_argument("--data", required=True, help="benign JSONL dataset")
    p.add_argument("--config", default=None, help="run config JSON (defaults used if absent)")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--model-out", required=True, help="output model JSON path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", help="calibrate thresholds on benign scores")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="benign JSONL dataset")
    p.add_argument("--q", type=float, default=0.995)
    p.add_argument("--model-out", default=None, help="defaults to rewriting --model")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("score", help="score a dataset into anomaly reports")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="reports JSONL path")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="compare reports against dataset labels")
    p.add_argument("--reports", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="metrics JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="render reports to CSV, SVG histograms, summary")
    p.add_argument("--reports", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ModelVersionError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VERSION
    except (MessageFormatError, GenerationError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


def entrypoint() -> None:
    raise SystemExit(main())
