"""Command-line entry point: run, score, stats, sweep, gen.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .agent import AgentConfig
from .backends import ChatCompletionsBackend, ConfigurationError, GenerationSettings, ReplayBackend, ScriptedBackend
from .harness import (
    RESULTS_NAME,
    HarnessError,
    compression_sweep,
    load_manifest,
    load_results,
    render_sweep,
    run_batch,
    score,
    tool_usage_stats,
)
from .registry import Raster, RegistryError
from .routing import StrategyFileError, TaskKind, load_strategies
from .stimuli import KINDS, StimulusError, emit_manifest, make_specs

log = logging.getLogger("illusion_agent")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(ValueError):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _make_backend(args, manifest: Path):
    spec = args.backend
    if spec == "live":
        if not args.endpoint:
            raise UsageError("--backend live needs --endpoint")
        backend = ChatCompletionsBackend(args.endpoint, args.api_key_env, verbose=args.verbose)
        backend.check_credentials()
        return backend
    kind, _, rest = spec.partition(":")
    if kind == "scripted":
        probes = None
        path = Path(args.probes) if args.probes else manifest.parent / "probes.json"
        if path.exists():
            probes = json.loads(path.read_text())
        elif args.probes:
            raise UsageError(f"probe file {path} not found")
        try:
            return ScriptedBackend(rest or "oracle", probes)
        except ConfigurationError as exc:
            raise UsageError(str(exc)) from None
    if kind == "replay":
        if not rest or not Path(rest).is_dir():
            raise UsageError(f"replay directory {rest!r} not found")
        return ReplayBackend.per_sample(rest)
    raise UsageError(f"unknown backend {spec!r}; use live, scripted:<policy> or replay:<dir>")


def _default_model(backend: str) -> str:
    if backend.startswith("replay:"):
        recorded = Path(backend.partition(":")[2]) / RESULTS_NAME
        if recorded.exists():
            meta, _ = load_results(recorded)
            if meta.get("model_name"):
                return meta["model_name"]
    return "scripted" if backend.startswith("scripted") else "default"


def cmd_run(args) -> int:
    task = TaskKind.parse(args.task)
    manifest = Path(args.manifest)
    entries = load_manifest(manifest, task)
    strategies = {task: load_strategies(args.strategies, task)} if args.strategies else {}
    model = args.model or _default_model(args.backend)
    cfg = AgentConfig(
        max_rounds=args.max_rounds,
        rescue_max_rounds=args.rescue_rounds,
        settings=GenerationSettings(model_name=model, temperature=args.temperature,
                                    max_image_edge=args.max_image_edge),
        fallback_models=tuple(args.fallback_model or ()),
        strategies=strategies,
    )
    backend = _make_backend(args, manifest)
    result = run_batch(entries, cfg, backend, args.out, workers=args.workers, overwrite=args.overwrite,
                       record=args.record)
    n_fb = sum(r.fallback_used for r in result.records)
    print(f"{len(result.records)} samples -> {result.results_path} ({n_fb} fallback answers)")
    return EXIT_OK


def cmd_score(args) -> int:
    entries = load_manifest(args.manifest, check_images=False)
    _, records = load_results(args.results)
    report = score(records, entries)
    print(report.render())
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_stats(args) -> int:
    report = tool_usage_stats(args.transcripts)
    print(report.render())
    out = Path(args.json) if args.json else Path(args.transcripts) / "tool_usage.json"
    out.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    raster = Raster.open(args.image)
    probes = json.loads(Path(args.probes).read_text())
    if isinstance(probes, dict):
        probes = probes.get("points") or probes.get("probes")
    if not isinstance(probes, list):
        raise UsageError("probe file must hold a list of [x, y] points (or {'points': [...]})")
    report = compression_sweep(raster, probes, args.qualities)
    print(render_sweep(report))
    text = json.dumps(report, indent=2) + "\n"
    if args.json:
        Path(args.json).write_text(text)
        print(f"wrote {args.json}")
    else:
        print(text, end="")
    return EXIT_OK


def cmd_gen(args) -> int:
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    unknown = [k for k in kinds if k not in KINDS]
    if unknown:
        raise UsageError(f"unknown kinds {unknown}; expected from {KINDS}")
    specs = make_specs(kinds, args.per_kind, args.balance, args.seed, args.orientation, (args.width, args.height))
    path = emit_manifest(specs, args.out, TaskKind.parse(args.task))
    n_pos = sum(s.polarity == "positive" for s in specs)
    print(f"{len(specs)} samples ({n_pos} positive, {len(specs) - n_pos} negative) -> {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="illusion-agent", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging (API keys are redacted)")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the agent over a manifest")
    r.add_argument("--task", type=int, choices=(1, 2), required=True)
    r.add_argument("--manifest", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--backend", default="scripted:oracle", help="live | scripted:<policy> | replay:<dir>")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--max-rounds", type=int, default=10)
    r.add_argument("--rescue-rounds", type=int, default=3)
    r.add_argument("--overwrite", action="store_true")
    r.add_argument("--record", action="store_true", help="write per-sample replay logs into --out")
    r.add_argument("--probes", help="oracle probe file (default: probes.json beside the manifest)")
    r.add_argument("--strategies", help="YAML strategy table overriding the packaged one")
    r.add_argument("--endpoint", help="chat-completions URL for the live backend")
    r.add_argument("--api-key-env", default="OPENAI_API_KEY")
    r.add_argument("--model")
    r.add_argument("--fallback-model", action="append", help="model to switch to on quota errors (repeatable)")
    r.add_argument("--temperature", type=float, default=0.0)
    r.add_argument("--max-image-edge", type=int)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("score", help="score a results file against a manifest")
    s.add_argument("--results", required=True)
    s.add_argument("--manifest", required=True)
    s.set_defaults(func=cmd_score)

    t = sub.add_parser("stats", help="tool-usage fractions over transcripts")
    t.add_argument("--transcripts", required=True)
    t.add_argument("--json", help="where to write the JSON report (default: <transcripts>/tool_usage.json)")
    t.set_defaults(func=cmd_stats)

    w = sub.add_parser("sweep", help="JPEG compression sensitivity of sampled colours")
    w.add_argument("--image", required=True)
    w.add_argument("--probes", required=True, help="JSON list of [x, y] points")
    w.add_argument("--qualities", type=_int_list, default=[30, 50, 70, 90])
    w.add_argument("--json", help="write the JSON report here instead of stdout")
    w.set_defaults(func=cmd_sweep)

    g = sub.add_parser("gen", help="generate synthetic stimuli and a manifest")
    g.add_argument("--kinds", default=",".join(KINDS))
    g.add_argument("--per-kind", type=int, default=10)
    g.add_argument("--balance", action="store_true", help="alternate positive/negative samples")
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--orientation", choices=("both", "vertical", "horizontal"), default="both")
    g.add_argument("--width", type=int, default=128)
    g.add_argument("--height", type=int, default=128)
    g.add_argument("--task", type=int, choices=(1, 2), default=1)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, HarnessError, StimulusError, StrategyFileError, RegistryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, ConfigurationError, RuntimeError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
