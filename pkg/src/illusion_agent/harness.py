"""Batch evaluation: manifests, concurrent runs, scoring, tool-usage stats, JPEG sweeps."""

from __future__ import annotations

import io
import json
import logging
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import PIL
from PIL import Image, features

from .agent import AgentConfig, RoundRecord, Transcript, run_sample
from .backends.replay import RecordingBackend
from .registry import Raster, RegistryError, Registry
from .routing import SHOW_RESOURCE, TaskKind, build_system_prompt, tool_subset
from .tools import sample_color

log = logging.getLogger(__name__)

RESULTS_NAME = "results.jsonl"
POLARITIES = ("positive", "negative")


class HarnessError(Exception):
    pass


class ManifestError(HarnessError, ValueError):
    """Schema or ingestion problem in a manifest; message names the line or ids."""


class OutputExistsError(HarnessError):
    pass


class NoLabelsError(HarnessError, ValueError):
    pass


class NoDataError(HarnessError, ValueError):
    pass


class SweepError(HarnessError):
    def __init__(self, quality: int, cause: Exception):
        super().__init__(f"JPEG encode/decode failed at quality {quality}: {cause}")
        self.quality = quality


# ---- manifest


@dataclass(frozen=True)
class SampleManifestEntry:
    sample_id: str
    task: TaskKind
    image_path: Path
    question: str
    options: tuple[str, ...] | None = None
    label: str | None = None
    polarity: str | None = None
    category: str | None = None


def _entry_from_record(rec: Any, base: Path, default_task: TaskKind | None) -> SampleManifestEntry:
    if not isinstance(rec, dict):
        raise ValueError("record is not a JSON object")
    sid = rec.get("sample_id")
    if not isinstance(sid, str) or not sid or "/" in sid or sid in (".", ".."):
        raise ValueError(f"bad sample_id {sid!r}")
    raw_task = rec.get("task", default_task.value if default_task else None)
    if raw_task is None:
        raise ValueError("missing task")
    task = TaskKind.parse(raw_task)
    if default_task is not None and task is not default_task:
        raise ValueError(f"task {task.value} does not match the requested task {default_task.value}")
    image = rec.get("image", rec.get("image_path"))
    if not isinstance(image, str) or not image:
        raise ValueError("missing image path")
    question = rec.get("question")
    if not isinstance(question, str) or not question.strip():
        raise ValueError("missing question")
    options = rec.get("options")
    if task is TaskKind.II:
        if not isinstance(options, list) or len(options) != 4 or not all(isinstance(o, str) for o in options):
            raise ValueError("task II entries need exactly 4 string options")
        options = tuple(options)
    elif options is not None:
        raise ValueError("task I entries take no options")
    label = rec.get("label")
    if label is not None and label not in task.labels:
        raise ValueError(f"label {label!r} not in {task.labels}")
    polarity = rec.get("polarity")
    if polarity is not None and polarity not in POLARITIES:
        raise ValueError(f"polarity {polarity!r} not in {POLARITIES}")
    category = rec.get("category")
    if category is not None and not isinstance(category, str):
        raise ValueError("category must be a string")
    path = Path(image)
    if not path.is_absolute():
        path = base / path
    return SampleManifestEntry(sid, task, path, question, options, label, polarity, category)


def load_manifest(path: str | Path, task: TaskKind | int | None = None, check_images: bool = True
                  ) -> list[SampleManifestEntry]:
    """Parse and validate a JSONL manifest; image paths resolve relative to the manifest."""
    path = Path(path)
    default_task = TaskKind.parse(task) if task is not None else None
    try:
        text = path.read_text()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    entries: list[SampleManifestEntry] = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            entry = _entry_from_record(rec, path.parent, default_task)
        except (ValueError, TypeError) as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from None
        if entry.sample_id in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate sample_id {entry.sample_id!r} "
                                f"(first on line {seen[entry.sample_id]})")
        seen[entry.sample_id] = lineno
        entries.append(entry)
    if check_images:
        bad = []
        for e in entries:
            try:
                Raster.open(e.image_path)
            except (OSError, RegistryError, ValueError):
                bad.append(e.sample_id)
        if bad:
            raise ManifestError(f"missing or undecodable images for {len(bad)} sample(s): {', '.join(bad)}")
    return entries


# ---- batch runs


@dataclass
class ResultRecord:
    sample_id: str
    answer: str
    correct: bool | None
    rounds_used: int
    rescue_used: bool
    fallback_used: bool
    tools_used: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ResultRecord:
        return cls(d["sample_id"], d["answer"], d.get("correct"), int(d.get("rounds_used", 0)),
                   bool(d.get("rescue_used")), bool(d.get("fallback_used")), list(d.get("tools_used", [])))


@dataclass
class BatchResult:
    results_path: Path
    records: list[ResultRecord]
    meta: dict[str, Any]


def _record_for(entry: SampleManifestEntry, t: Transcript) -> ResultRecord:
    answer = t.final.answer if t.final else ""
    allowed = set(tool_subset(entry.task))
    return ResultRecord(
        entry.sample_id,
        answer,
        None if entry.label is None else answer == entry.label,
        len(t.rounds) + len(t.rescue_rounds),
        t.used_rescue,
        t.used_fallback,
        sorted(t.tools_called() & allowed),
    )


def _run_one(entry: SampleManifestEntry, cfg: AgentConfig, backend, out: Path) -> ResultRecord:
    sample_dir = out / entry.sample_id
    try:
        bound = backend.bind(entry.sample_id)
        image = Raster.open(entry.image_path)
        transcript, registry = run_sample(cfg, bound, entry.task, image, entry.question, entry.options,
                                          entry.sample_id)
        registry.archive(sample_dir)
    except Exception as exc:  # isolation: a crashed sample still gets an answer
        log.error("sample %s failed: %s: %s", entry.sample_id, type(exc).__name__, exc)
        transcript = Transcript(entry.sample_id, entry.task, "", cfg.settings.model_name)
        transcript.used_fallback = True
        transcript.final = cfg.fallback_answer(entry.task)
        transcript.events.append(f"sample crashed: {type(exc).__name__}: {exc}")
    transcript.save(sample_dir)
    return _record_for(entry, transcript)


def run_meta(cfg: AgentConfig, tasks: Iterable[TaskKind]) -> dict[str, Any]:
    versions = {str(t.value): build_system_prompt(t, cfg.strategies.get(t)).version for t in sorted(set(tasks),
                                                                                                   key=lambda k: k.value)}
    return {
        "type": "meta",
        "prompt_version": versions,
        "model_name": cfg.settings.model_name,
        "config": {
            "max_rounds": cfg.max_rounds,
            "rescue_max_rounds": cfg.rescue_max_rounds,
            "temperature": cfg.settings.temperature,
            "max_output_tokens": cfg.settings.max_output_tokens,
            "max_image_edge": cfg.settings.max_image_edge,
            "fallback_answers": {str(k.value): v for k, v in sorted(cfg.fallback_answers.items(),
                                                                     key=lambda kv: kv[0].value)},
            "fallback_models": list(cfg.fallback_models),
        },
    }


def run_batch(
    entries: Sequence[SampleManifestEntry],
    cfg: AgentConfig,
    backend,
    out_dir: str | Path,
    workers: int = 1,
    overwrite: bool = False,
    record: bool = False,
) -> BatchResult:
    """Run every entry, write ``results.jsonl`` (meta line first) and per-sample transcripts."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    out = Path(out_dir)
    results_path = out / RESULTS_NAME
    if out.exists() and any(out.iterdir()):
        if not overwrite:
            raise OutputExistsError(f"output directory {out} is not empty; pass overwrite to replace it")
        results_path.unlink(missing_ok=True)
        for e in entries:
            if (out / e.sample_id).is_dir():
                shutil.rmtree(out / e.sample_id)
    out.mkdir(parents=True, exist_ok=True)
    if not entries:
        log.warning("empty manifest: nothing to run")
    if record:
        backend = RecordingBackend.per_sample(backend, out)
    meta = run_meta(cfg, (e.task for e in entries))
    if workers == 1:
        records = [_run_one(e, cfg, backend, out) for e in entries]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda e: _run_one(e, cfg, backend, out), entries))
    records.sort(key=lambda r: r.sample_id)
    lines = [json.dumps(meta, sort_keys=True)] + [json.dumps(r.to_dict(), sort_keys=True) for r in records]
    results_path.write_text("\n".join(lines) + "\n")
    return BatchResult(results_path, records, meta)


def load_results(path: str | Path) -> tuple[dict[str, Any], list[ResultRecord]]:
    meta: dict[str, Any] = {}
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            if d.get("type") == "meta":
                meta = d
            else:
                records.append(ResultRecord.from_dict(d))
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise ManifestError(f"{path}:{lineno}: bad result record: {exc}") from None
    return meta, records


# ---- scoring


@dataclass
class ScoreReport:
    overall_accuracy: float
    positive_accuracy: float | None
    negative_accuracy: float | None
    n_total: int
    n_positive: int
    n_negative: int
    n_unlabeled: int = 0
    per_category: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def render(self) -> str:
        def pct(v):
            return "   -  " if v is None else f"{100 * v:6.2f}"

        rows = [("overall", self.overall_accuracy, self.n_total),
                ("positive", self.positive_accuracy, self.n_positive),
                ("negative", self.negative_accuracy, self.n_negative)]
        lines = [f"{'split':<28} {'acc %':>6} {'n':>5}"]
        lines += [f"{name:<28} {pct(v)} {n:>5}" for name, v, n in rows]
        for cat, v in sorted(self.per_category.items()):
            lines.append(f"{'  ' + cat:<28} {pct(v)}")
        if self.n_unlabeled:
            lines.append(f"unlabeled (excluded): {self.n_unlabeled}")
        return "\n".join(lines)


def _acc(flags: list[bool]) -> float | None:
    return sum(flags) / len(flags) if flags else None


def score(results: Iterable[ResultRecord], manifest: Iterable[SampleManifestEntry]) -> ScoreReport:
    """Accuracy overall and per polarity; positive/negative are None when that split is empty."""
    by_id = {e.sample_id: e for e in manifest}
    overall: list[bool] = []
    split: dict[str, list[bool]] = {"positive": [], "negative": []}
    cats: dict[str, list[bool]] = {}
    unlabeled = 0
    for r in results:
        e = by_id.get(r.sample_id)
        if e is None or e.label is None:
            unlabeled += 1
            continue
        ok = r.answer == e.label
        overall.append(ok)
        if e.polarity:
            split[e.polarity].append(ok)
        if e.category:
            cats.setdefault(e.category, []).append(ok)
    if not overall:
        raise NoLabelsError("no labeled entries to score")
    return ScoreReport(
        overall_accuracy=sum(overall) / len(overall),
        positive_accuracy=_acc(split["positive"]),
        negative_accuracy=_acc(split["negative"]),
        n_total=len(overall),
        n_positive=len(split["positive"]),
        n_negative=len(split["negative"]),
        n_unlabeled=unlabeled,
        per_category={k: sum(v) / len(v) for k, v in cats.items()},
    )


# ---- tool usage


@dataclass
class ToolUsageReport:
    n_samples: int
    counts: dict[str, int]

    @property
    def fractions(self) -> list[tuple[str, float]]:
        """(tool, fraction) sorted by fraction descending, then name."""
        return sorted(((t, c / self.n_samples) for t, c in self.counts.items()), key=lambda p: (-p[1], p[0]))

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_samples": self.n_samples,
            "tools": [{"tool": t, "samples": self.counts[t], "fraction": f} for t, f in self.fractions],
        }

    def render(self) -> str:
        width = max([len("tool")] + [len(t) for t in self.counts])
        lines = [f"{'tool':<{width}}  {'samples':>7}  {'fraction':>8}"]
        lines += [f"{t:<{width}}  {self.counts[t]:>7}  {100 * f:>7.1f}%" for t, f in self.fractions]
        lines.append(f"({self.n_samples} samples)")
        return "\n".join(lines)


def _calls_of(rounds: Iterable[RoundRecord]) -> set[str]:
    return {c.tool_name for r in rounds for c in r.tool_calls}


def tool_usage_stats(transcript_dir: str | Path) -> ToolUsageReport:
    """Fraction of samples that called each tool at least once (successful or failed calls)."""
    root = Path(transcript_dir)
    paths = sorted(root.glob("*/transcript.json")) + sorted(root.glob("*.transcript.json"))
    if not paths:
        raise NoDataError(f"no transcripts under {root}")
    universe: set[str] = set()
    counts: dict[str, int] = {}
    for p in paths:
        t = Transcript.load(p)
        universe |= set(tool_subset(t.task))
        for name in _calls_of(t.rounds + t.rescue_rounds) - {SHOW_RESOURCE}:
            counts[name] = counts.get(name, 0) + 1
    for name in universe:
        counts.setdefault(name, 0)
    return ToolUsageReport(len(paths), counts)


# ---- compression sweep

SWEEP_SUBSAMPLING = 2  # Pillow's code for 4:2:0


def codec_header() -> dict[str, Any]:
    return {
        "encoder": "Pillow",
        "pillow_version": PIL.__version__,
        "libjpeg_version": features.version("jpg"),
        "chroma_subsampling": "4:2:0",
        "optimize": False,
        "progressive": False,
        "sample_window": 1,
    }


def _jpeg_roundtrip(raster: Raster, quality: int) -> Raster:
    buf = io.BytesIO()
    Image.fromarray(raster.pixels, "RGB").save(buf, format="JPEG", quality=quality, subsampling=SWEEP_SUBSAMPLING)
    buf.seek(0)
    with Image.open(buf) as im:
        return Raster(np.asarray(im.convert("RGB")))


def _probe_hex(raster: Raster, point: tuple[int, int]) -> tuple[str, tuple[int, int, int]]:
    reg = Registry(raster)
    outcome = sample_color(reg, "original", point, 1)
    return outcome.value["hex"], tuple(outcome.value["rgb"])


def compression_sweep(raster: Raster, probes: Sequence[Sequence[int]], qualities: Sequence[int]) -> dict[str, Any]:
    """JPEG (4:2:0) round trip per quality; per-probe colour and per-channel delta vs lossless."""
    points = [(int(p[0]), int(p[1])) for p in probes]
    for x, y in points:
        if not (0 <= x < raster.width and 0 <= y < raster.height):
            raise ValueError(f"probe ({x},{y}) outside image {raster.width}x{raster.height}")
    for q in qualities:
        if isinstance(q, bool) or not isinstance(q, int) or not 1 <= q <= 100:
            raise ValueError(f"JPEG quality must be an integer in [1, 100], got {q!r}")
    base = [_probe_hex(raster, p) for p in points]
    rows = []
    for q in qualities:
        try:
            decoded = _jpeg_roundtrip(raster, q)
        except (OSError, ValueError) as exc:
            raise SweepError(q, exc) from exc
        for (x, y), (hex0, rgb0) in zip(points, base):
            hexq, rgbq = _probe_hex(decoded, (x, y))
            delta = [b - a for a, b in zip(rgb0, rgbq)]
            rows.append({
                "quality": q, "x": x, "y": y, "lossless": hex0, "jpeg": hexq,
                "delta": delta, "max_abs_delta": max(abs(d) for d in delta),
                "flagged": any(abs(d) >= 1 for d in delta),
            })
    return {"codec": codec_header(), "probes": [list(p) for p in points], "qualities": list(qualities),
            "rows": rows}


def render_sweep(report: dict[str, Any]) -> str:
    lines = [f"{'q':>3}  {'probe':>11}  {'lossless':>8}  {'jpeg':>8}  {'delta (r,g,b)':>15}  flag"]
    for r in report["rows"]:
        d = ",".join(f"{v:+d}" for v in r["delta"])
        lines.append(f"{r['quality']:>3}  {'(' + str(r['x']) + ',' + str(r['y']) + ')':>11}  {r['lossless']:>8}  "
                     f"{r['jpeg']:>8}  {d:>15}  {'*' if r['flagged'] else ''}")
    return "\n".join(lines)
