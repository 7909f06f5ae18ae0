"""Task-specific system prompts: category taxonomy, tool strategies, tool subsets."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from string import Template
from typing import Any

import yaml

from .tools import TOOL_SPECS

CORE_TOOLS = ("draw_line", "draw_rectangle", "draw_circle", "crop", "compare_crops")
EXTENSION_TOOLS = ("overlay_grid", "extract_channel", "sample_color", "isolate_color", "blur")

SHOW_RESOURCE = "show_resource"


class TaskKind(enum.Enum):
    I = 1  # noqa: E741  binary Yes/No
    II = 2  # four-way A-D

    @classmethod
    def parse(cls, value: Any) -> TaskKind:
        if isinstance(value, TaskKind):
            return value
        text = str(value).strip().upper().replace("TASK", "").replace("_", "").strip()
        table = {"1": cls.I, "I": cls.I, "2": cls.II, "II": cls.II}
        if text not in table:
            raise ValueError(f"unknown task {value!r}; expected 1 or 2")
        return table[text]

    @property
    def labels(self) -> tuple[str, ...]:
        return ("Yes", "No") if self is TaskKind.I else ("A", "B", "C", "D")


class StrategyFileError(ValueError):
    pass


@dataclass(frozen=True)
class CategoryStrategy:
    name: str
    description: str
    recommended_tools: tuple[str, ...]
    procedure: tuple[str, ...]


@dataclass(frozen=True)
class StrategyTable:
    version: str
    task: TaskKind
    categories: tuple[CategoryStrategy, ...]


@dataclass(frozen=True)
class PromptBundle:
    system_prompt: str
    tool_subset: tuple[str, ...]
    answer_schema: str
    version: str


def tool_subset(task: TaskKind) -> tuple[str, ...]:
    task = TaskKind.parse(task)
    return CORE_TOOLS if task is TaskKind.I else CORE_TOOLS + EXTENSION_TOOLS


def _data_text(name: str) -> str:
    return resources.files("illusion_agent").joinpath("data").joinpath(name).read_text(encoding="utf-8")


def load_strategies(source: str | Path | None = None, task: TaskKind | None = None) -> StrategyTable:
    """Load a strategy file. With no *source*, the packaged file for *task* is used."""
    if source is None:
        if task is None:
            raise StrategyFileError("need a strategy file path or a task")
        text = _data_text(f"strategies_task{TaskKind.parse(task).value}.yaml")
        origin = f"<packaged task {TaskKind.parse(task).value}>"
    else:
        text = Path(source).read_text(encoding="utf-8")
        origin = str(source)
    try:
        doc = yaml.safe_load(text)
        file_task = TaskKind.parse(doc["task"])
        version = str(doc["version"])
        records = doc["categories"]
    except (yaml.YAMLError, KeyError, TypeError, ValueError) as exc:
        raise StrategyFileError(f"{origin}: {exc}") from exc
    if task is not None and file_task is not TaskKind.parse(task):
        raise StrategyFileError(f"{origin}: file is for task {file_task.value}, wanted {TaskKind.parse(task).value}")
    allowed = set(tool_subset(file_task))
    cats = []
    for i, rec in enumerate(records, 1):
        try:
            cat = CategoryStrategy(
                str(rec["name"]), str(rec["description"]), tuple(rec["tools"]), tuple(str(s) for s in rec["steps"])
            )
        except (KeyError, TypeError) as exc:
            raise StrategyFileError(f"{origin}: category #{i} is missing {exc}") from exc
        bad = [t for t in cat.recommended_tools if t not in allowed]
        if bad:
            raise StrategyFileError(f"{origin}: category {cat.name!r} uses tools outside the task subset: {bad}")
        cats.append(cat)
    names = [c.name for c in cats]
    if len(set(names)) != len(names):
        raise StrategyFileError(f"{origin}: duplicate category names")
    return StrategyTable(version, file_task, tuple(cats))


@lru_cache(maxsize=None)
def _packaged(task: TaskKind) -> StrategyTable:
    return load_strategies(task=task)


def category_table(task: TaskKind) -> list[CategoryStrategy]:
    return list(_packaged(TaskKind.parse(task)).categories)


def answer_schema(task: TaskKind) -> str:
    if TaskKind.parse(task) is TaskKind.I:
        field = "answer: Yes | No"
    else:
        field = "choice: A | B | C | D"
    return f"```answer\n{field}\nrationale: <one sentence citing the resource ids you relied on>\n```"


def prompt_version(table: StrategyTable) -> str:
    return f"illusion-routing/{table.version}"


def _render_categories(table: StrategyTable, with_steps: bool) -> str:
    lines = []
    for n, cat in enumerate(table.categories, 1):
        lines.append(f"{n}. {cat.name}: {cat.description}")
        lines.append(f"   tools: {', '.join(cat.recommended_tools)}")
        if with_steps:
            lines.extend(f"   {k}) {step}" for k, step in enumerate(cat.procedure, 1))
    return "\n".join(lines)


def _render(template_name: str, table: StrategyTable, with_steps: bool) -> PromptBundle:
    task = table.task
    kind = "a Yes/No question" if task is TaskKind.I else "a four-way multiple-choice question (A-D)"
    subset = tool_subset(task)
    schema = answer_schema(task)
    version = prompt_version(table)
    text = Template(_data_text(template_name)).substitute(
        version=version,
        question_kind=kind,
        categories=_render_categories(table, with_steps),
        tools=", ".join(subset + (SHOW_RESOURCE,)),
        answer_schema=schema,
    )
    return PromptBundle(text, subset, schema, version)


def build_system_prompt(task: TaskKind, table: StrategyTable | None = None) -> PromptBundle:
    task = TaskKind.parse(task)
    return _render("system_prompt.txt", table or _packaged(task), with_steps=True)


def build_rescue_prompt(task: TaskKind, table: StrategyTable | None = None) -> PromptBundle:
    """Compressed prompt for the rescue agent: category summaries, no step lists."""
    task = TaskKind.parse(task)
    return _render("rescue_prompt.txt", table or _packaged(task), with_steps=False)


SHOW_RESOURCE_SCHEMA = {
    "name": SHOW_RESOURCE,
    "description": "Show an existing resource again (no new resource is created).",
    "parameters": {
        "type": "object",
        "properties": {"id": {"type": "string", "description": "resource id, e.g. 'img_003'"}},
        "required": ["id"],
        "additionalProperties": False,
    },
}


def tool_schemas(task: TaskKind) -> list[dict[str, Any]]:
    return [TOOL_SPECS[name].schema() for name in tool_subset(task)] + [SHOW_RESOURCE_SCHEMA]
