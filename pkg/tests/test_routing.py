import pytest

from illusion_agent.routing import (
    StrategyFileError,
    TaskKind,
    build_rescue_prompt,
    build_system_prompt,
    category_table,
    load_strategies,
    tool_schemas,
    tool_subset,
)


def test_tool_subsets():
    t1, t2 = tool_subset(TaskKind.I), tool_subset(TaskKind.II)
    assert len(t1) == 5 and "sample_color" not in t1
    assert set(t1) == {"draw_line", "draw_rectangle", "draw_circle", "crop", "compare_crops"}
    assert len(t2) == 10 and "blur" in t2
    assert set(t1) < set(t2)


def test_category_counts_and_names():
    t1 = [c.name for c in category_table(TaskKind.I)]
    assert t1 == [
        "size comparison", "color comparison", "line length", "line straightness",
        "line alignment", "line parallelism", "boundary detection",
    ]
    t2 = [c.name for c in category_table(TaskKind.II)]
    assert len(t2) == 16
    for name in ["counting", "hidden-content recovery", "impossible figures", "forced perspective / scale tricks",
                 "entity realism", "spatial relation / support", "physical plausibility / affordance"]:
        assert name in t2


@pytest.mark.parametrize("task", list(TaskKind))
def test_recommended_tools_within_subset(task):
    allowed = set(tool_subset(task))
    for cat in category_table(task):
        assert cat.recommended_tools and set(cat.recommended_tools) <= allowed
        assert cat.procedure


def test_line_straightness_draws_then_crops():
    cat = next(c for c in category_table(TaskKind.I) if c.name == "line straightness")
    tools = list(cat.recommended_tools)
    assert tools.index("draw_line") < tools.index("crop")
    assert "horizontal reference line" in cat.procedure[0]


def test_boundary_strategy_checks_multiple_interfaces():
    cat = next(c for c in category_table(TaskKind.I) if c.name == "boundary detection")
    text = " ".join(cat.procedure)
    assert "interface" in text and "separator" in text and "multiple boundaries" in text


def test_prompt_deterministic_and_complete():
    a = build_system_prompt(TaskKind.I)
    b = build_system_prompt(TaskKind.I)
    assert a == b
    text = a.system_prompt
    assert a.version in text.splitlines()[0]
    assert "sample_color" not in text and "isolate_color" not in text
    for cat in category_table(TaskKind.I):
        assert cat.name in text
    assert "Classify the question into exactly one" in text
    assert "original" in text and "img_001" in text
    assert "answer: Yes | No" in text
    assert "No worked examples" in text
    assert a.tool_subset == tool_subset(TaskKind.I)


def test_task2_prompt_mentions_ishihara():
    text = build_system_prompt(TaskKind.II).system_prompt
    assert "Ishihara" in text
    assert "choice: A | B | C | D" in text


def test_rescue_prompt_is_compressed():
    full = build_system_prompt(TaskKind.II).system_prompt
    rescue = build_rescue_prompt(TaskKind.II).system_prompt
    assert len(rescue) < len(full) / 2
    assert "isolate_color each plausible family" not in rescue


def test_schemas_include_show_resource():
    names = [s["name"] for s in tool_schemas(TaskKind.I)]
    assert names[-1] == "show_resource" and "blur" not in names


def test_task_parse():
    assert TaskKind.parse("1") is TaskKind.I and TaskKind.parse(2) is TaskKind.II
    assert TaskKind.parse("TaskII") is TaskKind.II
    with pytest.raises(ValueError):
        TaskKind.parse("3")


def test_edited_strategy_file(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text(
        "version: custom-1\ntask: 1\ncategories:\n"
        "  - name: size comparison\n    description: d\n    tools: [crop]\n    steps: [look]\n"
    )
    table = load_strategies(p)
    bundle = build_system_prompt(TaskKind.I, table)
    assert "custom-1" in bundle.version and "size comparison" in bundle.system_prompt


def test_strategy_file_rejects_foreign_tool(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text(
        "version: x\ntask: 1\ncategories:\n"
        "  - name: c\n    description: d\n    tools: [sample_color]\n    steps: [look]\n"
    )
    with pytest.raises(StrategyFileError):
        load_strategies(p)
