"""Generic raster tools exposed to the agent.

Every operation reads one or more registered resources, builds a new raster
from a copy, and allocates it in the registry. Sources are never written to.
Colour arithmetic is integer-only with round-half-up so outputs are
bit-reproducible.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .registry import Raster, Registry, UnknownResourceError

# Guards against absurd agent-issued geometry; far larger than any image we handle.
MAX_COORD = 100_000
MAX_THICKNESS = 64

SEPARATOR_WIDTH = 8
SEPARATOR_RGB = (0x80, 0x80, 0x80)
SLACK_RGB = (0xFF, 0xFF, 0xFF)
MARKER_RGB = (0xFF, 0x00, 0xFF)
MARKER_LENGTH = 9

HUE_CENTERS = {
    "red": 0,
    "orange": 30,
    "yellow": 60,
    "green": 120,
    "cyan": 180,
    "blue": 240,
    "purple": 275,
    "magenta": 310,
}
MIN_SATURATION = 0.2
MIN_VALUE = 0.15

_HEX_RE = re.compile(r"^#?([0-9a-fA-F]{6})$")


class ToolError(ValueError):
    """Invalid arguments for a tool call (bad geometry, colour, enum...)."""


@dataclass(frozen=True)
class ToolOutcome:
    new_id: str
    observation: str
    value: dict[str, Any] | None = None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"new_id": self.new_id, "observation": self.observation}
        if self.value is not None:
            d["value"] = self.value
        return d


# ---------------------------------------------------------------- colours


def parse_hex(value: Any) -> tuple[int, int, int]:
    if isinstance(value, (list, tuple)) and len(value) == 3:
        rgb = tuple(int(v) for v in value)
        if all(0 <= v <= 255 for v in rgb):
            return rgb  # type: ignore[return-value]
        raise ToolError(f"colour channels out of range: {value!r}")
    if not isinstance(value, str):
        raise ToolError(f"colour must be a '#RRGGBB' string, got {value!r}")
    m = _HEX_RE.match(value.strip())
    if not m:
        raise ToolError(f"malformed colour {value!r}; expected '#RRGGBB'")
    h = m.group(1)
    return int(h[0:2], 16), int(h[2:4], 16), int(h[4:6], 16)


def to_hex(rgb: tuple[int, int, int] | np.ndarray) -> str:
    r, g, b = (int(c) for c in rgb)
    return f"#{r:02X}{g:02X}{b:02X}"


def _div_round_half_up(num: np.ndarray | int, den: int) -> np.ndarray | int:
    return (2 * num + den) // (2 * den)


# ---------------------------------------------------------------- rasterisation


def disc_offsets(thickness: int) -> np.ndarray:
    """Offsets of a filled disc of the given diameter, as an (M, 2) array of (dx, dy).

    Even diameters are centred half a pixel down-right of the anchor pixel.
    """
    e = 1 if thickness % 2 == 0 else 0
    lo, hi = -((thickness - 1) // 2), thickness // 2
    r = np.arange(lo, hi + 1)
    ox, oy = np.meshgrid(r, r)
    keep = (2 * ox - e) ** 2 + (2 * oy - e) ** 2 <= thickness * thickness
    return np.stack([ox[keep], oy[keep]], axis=1)


def _index_window(start: int, step: int, n: int, lo: int, hi: int) -> tuple[int, int]:
    # indices i in [0, n] with lo <= start + step*i <= hi
    if step > 0:
        a, b = lo - start, hi - start
    else:
        a, b = start - hi, start - lo
    return max(a, 0), min(b, n)


def line_points(
    x0: int, y0: int, x1: int, y1: int, bounds: tuple[int, int, int, int] | None = None
) -> np.ndarray:
    """Pixel path of a segment by integer midpoint stepping, as an (N, 2) array of (x, y).

    The minor coordinate at step ``i`` along the major axis is ``i*minor/major``
    rounded half up. Endpoints are put in lexicographic order first, so the
    path does not depend on which end is given first. ``bounds`` =
    (xmin, ymin, xmax, ymax) inclusive limits the major-axis range computed.
    """
    if (x1, y1) < (x0, y0):
        x0, y0, x1, y1 = x1, y1, x0, y0
    dx, dy = x1 - x0, y1 - y0
    adx, ady = abs(dx), abs(dy)
    sx = 1 if dx >= 0 else -1
    sy = 1 if dy >= 0 else -1
    if adx >= ady:
        n, m0, step, lo_hi = adx, x0, sx, (bounds[0], bounds[2]) if bounds else None
    else:
        n, m0, step, lo_hi = ady, y0, sy, (bounds[1], bounds[3]) if bounds else None
    i_lo, i_hi = (0, n) if lo_hi is None else _index_window(m0, step, n, *lo_hi)
    if i_lo > i_hi:
        return np.empty((0, 2), dtype=np.int64)
    i = np.arange(i_lo, i_hi + 1, dtype=np.int64)
    if adx >= ady:
        xs = x0 + sx * i
        ys = y0 + sy * ((2 * i * ady + adx) // (2 * adx)) if adx else np.full_like(i, y0)
    else:
        ys = y0 + sy * i
        xs = x0 + sx * ((2 * i * adx + ady) // (2 * ady))
    return np.stack([xs, ys], axis=1)


def circle_points(cx: int, cy: int, radius: int, limit: int | None = None) -> np.ndarray:
    """Midpoint-rule circle outline as an (N, 2) array of (x, y).

    In the first octant (0 <= y <= x) each row y takes the integer x with
    (2x-1)^2 <= 4(r^2 - y^2) < (2x+1)^2; the rest follows by 8-way symmetry.
    """
    ymax = radius if limit is None else min(radius, limit)
    pts = []
    for y in range(ymax + 1):
        x = (math.isqrt(4 * (radius * radius - y * y)) + 1) // 2
        if y > x:
            break
        pts.append((x, y))
    if not pts:
        return np.empty((0, 2), dtype=np.int64)
    base = np.array(pts, dtype=np.int64)
    a, b = base[:, 0], base[:, 1]
    sym = []
    for u, v in ((a, b), (b, a)):
        for su in (1, -1):
            for sv in (1, -1):
                sym.append(np.stack([cx + su * u, cy + sv * v], axis=1))
    return np.unique(np.concatenate(sym), axis=0)


def stamp(arr: np.ndarray, points: np.ndarray, rgb: tuple[int, int, int], thickness: int) -> None:
    """Paint a disc of diameter *thickness* at every point; out-of-bounds pixels are dropped."""
    if len(points) == 0:
        return
    h, w = arr.shape[:2]
    for ox, oy in disc_offsets(thickness):
        xs = points[:, 0] + ox
        ys = points[:, 1] + oy
        ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
        arr[ys[ok], xs[ok]] = rgb


def _pad_bounds(w: int, h: int, thickness: int) -> tuple[int, int, int, int]:
    r = thickness
    return (-r, -r, w - 1 + r, h - 1 + r)


def raster_line(arr: np.ndarray, p0, p1, rgb, thickness: int) -> None:
    h, w = arr.shape[:2]
    pts = line_points(p0[0], p0[1], p1[0], p1[1], _pad_bounds(w, h, thickness))
    stamp(arr, pts, rgb, thickness)


def raster_rectangle(arr: np.ndarray, corner0, corner1, rgb, thickness: int) -> None:
    x0, x1 = sorted((corner0[0], corner1[0]))
    y0, y1 = sorted((corner0[1], corner1[1]))
    h, w = arr.shape[:2]
    b = _pad_bounds(w, h, thickness)
    pts = np.concatenate(
        [
            line_points(x0, y0, x1, y0, b),
            line_points(x1, y0, x1, y1, b),
            line_points(x0, y1, x1, y1, b),
            line_points(x0, y0, x0, y1, b),
        ]
    )
    stamp(arr, pts, rgb, thickness)


def raster_circle(arr: np.ndarray, center, radius: int, rgb, thickness: int) -> None:
    h, w = arr.shape[:2]
    cx, cy = center
    # rows past this cannot land on the canvas in any octant
    reach = max(w, h) + abs(cx) + abs(cy) + thickness
    stamp(arr, circle_points(cx, cy, radius, limit=reach), rgb, thickness)


# ---------------------------------------------------------------- pure kernels


def clamp_rect(rect: tuple[int, int, int, int], width: int, height: int) -> tuple[int, int, int, int]:
    """Clamp (x0, y0, x1, y1), exclusive on the far side, to the raster bounds."""
    x0, y0, x1, y1 = rect
    if x0 > x1:
        x0, x1 = x1, x0
    if y0 > y1:
        y0, y1 = y1, y0
    cx0, cy0 = max(0, x0), max(0, y0)
    cx1, cy1 = min(width, x1), min(height, y1)
    if cx0 >= cx1 or cy0 >= cy1:
        raise ToolError(f"crop outside image: rect {rect} does not overlap {width}x{height}")
    return cx0, cy0, cx1, cy1


def side_by_side(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    h = max(left.shape[0], right.shape[0])
    w = left.shape[1] + SEPARATOR_WIDTH + right.shape[1]
    out = np.empty((h, w, 3), dtype=np.uint8)
    out[:] = SLACK_RGB
    out[: left.shape[0], : left.shape[1]] = left
    out[:, left.shape[1] : left.shape[1] + SEPARATOR_WIDTH] = SEPARATOR_RGB
    out[: right.shape[0], left.shape[1] + SEPARATOR_WIDTH :] = right
    return out


def grid_positions(extent: int, parts: int) -> list[int]:
    return [_div_round_half_up(j * extent, parts) for j in range(1, parts)]


def window_mean(px: np.ndarray, x: int, y: int, k: int) -> tuple[int, int, int]:
    half = k // 2
    h, w = px.shape[:2]
    win = px[max(0, y - half) : min(h, y + half + 1), max(0, x - half) : min(w, x + half + 1)]
    n = win.shape[0] * win.shape[1]
    sums = win.reshape(-1, 3).astype(np.int64).sum(axis=0)
    return tuple(int(_div_round_half_up(int(s), n)) for s in sums)  # type: ignore[return-value]


def hsv_planes(px: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hue in degrees [0, 360), saturation and value in [0, 1]."""
    c = px.astype(np.float64)
    r, g, b = c[..., 0], c[..., 1], c[..., 2]
    mx = c.max(axis=-1)
    mn = c.min(axis=-1)
    delta = mx - mn
    safe = np.where(delta == 0, 1.0, delta)
    hue = np.where(
        mx == r,
        np.mod((g - b) / safe, 6.0),
        np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    )
    hue = np.where(delta == 0, 0.0, hue * 60.0)
    sat = np.where(mx == 0, 0.0, delta / np.where(mx == 0, 1.0, mx))
    return hue, sat, mx / 255.0


def isolate_mask(px: np.ndarray, family: str, tolerance: float) -> np.ndarray:
    hue, sat, val = hsv_planes(px)
    d = np.abs(hue - HUE_CENTERS[family])
    d = np.minimum(d, 360.0 - d)
    return (d <= tolerance) & (sat >= MIN_SATURATION) & (val >= MIN_VALUE)


def box_pass(px: np.ndarray, radius: int) -> np.ndarray:
    """One (2r+1)^2 mean filter pass, clamp-to-edge, rounded half up once."""
    k = 2 * radius + 1
    padded = np.pad(px.astype(np.int64), ((radius, radius), (radius, radius), (0, 0)), mode="edge")
    c = np.cumsum(padded, axis=0)
    c = np.concatenate([np.zeros_like(c[:1]), c], axis=0)
    rows = c[k:] - c[:-k]
    c = np.cumsum(rows, axis=1)
    c = np.concatenate([np.zeros_like(c[:, :1]), c], axis=1)
    sums = c[:, k:] - c[:, :-k]
    return _div_round_half_up(sums, k * k).astype(np.uint8)


def box_blur(px: np.ndarray, radius: int, passes: int = 3) -> np.ndarray:
    out = px
    for _ in range(passes):
        out = box_pass(out, radius)
    return out


# ---------------------------------------------------------------- shapes


@dataclass(frozen=True)
class Line:
    p0: tuple[int, int]
    p1: tuple[int, int]


@dataclass(frozen=True)
class Rectangle:
    # corner points, both inclusive
    p0: tuple[int, int]
    p1: tuple[int, int]


@dataclass(frozen=True)
class Circle:
    center: tuple[int, int]
    radius: int


Shape = Line | Rectangle | Circle


def _check_coord(*values: int) -> None:
    for v in values:
        if abs(v) > MAX_COORD:
            raise ToolError(f"coordinate {v} outside supported range ±{MAX_COORD}")


# ---------------------------------------------------------------- operations


def draw_primitive(
    reg: Registry, src: str, shape: Shape, color: Any = "#FF0000", thickness: int = 1
) -> ToolOutcome:
    rgb = parse_hex(color)
    if thickness < 1:
        raise ToolError(f"thickness must be >= 1, got {thickness}")
    if thickness > MAX_THICKNESS:
        raise ToolError(f"thickness must be <= {MAX_THICKNESS}, got {thickness}")
    source = reg.get(src)
    arr = source.raster.copy_array()
    if isinstance(shape, Line):
        _check_coord(*shape.p0, *shape.p1)
        raster_line(arr, shape.p0, shape.p1, rgb, thickness)
        name, args = "draw_line", {"x0": shape.p0[0], "y0": shape.p0[1], "x1": shape.p1[0], "y1": shape.p1[1]}
        what = f"line {shape.p0}->{shape.p1}"
    elif isinstance(shape, Rectangle):
        _check_coord(*shape.p0, *shape.p1)
        raster_rectangle(arr, shape.p0, shape.p1, rgb, thickness)
        name, args = "draw_rectangle", {"x0": shape.p0[0], "y0": shape.p0[1], "x1": shape.p1[0], "y1": shape.p1[1]}
        what = f"rectangle {shape.p0}-{shape.p1}"
    elif isinstance(shape, Circle):
        if shape.radius < 0:
            raise ToolError(f"radius must be >= 0, got {shape.radius}")
        _check_coord(*shape.center, shape.radius)
        raster_circle(arr, shape.center, shape.radius, rgb, thickness)
        name, args = "draw_circle", {"cx": shape.center[0], "cy": shape.center[1], "radius": shape.radius}
        what = f"circle at {shape.center} r={shape.radius}"
    else:
        raise ToolError(f"unknown shape {shape!r}")
    args.update(src=src, color=to_hex(rgb), thickness=thickness)
    new_id = reg.allocate(Raster(arr), name, args, [src])
    return ToolOutcome(new_id, f"{new_id}: {what} in {to_hex(rgb)} (thickness {thickness}) drawn on a copy of {src}")


def crop(reg: Registry, src: str, rect: tuple[int, int, int, int]) -> ToolOutcome:
    _check_coord(*rect)
    source = reg.get(src).raster
    x0, y0, x1, y1 = clamp_rect(rect, source.width, source.height)
    out = source.pixels[y0:y1, x0:x1]
    args = {"src": src, "x0": rect[0], "y0": rect[1], "x1": rect[2], "y1": rect[3]}
    new_id = reg.allocate(Raster(out), "crop", args, [src])
    return ToolOutcome(
        new_id,
        f"{new_id}: crop of {src} at ({x0},{y0})-({x1},{y1}), size {x1 - x0}x{y1 - y0}",
        {"rect": [x0, y0, x1, y1], "width": x1 - x0, "height": y1 - y0},
    )


def compare_crops(
    reg: Registry,
    src_a: str,
    rect_a: tuple[int, int, int, int],
    src_b: str,
    rect_b: tuple[int, int, int, int],
) -> ToolOutcome:
    _check_coord(*rect_a, *rect_b)
    ra, rb = reg.get(src_a).raster, reg.get(src_b).raster
    a = clamp_rect(rect_a, ra.width, ra.height)
    b = clamp_rect(rect_b, rb.width, rb.height)
    left = ra.pixels[a[1] : a[3], a[0] : a[2]]
    right = rb.pixels[b[1] : b[3], b[0] : b[2]]
    out = side_by_side(left, right)
    args = {
        "src_a": src_a, "a_x0": rect_a[0], "a_y0": rect_a[1], "a_x1": rect_a[2], "a_y1": rect_a[3],
        "src_b": src_b, "b_x0": rect_b[0], "b_y0": rect_b[1], "b_x1": rect_b[2], "b_y1": rect_b[3],
    }
    sources = [src_a] if src_a == src_b else [src_a, src_b]
    new_id = reg.allocate(Raster(out), "compare_crops", args, sources)
    fmt = lambda r: f"({r[0]},{r[1]})-({r[2]},{r[3]})"  # noqa: E731
    return ToolOutcome(
        new_id,
        f"{new_id}: left = {src_a} {fmt(a)}, right = {src_b} {fmt(b)}; "
        f"composite {out.shape[1]}x{out.shape[0]} with an {SEPARATOR_WIDTH}px gray separator",
        {"left": [src_a, *a], "right": [src_b, *b], "left_width": a[2] - a[0]},
    )


def overlay_grid(reg: Registry, src: str, rows: int, cols: int, color: Any = "#000000") -> ToolOutcome:
    rgb = parse_hex(color)
    source = reg.get(src).raster
    if rows < 1 or cols < 1:
        raise ToolError(f"rows and cols must be >= 1, got rows={rows} cols={cols}")
    if rows > source.height or cols > source.width:
        raise ToolError(f"grid {rows}x{cols} finer than image {source.width}x{source.height}")
    arr = source.copy_array()
    xs = grid_positions(source.width, cols)
    ys = grid_positions(source.height, rows)
    arr[:, xs] = rgb
    arr[ys, :] = rgb
    args = {"src": src, "rows": rows, "cols": cols, "color": to_hex(rgb)}
    new_id = reg.allocate(Raster(arr), "overlay_grid", args, [src])
    return ToolOutcome(
        new_id,
        f"{new_id}: {rows}x{cols} grid on {src}; vertical lines at x={xs}, horizontal lines at y={ys}",
        {"xs": xs, "ys": ys},
    )


def extract_channel(reg: Registry, src: str, channel: str) -> ToolOutcome:
    ch = str(channel).strip().upper()
    if ch not in ("R", "G", "B"):
        raise ToolError(f"channel must be one of R, G, B; got {channel!r}")
    source = reg.get(src).raster
    plane = source.pixels[..., "RGB".index(ch)]
    out = np.repeat(plane[..., None], 3, axis=2)
    new_id = reg.allocate(Raster(out), "extract_channel", {"src": src, "channel": ch}, [src])
    return ToolOutcome(new_id, f"{new_id}: {ch} channel of {src} shown as grayscale")


def sample_color(reg: Registry, src: str, point: tuple[int, int], window: int = 1) -> ToolOutcome:
    source = reg.get(src).raster
    x, y = point
    if not (0 <= x < source.width and 0 <= y < source.height):
        raise ToolError(f"point ({x},{y}) outside image {source.width}x{source.height}")
    if window < 1 or window % 2 == 0:
        raise ToolError(f"window must be an odd size >= 1, got {window}")
    rgb = window_mean(source.pixels, x, y, window)
    hexv = to_hex(rgb)
    arr = source.copy_array()
    half = MARKER_LENGTH // 2
    raster_line(arr, (x - half, y), (x + half, y), MARKER_RGB, 1)
    raster_line(arr, (x, y - half), (x, y + half), MARKER_RGB, 1)
    args = {"src": src, "x": x, "y": y, "window": window}
    new_id = reg.allocate(Raster(arr), "sample_color", args, [src])
    return ToolOutcome(
        new_id,
        f"{new_id}: sampled {src} at ({x},{y}) window {window}x{window}: color {hexv} "
        f"(rgb {rgb[0]},{rgb[1]},{rgb[2]}); marker drawn on a copy",
        {"hex": hexv, "rgb": list(rgb), "x": x, "y": y},
    )


def isolate_color(reg: Registry, src: str, family: str, hue_tolerance: float = 25) -> ToolOutcome:
    fam = str(family).strip().lower()
    if fam not in HUE_CENTERS:
        raise ToolError(f"unknown colour family {family!r}; expected one of {sorted(HUE_CENTERS)}")
    if not (0 < hue_tolerance < 180):
        raise ToolError(f"hue_tolerance must be in (0, 180), got {hue_tolerance}")
    source = reg.get(src).raster
    keep = isolate_mask(source.pixels, fam, hue_tolerance)
    arr = source.copy_array()
    arr[~keep] = (255, 255, 255)
    args = {"src": src, "family": fam, "hue_tolerance": hue_tolerance}
    new_id = reg.allocate(Raster(arr), "isolate_color", args, [src])
    frac = float(keep.mean())
    return ToolOutcome(
        new_id,
        f"{new_id}: kept {fam} pixels of {src} (hue ±{hue_tolerance}°), {frac:.1%} of the image; rest set to white",
        {"kept_fraction": round(frac, 6)},
    )


def blur(reg: Registry, src: str, radius: int) -> ToolOutcome:
    if radius < 1:
        raise ToolError(f"radius must be >= 1, got {radius}")
    if radius > MAX_COORD:
        raise ToolError(f"radius {radius} outside supported range")
    source = reg.get(src).raster
    out = box_blur(source.pixels, radius)
    new_id = reg.allocate(Raster(out), "blur", {"src": src, "radius": radius}, [src])
    return ToolOutcome(new_id, f"{new_id}: {src} blurred (3 box passes, radius {radius})")


# ---------------------------------------------------------------- dispatch by external name


@dataclass(frozen=True)
class Param:
    name: str
    kind: str  # "int" | "number" | "str" | "color" | "id"
    description: str
    default: Any = None
    required: bool = True
    enum: tuple[str, ...] | None = None


def _p(name, kind, description, default=None, enum=None):
    return Param(name, kind, description, default, default is None, enum)


_SRC = _p("src", "id", "id of the resource to work on, e.g. 'original' or 'img_002'")
_COLOR = _p("color", "color", "'#RRGGBB' colour", "#FF0000")
_THICK = _p("thickness", "int", "stroke width in pixels (>= 1)", 2)


def _rect_params(prefix: str = "") -> list[Param]:
    return [
        _p(f"{prefix}x0", "int", "left edge (inclusive)"),
        _p(f"{prefix}y0", "int", "top edge (inclusive)"),
        _p(f"{prefix}x1", "int", "right edge (exclusive)"),
        _p(f"{prefix}y1", "int", "bottom edge (exclusive)"),
    ]


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    params: tuple[Param, ...]
    handler: Callable[[Registry, dict[str, Any]], ToolOutcome]

    def schema(self) -> dict[str, Any]:
        props: dict[str, Any] = {}
        for p in self.params:
            t = {"int": "integer", "number": "number"}.get(p.kind, "string")
            prop: dict[str, Any] = {"type": t, "description": p.description}
            if p.enum:
                prop["enum"] = list(p.enum)
            if not p.required:
                prop["default"] = p.default
            props[p.name] = prop
        return {
            "name": self.name,
            "description": self.description,
            "parameters": {
                "type": "object",
                "properties": props,
                "required": [p.name for p in self.params if p.required],
                "additionalProperties": False,
            },
        }


def _coerce(p: Param, value: Any) -> Any:
    if p.kind in ("int", "number"):
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise ToolError(f"argument {p.name!r} must be a number, got {value!r}")
        try:
            num = float(value) if isinstance(value, str) else value
        except ValueError:
            raise ToolError(f"argument {p.name!r} must be a number, got {value!r}") from None
        if isinstance(num, float) and not math.isfinite(num):
            raise ToolError(f"argument {p.name!r} must be finite")
        if p.kind == "number":
            return num
        # agents sometimes send 12.0 or 12.5 for pixel coordinates
        return int(math.floor(num + 0.5)) if isinstance(num, float) else int(num)
    if p.kind == "color":
        return to_hex(parse_hex(value))
    if not isinstance(value, str):
        raise ToolError(f"argument {p.name!r} must be a string, got {value!r}")
    if p.enum and value.strip().lower() not in {e.lower() for e in p.enum}:
        raise ToolError(f"argument {p.name!r} must be one of {list(p.enum)}, got {value!r}")
    return value.strip()


def bind_args(spec: ToolSpec, raw: dict[str, Any] | None) -> dict[str, Any]:
    raw = dict(raw or {})
    known = {p.name for p in spec.params}
    extra = sorted(set(raw) - known)
    if extra:
        raise ToolError(f"{spec.name}: unexpected argument(s) {extra}")
    out = {}
    for p in spec.params:
        if p.name in raw and raw[p.name] is not None:
            out[p.name] = _coerce(p, raw[p.name])
        elif p.required:
            raise ToolError(f"{spec.name}: missing required argument {p.name!r}")
        else:
            out[p.name] = p.default
    return out


def _rect(a: dict[str, Any], prefix: str = "") -> tuple[int, int, int, int]:
    return a[f"{prefix}x0"], a[f"{prefix}y0"], a[f"{prefix}x1"], a[f"{prefix}y1"]


TOOL_SPECS: dict[str, ToolSpec] = {
    s.name: s
    for s in [
        ToolSpec(
            "draw_line",
            "Draw a straight line segment from (x0,y0) to (x1,y1) on a copy of a resource.",
            (_SRC, _p("x0", "int", "start x"), _p("y0", "int", "start y"), _p("x1", "int", "end x"),
             _p("y1", "int", "end y"), _COLOR, _THICK),
            lambda reg, a: draw_primitive(reg, a["src"], Line((a["x0"], a["y0"]), (a["x1"], a["y1"])),
                                          a["color"], a["thickness"]),
        ),
        ToolSpec(
            "draw_rectangle",
            "Draw a rectangle outline with corners (x0,y0) and (x1,y1) on a copy of a resource.",
            (_SRC, _p("x0", "int", "corner x"), _p("y0", "int", "corner y"), _p("x1", "int", "opposite corner x"),
             _p("y1", "int", "opposite corner y"), _COLOR, _THICK),
            lambda reg, a: draw_primitive(reg, a["src"], Rectangle((a["x0"], a["y0"]), (a["x1"], a["y1"])),
                                          a["color"], a["thickness"]),
        ),
        ToolSpec(
            "draw_circle",
            "Draw a circle outline centred at (cx,cy) on a copy of a resource.",
            (_SRC, _p("cx", "int", "centre x"), _p("cy", "int", "centre y"), _p("radius", "int", "radius in pixels"),
             _COLOR, _THICK),
            lambda reg, a: draw_primitive(reg, a["src"], Circle((a["cx"], a["cy"]), a["radius"]),
                                          a["color"], a["thickness"]),
        ),
        ToolSpec(
            "crop",
            "Crop a rectangular region of a resource for zoomed-in inspection. Partially "
            "out-of-bounds rectangles are clamped.",
            (_SRC, *_rect_params()),
            lambda reg, a: crop(reg, a["src"], _rect(a)),
        ),
        ToolSpec(
            "compare_crops",
            "Place two cropped regions side by side (A left, B right) separated by a gray bar.",
            (_p("src_a", "id", "resource for the left crop"), *_rect_params("a_"),
             _p("src_b", "id", "resource for the right crop"), *_rect_params("b_")),
            lambda reg, a: compare_crops(reg, a["src_a"], _rect(a, "a_"), a["src_b"], _rect(a, "b_")),
        ),
        ToolSpec(
            "overlay_grid",
            "Overlay a rows x cols grid of 1px lines on a copy of a resource.",
            (_SRC, _p("rows", "int", "number of rows (>= 1)"), _p("cols", "int", "number of columns (>= 1)"),
             _p("color", "color", "'#RRGGBB' line colour", "#000000")),
            lambda reg, a: overlay_grid(reg, a["src"], a["rows"], a["cols"], a["color"]),
        ),
        ToolSpec(
            "extract_channel",
            "Show one colour channel (R, G or B) of a resource as a grayscale image.",
            (_SRC, _p("channel", "str", "R, G or B", enum=("R", "G", "B"))),
            lambda reg, a: extract_channel(reg, a["src"], a["channel"]),
        ),
        ToolSpec(
            "sample_color",
            "Return the mean colour (hex) of a window x window patch centred at (x,y); "
            "a copy with a crosshair at the sampled point is registered.",
            (_SRC, _p("x", "int", "x coordinate"), _p("y", "int", "y coordinate"),
             _p("window", "int", "odd window size", 1)),
            lambda reg, a: sample_color(reg, a["src"], (a["x"], a["y"]), a["window"]),
        ),
        ToolSpec(
            "isolate_color",
            "Keep only pixels of one hue family (e.g. to reveal Ishihara-style figures); the rest become white.",
            (_SRC, _p("family", "str", "colour family", enum=tuple(HUE_CENTERS)),
             _p("hue_tolerance", "number", "hue half-width in degrees", 25)),
            lambda reg, a: isolate_color(reg, a["src"], a["family"], a["hue_tolerance"]),
        ),
        ToolSpec(
            "blur",
            "Strong blur (3 box passes) to reveal low-frequency hidden patterns.",
            (_SRC, _p("radius", "int", "box radius in pixels (>= 1)")),
            lambda reg, a: blur(reg, a["src"], a["radius"]),
        ),
    ]
}

ALL_TOOL_NAMES = tuple(TOOL_SPECS)


def call_tool(reg: Registry, name: str, raw_args: dict[str, Any] | None) -> ToolOutcome:
    """Run a tool by its external name. Raises ToolError or UnknownResourceError."""
    spec = TOOL_SPECS.get(name)
    if spec is None:
        raise ToolError(f"unknown tool {name!r}")
    args = bind_args(spec, raw_args)
    for p in spec.params:
        if p.kind == "id" and args[p.name] not in reg:
            raise UnknownResourceError(args[p.name])
    return spec.handler(reg, args)
