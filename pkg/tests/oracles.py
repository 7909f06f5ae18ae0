"""Naive per-pixel reference implementations used as test oracles.

Deliberately slow and loop-based; they share no code with the package.
"""

import math


def to_grid(arr):
    return [[tuple(int(c) for c in arr[y, x]) for x in range(arr.shape[1])] for y in range(arr.shape[0])]


def bresenham(x0, y0, x1, y1):
    """Classic error-accumulator stepping; ties round away from the start point."""
    if (x1, y1) < (x0, y0):
        x0, y0, x1, y1 = x1, y1, x0, y0
    dx, dy = abs(x1 - x0), abs(y1 - y0)
    sx = 1 if x1 >= x0 else -1
    sy = 1 if y1 >= y0 else -1
    pts = []
    if dx >= dy:
        err, k = dx, 0
        for i in range(dx + 1):
            pts.append((x0 + sx * i, y0 + sy * k))
            err += 2 * dy
            while dx and err >= 2 * dx:
                k += 1
                err -= 2 * dx
    else:
        err, k = dy, 0
        for i in range(dy + 1):
            pts.append((x0 + sx * k, y0 + sy * i))
            err += 2 * dx
            while err >= 2 * dy:
                k += 1
                err -= 2 * dy
    return pts


def circle_pixels(cx, cy, r):
    pts = set()
    for v in range(-r - 1, r + 2):
        for u in range(-r - 1, r + 2):
            a, b = max(abs(u), abs(v)), min(abs(u), abs(v))
            if b > r:
                continue
            if a == math.floor(0.5 + math.sqrt(r * r - b * b)) and b <= a:
                pts.add((cx + u, cy + v))
    return pts


def in_disc(ox, oy, t):
    e = 1 if t % 2 == 0 else 0
    return (2 * ox - e) ** 2 + (2 * oy - e) ** 2 <= t * t


def stamp(grid, pts, rgb, t):
    h, w = len(grid), len(grid[0])
    pts = set(pts)
    for y in range(h):
        for x in range(w):
            for px, py in pts:
                if abs(x - px) <= t and abs(y - py) <= t and in_disc(x - px, y - py, t):
                    grid[y][x] = rgb
                    break
    return grid


def rectangle_pixels(x0, y0, x1, y1):
    x0, x1 = sorted((x0, x1))
    y0, y1 = sorted((y0, y1))
    pts = set()
    for x in range(x0, x1 + 1):
        pts.add((x, y0))
        pts.add((x, y1))
    for y in range(y0, y1 + 1):
        pts.add((x0, y))
        pts.add((x1, y))
    return pts


def crop(grid, rect):
    x0, y0, x1, y1 = rect
    x0, x1 = sorted((x0, x1))
    y0, y1 = sorted((y0, y1))
    h, w = len(grid), len(grid[0])
    x0, y0, x1, y1 = max(x0, 0), max(y0, 0), min(x1, w), min(y1, h)
    if x0 >= x1 or y0 >= y1:
        return None
    return [[grid[y][x] for x in range(x0, x1)] for y in range(y0, y1)]


def composite(left, right):
    h = max(len(left), len(right))
    wl, wr = len(left[0]), len(right[0])
    out = []
    for y in range(h):
        row = []
        for x in range(wl + 8 + wr):
            if x < wl:
                row.append(left[y][x] if y < len(left) else (255, 255, 255))
            elif x < wl + 8:
                row.append((128, 128, 128))
            else:
                xr = x - wl - 8
                row.append(right[y][xr] if y < len(right) else (255, 255, 255))
        out.append(row)
    return out


def extract(grid, ch):
    i = "RGB".index(ch)
    return [[(p[i], p[i], p[i]) for p in row] for row in grid]


def grid_overlay(grid, rows, cols, rgb):
    h, w = len(grid), len(grid[0])
    xs = {math.floor(j * w / cols + 0.5) for j in range(1, cols)}
    ys = {math.floor(i * h / rows + 0.5) for i in range(1, rows)}
    return [[rgb if (x in xs or y in ys) else grid[y][x] for x in range(w)] for y in range(h)]


def box_once(grid, r):
    h, w = len(grid), len(grid[0])
    n = (2 * r + 1) ** 2
    out = []
    for y in range(h):
        row = []
        for x in range(w):
            acc = [0, 0, 0]
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    yy = min(max(y + dy, 0), h - 1)
                    xx = min(max(x + dx, 0), w - 1)
                    for c in range(3):
                        acc[c] += grid[yy][xx][c]
            # round half up with exact integers
            row.append(tuple((2 * a + n) // (2 * n) for a in acc))
        out.append(row)
    return out


def blur(grid, r, passes=3):
    for _ in range(passes):
        grid = box_once(grid, r)
    return grid
