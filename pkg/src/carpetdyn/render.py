"""PNG and SVG pictures of carpet stages, orbits and the blown-up saddle.

The pillowcase is drawn through its double cover: the torus square [0, 1)^2,
in which every hole appears twice (at a lift and its negative).  A dashed
line at x = 1/2 marks the fundamental half-domain, and the four branch
points are marked.  Orbits are coloured by time with a fixed viridis ramp.

Outputs are byte-deterministic: PNGs carry no metadata and SVG coordinates
are printed with fixed precision.
"""

from __future__ import annotations

import io
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw

from . import toral
from .sphere import BRANCH_ARRAY
from .tower import TWO_PI, CarpetStage

BACKGROUND = (255, 255, 255, 255)
SURFACE = (236, 232, 222, 255)
HOLE = (255, 255, 255, 255)
CIRCLE = (40, 40, 40, 255)
BRANCH = (200, 30, 30, 255)
GUIDE = (120, 120, 120, 255)
STABLE = (30, 90, 200, 255)
UNSTABLE = (200, 90, 30, 255)

# viridis anchors at t = 0, 1/8, ..., 1
_VIRIDIS = np.array(
    [
        [68, 1, 84],
        [71, 44, 122],
        [59, 81, 139],
        [44, 113, 142],
        [33, 144, 141],
        [39, 173, 129],
        [92, 200, 99],
        [170, 220, 50],
        [253, 231, 37],
    ],
    dtype=float,
)


class UnsupportedFormat(ValueError):
    pass


def ramp(t) -> np.ndarray:
    """Viridis colour for t in [0, 1], as uint8 RGB rows."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0) * (len(_VIRIDIS) - 1)
    i = np.minimum(t.astype(int), len(_VIRIDIS) - 2)
    f = (t - i)[..., None]
    return np.round(_VIRIDIS[i] * (1 - f) + _VIRIDIS[i + 1] * f).astype(np.uint8)


def _disc_copies(stage: CarpetStage):
    """(x, y, R) for each hole, both lifts, plus wrapped copies near the edges."""
    out = []
    if stage.n_holes == 0:
        return out
    A = stage._arrays
    for c, R in zip(A["centers"], A["R"]):
        for lift in (c, np.mod(-c, 1.0)):
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    x, y = lift[0] + dx, lift[1] + dy
                    if -R <= x <= 1 + R and -R <= y <= 1 + R:
                        out.append((float(x), float(y), float(R)))
    out.sort()
    return out


class _Canvas:
    """Shared drawing calls for the PNG and SVG back ends, in unit-square coordinates."""

    def __init__(self, size: int, fmt: str, width: Optional[int] = None):
        if fmt not in ("png", "svg"):
            raise UnsupportedFormat(f"unsupported image format {fmt!r}")
        self.fmt = fmt
        self.size = size
        self.width = width or size
        if fmt == "png":
            self.img = Image.new("RGBA", (self.width, size), BACKGROUND)
            self.draw = ImageDraw.Draw(self.img)
        else:
            self.parts: List[str] = []

    def px(self, x, y, ox=0.0):
        return ox + x * self.size, (1.0 - y) * self.size

    def rect(self, x0, y0, x1, y1, fill, ox=0.0):
        a, b = self.px(x0, y1, ox)
        c, d = self.px(x1, y0, ox)
        if self.fmt == "png":
            self.draw.rectangle([a, b, c - 1, d - 1], fill=fill)
        else:
            self.parts.append(f'<rect x="{a:.2f}" y="{b:.2f}" width="{c - a:.2f}" height="{d - b:.2f}" fill="{_hex(fill)}"/>')

    def disc(self, x, y, r, fill, outline=None, ox=0.0, width=1):
        cx, cy = self.px(x, y, ox)
        rr = r * self.size
        if self.fmt == "png":
            self.draw.ellipse([cx - rr, cy - rr, cx + rr, cy + rr], fill=fill, outline=outline, width=width)
        else:
            stroke = f' stroke="{_hex(outline)}" stroke-width="{width}"' if outline else ""
            self.parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{rr:.3f}" fill="{_hex(fill)}"{stroke}/>')

    def line(self, pts, colour, width=1, dashed=False, ox=0.0):
        p = [self.px(x, y, ox) for x, y in pts]
        if self.fmt == "png":
            if dashed:
                for (a, b), (c, d) in zip(p[:-1], p[1:]):
                    n = max(1, int(math.hypot(c - a, d - b) // 6))
                    for k in range(0, n, 2):
                        t0, t1 = k / n, min(1.0, (k + 1) / n)
                        self.draw.line([a + (c - a) * t0, b + (d - b) * t0, a + (c - a) * t1, b + (d - b) * t1], fill=colour, width=width)
            else:
                self.draw.line([v for xy in p for v in xy], fill=colour, width=width)
        else:
            dash = ' stroke-dasharray="6,6"' if dashed else ""
            pts_s = " ".join(f"{a:.2f},{b:.2f}" for a, b in p)
            self.parts.append(f'<polyline points="{pts_s}" fill="none" stroke="{_hex(colour)}" stroke-width="{width}"{dash}/>')

    def dots(self, xy, colours, r_px=1.5, ox=0.0):
        for (x, y), col in zip(xy, colours):
            cx, cy = self.px(x, y, ox)
            fill = (int(col[0]), int(col[1]), int(col[2]), 255)
            if self.fmt == "png":
                self.draw.ellipse([cx - r_px, cy - r_px, cx + r_px, cy + r_px], fill=fill)
            else:
                self.parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{r_px}" fill="{_hex(fill)}"/>')

    def text(self, x, y, s, ox=0.0):
        cx, cy = self.px(x, y, ox)
        if self.fmt == "png":
            self.draw.text((cx, cy), s, fill=GUIDE)
        else:
            self.parts.append(f'<text x="{cx:.2f}" y="{cy:.2f}" font-family="monospace" font-size="12" fill="{_hex(GUIDE)}">{s}</text>')

    def tobytes(self) -> bytes:
        if self.fmt == "png":
            buf = io.BytesIO()
            self.img.save(buf, format="PNG", optimize=False, compress_level=6)
            return buf.getvalue()
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.size}" '
            f'viewBox="0 0 {self.width} {self.size}">'
        )
        return ("\n".join([head] + self.parts + ["</svg>"]) + "\n").encode()


def _hex(c) -> str:
    return "#{:02x}{:02x}{:02x}".format(*c[:3])


def render_stage(
    stage: CarpetStage,
    size: int = 1024,
    fmt: str = "png",
    orbits: Sequence[np.ndarray] = (),
) -> bytes:
    """The stage drawn on the torus square, with optional orbit trajectories.

    ``orbits`` are ``(n, 2)`` position arrays; points are coloured by time.
    """
    cv = _Canvas(size, fmt)
    cv.rect(0, 0, 1, 1, SURFACE)
    for x, y, R in _disc_copies(stage):
        cv.disc(x, y, R, HOLE, CIRCLE, width=1)
    for xy in orbits:
        xy = np.asarray(xy, dtype=float)
        if len(xy) == 0:
            continue
        t = np.arange(len(xy)) / max(1, len(xy) - 1)
        cols = ramp(t)
        both = np.concatenate([xy, np.mod(-xy, 1.0)])
        cv.dots(both, np.concatenate([cols, cols]), r_px=max(1.0, size / 700))
    cv.line([(0.5, 0.0), (0.5, 1.0)], GUIDE, width=1, dashed=True)
    for bx, by in BRANCH_ARRAY:
        for dx in (0, 1):
            for dy in (0, 1):
                x, y = bx + dx, by + dy
                if x <= 1 and y <= 1:
                    cv.disc(x, y, 4 / size, BRANCH)
    return cv.tobytes()


def _saddle_curves(lam_s: float, n_curves: int = 6, samples: int = 200):
    """Invariant hyperbolas p q = const and the axes, in eigen-coordinates on [-1, 1]^2."""
    curves = []
    for k in range(1, n_curves + 1):
        c = (k / (n_curves + 1)) ** 2
        t = np.geomspace(c, 1.0, samples)
        for sp in (1, -1):
            for sq in (1, -1):
                curves.append(np.stack([sp * t, sq * c / t], axis=1))
    return curves


def render_phase_portrait(stage: CarpetStage, orbit_id: int = 0, size: int = 512, fmt: str = "png") -> bytes:
    """Local picture at the first point of a blown orbit: before and after blowing up.

    Left: the linear saddle in the chart (invariant hyperbolas, stable and
    unstable axes).  Right: the same curves pushed through the blow-up; the
    fixed point becomes a circle carrying the four fixed directions.
    """
    if not 0 <= orbit_id < stage.depth:
        raise ValueError(f"stage has no blown orbit {orbit_id}")
    b = stage.blown[orbit_id]
    ev = toral.eigen(stage.aut)
    es, eu = np.array(ev.dir_s), np.array(ev.dir_u)
    R, Rc = b.radius, b.chart_radius
    c = np.array(b.points[0].as_float())
    cv = _Canvas(size, fmt, width=2 * size)
    scale = 0.45

    def to_panel(v):
        return 0.5 + scale * v / Rc

    curves = _saddle_curves(abs(ev.lambda_s))
    for panel in (0, 1):
        ox = panel * size
        cv.rect(0, 0, 1, 1, SURFACE, ox=ox)
        for curve in curves:
            v = (curve[:, :1] * es[None, :] + curve[:, 1:] * eu[None, :]) * (Rc / math.sqrt(2))
            if panel == 1:
                rho = np.hypot(v[:, 0], v[:, 1])
                r = R + rho * (Rc - R) / Rc
                v = v / rho[:, None] * r[:, None]
            cv.line([tuple(p) for p in to_panel(v)], GUIDE, width=1, ox=ox)
        for vec, col in ((es, STABLE), (eu, UNSTABLE)):
            for sgn in (1, -1):
                start = np.zeros(2) if panel == 0 else sgn * R * vec
                end = sgn * Rc * vec
                cv.line([tuple(to_panel(start)), tuple(to_panel(end))], col, width=2, ox=ox)
        if panel == 0:
            cv.disc(0.5, 0.5, 4 / size, CIRCLE, ox=ox)
        else:
            th = np.linspace(0, TWO_PI, 181)
            circ = np.stack([np.cos(th), np.sin(th)], axis=1) * R
            cv.line([tuple(p) for p in to_panel(circ)], CIRCLE, width=2, ox=ox)
            for vec in (es, -es, eu, -eu):
                p = to_panel(R * vec)
                cv.disc(float(p[0]), float(p[1]), 4 / size, BRANCH, ox=ox)
        cv.text(0.03, 0.97, "before" if panel == 0 else "after", ox=ox)
    return cv.tobytes()


def orbit_positions(stage: CarpetStage, start_xy, steps: int, power: int = 1) -> np.ndarray:
    """Positions of the H-orbit of a regular point, for drawing."""
    from .tower import PointBatch, apply_stage_batch, positions, validate

    batch = validate(stage, PointBatch.regular(np.asarray(start_xy, dtype=float).reshape(1, 2)))
    out = np.zeros((steps, 2))
    for j in range(steps):
        out[j] = positions(stage, batch)[0]
        for _ in range(power):
            batch = apply_stage_batch(stage, batch, check=False)
    return out
