"""Scalp topographic maps: 10-20 electrode projection, inverse-distance
interpolation over the head disk, and deterministic PNG rendering.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from PIL import Image, ImageDraw

from .eeg import EegRecording, SnapshotSet, TimeWindow, equidistant_timestamps, snapshot

__all__ = [
    "ScalpField",
    "TopomapImage",
    "electrode_positions",
    "project_layout",
    "idw_evaluate",
    "interpolate_scalp",
    "render",
    "montage",
    "render_snapshot_montage",
]

PANEL_SIZE = 256
GRID_SIZE = 64
CAPTION_HEIGHT = 24


# ---------------------------------------------------------------------------
# Electrode layout
#
# Positions are generated on the unit sphere from the 10-20 construction:
# midline arc (nasion -> Cz -> inion), central coronal arc (ear to ear),
# the 10% circumferential ring, and intermediate rows placed equidistantly
# on the circle through each row's lateral and midline electrodes. This
# covers the classic 19-channel set plus the 10-10 names used by common
# 32/64-channel caps.
# ---------------------------------------------------------------------------

_ALIASES = {"T3": "T7", "T4": "T8", "T5": "P7", "T6": "P8"}


def _arc_point(frac: float, plane: str) -> np.ndarray:
    # frac runs 0..1 along a half great circle through Cz.
    a = frac * math.pi
    if plane == "midline":  # nasion (front) to inion
        return np.array([0.0, math.cos(a), math.sin(a)])
    # left preauricular to right preauricular
    return np.array([-math.cos(a), 0.0, math.sin(a)])


def _ring_point(frac: float) -> np.ndarray:
    # frac of the full circumference from Fpz, positive toward the right.
    polar = math.radians(72.0)
    theta = frac * 2.0 * math.pi
    return np.array(
        [math.sin(polar) * math.sin(theta), math.sin(polar) * math.cos(theta), math.cos(polar)]
    )


def _circle_interpolate(p_from: np.ndarray, p_to: np.ndarray, p_third: np.ndarray,
                        n_segments: int) -> list[np.ndarray]:
    """Points between p_from and p_to on the circle through all three inputs.

    The three points lie on the unit sphere, so their common circle (plane
    intersect sphere) does too.
    """
    pts = np.array([p_from, p_to, p_third])
    normal = np.cross(pts[1] - pts[0], pts[2] - pts[0])
    normal /= np.linalg.norm(normal)
    # Circle centre: projection of any point onto the plane's axis through origin.
    centre = normal * np.dot(pts[0], normal)
    u = p_from - centre
    r = np.linalg.norm(u)
    e1 = u / r
    w = p_to - centre
    e2 = w - np.dot(w, e1) * e1
    e2 /= np.linalg.norm(e2)
    a_to = math.atan2(np.dot(w, e2), np.dot(w, e1))
    out = []
    for i in range(1, n_segments):
        a = a_to * i / n_segments
        out.append(centre + r * (math.cos(a) * e1 + math.sin(a) * e2))
    return out


@lru_cache(maxsize=1)
def electrode_positions() -> dict[str, tuple[float, float, float]]:
    """Canonical label -> unit-sphere position (x=right, y=front, z=up)."""
    pos: dict[str, np.ndarray] = {}

    midline = ["Fpz", "AFz", "Fz", "FCz", "Cz", "CPz", "Pz", "POz", "Oz"]
    for i, name in enumerate(midline):
        pos[name] = _arc_point(0.1 * (i + 1), "midline")
    coronal = ["T7", "C5", "C3", "C1", "Cz", "C2", "C4", "C6", "T8"]
    for i, name in enumerate(coronal):
        pos[name] = _arc_point(0.1 * (i + 1), "coronal")

    ring_right = ["Fp2", "AF8", "F8", "FT8", "T8", "TP8", "P8", "PO8", "O2"]
    ring_left = ["Fp1", "AF7", "F7", "FT7", "T7", "TP7", "P7", "PO7", "O1"]
    for i, (right, left) in enumerate(zip(ring_right, ring_left)):
        frac = 0.05 * (i + 1)
        pos[right] = _ring_point(frac)
        pos[left] = _ring_point(-frac)

    # Inner labels run outward-in, matching the generation order from the
    # lateral electrode toward the midline.
    rows = [
        ("AF7", "AFz", "AF8", ["AF5", "AF3", "AF1"], ["AF6", "AF4", "AF2"]),
        ("F7", "Fz", "F8", ["F5", "F3", "F1"], ["F6", "F4", "F2"]),
        ("FT7", "FCz", "FT8", ["FC5", "FC3", "FC1"], ["FC6", "FC4", "FC2"]),
        ("TP7", "CPz", "TP8", ["CP5", "CP3", "CP1"], ["CP6", "CP4", "CP2"]),
        ("P7", "Pz", "P8", ["P5", "P3", "P1"], ["P6", "P4", "P2"]),
        ("PO7", "POz", "PO8", ["PO5", "PO3", "PO1"], ["PO6", "PO4", "PO2"]),
    ]
    for lat_l, mid, lat_r, inner_l, inner_r in rows:
        for name, pt in zip(inner_l, _circle_interpolate(pos[lat_l], pos[mid], pos[lat_r], 4)):
            pos[name] = pt
        for name, pt in zip(inner_r, _circle_interpolate(pos[lat_r], pos[mid], pos[lat_l], 4)):
            pos[name] = pt

    return {name: tuple(p / np.linalg.norm(p)) for name, p in pos.items()}


@lru_cache(maxsize=1)
def _lookup_table() -> dict[str, tuple[float, float, float]]:
    table = {name.upper(): p for name, p in electrode_positions().items()}
    for alias, target in _ALIASES.items():
        table[alias.upper()] = table[target.upper()]
    return table


def project_layout(channel_names) -> np.ndarray:
    """Azimuthal-equidistant 2D projection of 10-20 labels.

    Cz maps to the origin; radius is the polar angle scaled so 90 degrees
    lands on the unit circle (x = right, y = front). Unknown labels raise.
    """
    table = _lookup_table()
    coords = np.empty((len(channel_names), 2))
    for i, name in enumerate(channel_names):
        try:
            x, y, z = table[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown electrode label {name!r}") from None
        polar = math.acos(max(-1.0, min(1.0, z)))
        horiz = math.hypot(x, y)
        if horiz == 0.0:
            coords[i] = (0.0, 0.0)
        else:
            r = polar / (math.pi / 2)
            coords[i] = (r * x / horiz, r * y / horiz)
    return coords


# ---------------------------------------------------------------------------
# Interpolation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalpField:
    """Scalar field over the unit disk with symmetric colour limits."""

    grid: np.ndarray  # (n, n); row 0 is the front of the head
    mask: np.ndarray  # boolean inside-head mask
    vmin: float
    vmax: float


@dataclass(frozen=True)
class TopomapImage:
    width: int
    height: int
    png: bytes

    def to_pil(self) -> Image.Image:
        return Image.open(io.BytesIO(self.png)).convert("RGB")


def idw_evaluate(coords: np.ndarray, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Inverse-distance-weighted (power 2) interpolant, exact at the nodes."""
    coords = np.asarray(coords, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    d2 = ((points[:, None, :] - coords[None, :, :]) ** 2).sum(axis=2)
    out = np.empty(points.shape[0])
    at_node = d2 < 1e-24
    hits = at_node.any(axis=1)
    out[hits] = values[np.argmax(at_node[hits], axis=1)]
    free = ~hits
    if free.any():
        w = 1.0 / d2[free]
        out[free] = (w * values).sum(axis=1) / w.sum(axis=1)
    return out


def interpolate_scalp(coords: np.ndarray, values: np.ndarray, n: int = GRID_SIZE) -> ScalpField:
    coords = np.asarray(coords, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if coords.shape[0] < 3:
        raise ValueError("need at least 3 electrodes to interpolate")
    d2 = ((coords[:, None, :] - coords[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    if (d2 < 1e-24).any():
        raise ValueError("duplicate electrode coordinates")
    xs = np.linspace(-1.0, 1.0, n)
    ys = np.linspace(1.0, -1.0, n)  # row 0 = front
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    grid = idw_evaluate(coords, values, pts).reshape(n, n)
    mask = gx**2 + gy**2 <= 1.0
    vmax = float(np.abs(grid[mask]).max()) if mask.any() else 0.0
    return ScalpField(grid=grid, mask=mask, vmin=-vmax, vmax=vmax)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


@lru_cache(maxsize=1)
def _colormap() -> np.ndarray:
    """Blue -> white -> red LUT, antisymmetric: lut[255-i] swaps R and B.

    Indices 127 and 128 are both white so a zero field and its negation
    render identically.
    """
    lut = np.empty((256, 3), dtype=np.uint8)
    for i in range(128):
        c = int(round(255.0 * i / 127.0))
        lut[i] = (c, c, 255)
        lut[255 - i] = (255, c, c)
    return lut


def render(field: ScalpField, panel_size: int = PANEL_SIZE) -> TopomapImage:
    """Render a field as a PNG panel with head outline, nose and ears.

    Colour index = round(255 * (v - vmin) / (vmax - vmin)); a constant-zero
    field uses limits [-1, 1] so it maps to the white midpoint.
    """
    if not field.mask.any():
        raise ValueError("field mask is empty")
    vmin, vmax = field.vmin, field.vmax
    if vmax <= vmin:
        vmin, vmax = -1.0, 1.0
    u = (field.grid - vmin) / (vmax - vmin)
    idx = np.rint(255.0 * u).astype(np.int64).clip(0, 255)
    rgb = _colormap()[idx]
    rgb[~field.mask] = (255, 255, 255)

    disk = Image.fromarray(rgb, mode="RGB")
    inner = int(panel_size * 0.88)
    disk = disk.resize((inner, inner), Image.NEAREST)
    canvas = Image.new("RGB", (panel_size, panel_size), (255, 255, 255))
    off = (panel_size - inner) // 2
    canvas.paste(disk, (off, off))

    draw = ImageDraw.Draw(canvas)
    cx = cy = panel_size // 2
    r = inner // 2
    draw.ellipse([cx - r, cy - r, cx + r, cy + r], outline=(0, 0, 0), width=2)
    nose = max(4, panel_size // 24)
    draw.polygon(
        [(cx - nose, cy - r + 1), (cx + nose, cy - r + 1), (cx, cy - r - nose)],
        outline=(0, 0, 0),
    )
    ear_h = max(6, panel_size // 14)
    for sx in (-1, 1):
        ex = cx + sx * r
        draw.arc(
            [ex - nose, cy - ear_h, ex + nose, cy + ear_h],
            start=270 if sx > 0 else 90,
            end=90 if sx > 0 else 270,
            fill=(0, 0, 0),
            width=2,
        )
    return _to_topomap_image(canvas)


def _to_topomap_image(img: Image.Image) -> TopomapImage:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return TopomapImage(width=img.width, height=img.height, png=buf.getvalue())


def montage(images: list[TopomapImage], rows: int, cols: int,
            captions: list[str] | None = None) -> TopomapImage:
    """Tile panels row-major and append a caption strip at the bottom."""
    if len(images) != rows * cols:
        raise ValueError(f"got {len(images)} panels for a {rows}x{cols} montage")
    panels = [img.to_pil() for img in images]
    w, h = panels[0].size
    if any(p.size != (w, h) for p in panels):
        raise ValueError("montage panels must share one size")
    out = Image.new("RGB", (cols * w, rows * h + CAPTION_HEIGHT), (255, 255, 255))
    for i, panel in enumerate(panels):
        out.paste(panel, ((i % cols) * w, (i // cols) * h))
    if captions:
        draw = ImageDraw.Draw(out)
        draw.text((4, rows * h + 5), "  ".join(captions), fill=(0, 0, 0))
    return _to_topomap_image(out)


def render_snapshot_montage(recording: EegRecording, window: TimeWindow,
                            k: int = 10, grid_size: int = GRID_SIZE,
                            panel_size: int = PANEL_SIZE) -> TopomapImage:
    """Full pipeline: snapshots at k centred timestamps -> 2 x k/2 montage.

    Colour limits are shared across panels so amplitudes are comparable.
    """
    times = equidistant_timestamps(window, k)
    snaps = snapshot(recording, times)
    coords = project_layout(recording.channel_names)
    fields = [interpolate_scalp(coords, snaps.values[i], n=grid_size) for i in range(k)]
    vmax = max(f.vmax for f in fields)
    fields = [ScalpField(f.grid, f.mask, -vmax, vmax) for f in fields]
    panels = [render(f, panel_size=panel_size) for f in fields]
    rows = 2 if k % 2 == 0 and k > 1 else 1
    cols = k // rows
    captions = [f"t={t:.3f}s" for t in times]
    return montage(panels, rows, cols, captions=captions)
