"""Morphometric labeler for single-entity raster images (digits).

Measures stroke thickness, slant, and glyph height/width, then maps each
measure onto its glossary band group.  Thickness is twice the mean exact
Euclidean distance-transform value over the Zhang-Suen skeleton; slant is
the shear coefficient estimated from second-order central moments with
rightward lean positive; height and width are the extents of the mask
after de-shearing by the measured slant (bounding-parallelogram
convention, which leaves height equal to the raw row extent).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import MalformedFile, NoForeground
from .glossary import (
    KIND_ORDERED_BANDS,
    Glossary,
    GlossaryTerm,
    TermGroup,
    band_term_for_value,
)

DEFAULT_THRESHOLD = 0.5

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801


@dataclass(frozen=True)
class RasterImage:
    width: int
    height: int
    pixels: np.ndarray  # (height, width) float in [0, 1]

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=float)
        if px.shape != (self.height, self.width):
            raise ValueError(
                f"pixel buffer {px.shape} does not match {self.height}x{self.width}"
            )
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise ValueError("intensities must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_array(cls, arr) -> "RasterImage":
        arr = np.asarray(arr, dtype=float)
        return cls(width=arr.shape[1], height=arr.shape[0], pixels=arr)


@dataclass(frozen=True)
class MorphoMeasures:
    thickness: float
    slant: float
    height: int
    width: int


def binarize(img: RasterImage, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Boolean mask of pixels at or above the threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie strictly between 0 and 1")
    return img.pixels >= threshold


def skeletonize(mask: np.ndarray) -> np.ndarray:
    """Zhang-Suen thinning; deterministic, preserves 8-connectivity."""
    img = np.pad(mask.astype(np.uint8), 1)

    def neighbors(a):
        # P2..P9 clockwise starting north
        return [
            np.roll(a, 1, 0),                       # N
            np.roll(np.roll(a, 1, 0), -1, 1),       # NE
            np.roll(a, -1, 1),                      # E
            np.roll(np.roll(a, -1, 0), -1, 1),      # SE
            np.roll(a, -1, 0),                      # S
            np.roll(np.roll(a, -1, 0), 1, 1),       # SW
            np.roll(a, 1, 1),                       # W
            np.roll(np.roll(a, 1, 0), 1, 1),        # NW
        ]

    while True:
        changed = False
        for step in (0, 1):
            p = neighbors(img)
            b = sum(p)
            ring = p + [p[0]]
            a = sum(
                ((ring[k] == 0) & (ring[k + 1] == 1)).astype(np.uint8)
                for k in range(8)
            )
            if step == 0:
                cond = (p[0] * p[2] * p[4] == 0) & (p[2] * p[4] * p[6] == 0)
            else:
                cond = (p[0] * p[2] * p[6] == 0) & (p[0] * p[4] * p[6] == 0)
            kill = (img == 1) & (b >= 2) & (b <= 6) & (a == 1) & cond
            if kill.any():
                img[kill] = 0
                changed = True
        if not changed:
            break
    return img[1:-1, 1:-1].astype(bool)


def distance_transform(mask: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance from each foreground pixel to background.

    Background includes the virtual one-pixel frame outside the image, so
    strokes touching the border still measure finite thickness.  Direct
    per-pixel minimization: images are small, exactness beats speed.
    """
    padded = np.pad(mask, 1)
    bg = np.argwhere(~padded)
    fg = np.argwhere(padded)
    out = np.zeros(padded.shape, dtype=float)
    if fg.size == 0:
        return out[1:-1, 1:-1]
    for start in range(0, len(fg), 512):
        chunk = fg[start : start + 512]
        d2 = (
            (chunk[:, 0:1] - bg[None, :, 0]) ** 2
            + (chunk[:, 1:2] - bg[None, :, 1]) ** 2
        ).min(axis=1)
        out[chunk[:, 0], chunk[:, 1]] = np.sqrt(d2)
    return out[1:-1, 1:-1]


def _shear_coefficient(mask: np.ndarray) -> float:
    rows, cols = np.nonzero(mask)
    y_up = (mask.shape[0] - 1) - rows  # y increases upward; rightward lean positive
    x = cols.astype(float)
    y = y_up.astype(float)
    y_var = ((y - y.mean()) ** 2).sum()
    if y_var == 0:
        return 0.0
    cov = ((x - x.mean()) * (y - y.mean())).sum()
    return cov / y_var


def measure(img: RasterImage, threshold: float = DEFAULT_THRESHOLD) -> MorphoMeasures:
    mask = binarize(img, threshold)
    if not mask.any():
        raise NoForeground("image has no foreground after binarization")

    slant = _shear_coefficient(mask)

    skeleton = skeletonize(mask)
    edt = distance_transform(mask)
    support = skeleton if skeleton.any() else mask
    thickness = 2.0 * float(edt[support].mean())

    rows, cols = np.nonzero(mask)
    height = int(rows.max() - rows.min() + 1)
    y_up = (mask.shape[0] - 1) - rows
    desheared = np.rint(cols - slant * (y_up - y_up.mean())).astype(int)
    width = int(desheared.max() - desheared.min() + 1)

    return MorphoMeasures(thickness=thickness, slant=slant, height=height, width=width)


def find_measure_groups(g: Glossary) -> dict[str, TermGroup]:
    """Locate the thickness/slant/height band groups by id suffix."""
    wanted = {"thickness": ("thick", "thickness"), "slant": ("slant",), "height": ("height",)}
    out: dict[str, TermGroup] = {}
    for measure_name, suffixes in wanted.items():
        hits = [
            grp
            for grp in g.ordered_band_groups()
            if any(grp.id == s or grp.id.endswith("." + s) or grp.id.endswith(s) for s in suffixes)
        ]
        if len(hits) != 1:
            raise MalformedFile(
                f"glossary must contain exactly one ordered-band group for {measure_name}; "
                f"found {[h.id for h in hits]}"
            )
        out[measure_name] = hits[0]
    return out


def label(
    img: RasterImage,
    g: Glossary,
    class_term: GlossaryTerm,
    threshold: float = DEFAULT_THRESHOLD,
    groups: Optional[dict[str, TermGroup]] = None,
) -> set[GlossaryTerm]:
    """Class term plus exactly one band term per measure group."""
    if groups is None:
        groups = find_measure_groups(g)
    m = measure(img, threshold)
    values = {"thickness": m.thickness, "slant": m.slant, "height": float(m.height)}
    terms = {class_term}
    for name, grp in groups.items():
        if grp.kind != KIND_ORDERED_BANDS:
            raise MalformedFile(f"group {grp.id!r} is not an ordered-band group")
        terms.add(band_term_for_value(g, grp, values[name]))
    return terms


# -- image file formats -------------------------------------------------


def load_png(path) -> RasterImage:
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=float) / 255.0
    return RasterImage.from_array(arr)


def load_idx_images(path) -> list[RasterImage]:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise MalformedFile(f"{path}: too short for an IDX image container")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_MAGIC_IMAGES:
        raise MalformedFile(f"{path}: bad IDX image magic 0x{magic:08x}")
    need = 16 + count * rows * cols
    if len(raw) < need:
        raise MalformedFile(f"{path}: truncated IDX payload")
    data = np.frombuffer(raw[16:need], dtype=np.uint8).reshape(count, rows, cols)
    return [RasterImage.from_array(a / 255.0) for a in data]


def load_idx_labels(path) -> list[int]:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise MalformedFile(f"{path}: too short for an IDX label container")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != IDX_MAGIC_LABELS:
        raise MalformedFile(f"{path}: bad IDX label magic 0x{magic:08x}")
    if len(raw) < 8 + count:
        raise MalformedFile(f"{path}: truncated IDX payload")
    return list(np.frombuffer(raw[8 : 8 + count], dtype=np.uint8))


def load_image(path) -> RasterImage:
    """PNG or single-image IDX file, selected by extension."""
    p = Path(path)
    if p.suffix.lower() == ".png":
        return load_png(p)
    images = load_idx_images(p)
    if len(images) != 1:
        raise MalformedFile(f"{p}: expected a single image, found {len(images)}")
    return images[0]
