"""PNG rendering of class-code grids."""

from __future__ import annotations

import io

import numpy as np
from PIL import Image, ImageDraw

from .fileio import atomic_write_bytes
from .labels import UNLABELED, FunctionClass

PALETTE = {
    0: (40, 40, 40),
    1: (230, 60, 60),
    2: (60, 120, 230),
    3: (240, 160, 40),
    4: (200, 60, 200),
    5: (60, 200, 200),
    6: (240, 220, 60),
    7: (140, 90, 50),
    UNLABELED: (160, 160, 160),
}

_LEGEND_NAMES = {
    0: "background",
    1: "residential",
    2: "commercial",
    3: "public service",
    4: "public health",
    5: "sport & art",
    6: "educational",
    7: "industrial",
    UNLABELED: "unlabeled",
}


def colorize(labels) -> np.ndarray:
    """[h, w] class codes -> [h, w, 3] uint8 colors (unknown codes black)."""
    lab = np.asarray(labels)
    if lab.ndim != 2:
        raise ValueError("labels must be a 2-D code grid")
    lut = np.zeros((256, 3), dtype=np.uint8)
    for code, rgb in PALETTE.items():
        lut[code] = rgb
    return lut[np.clip(lab.astype(np.int64), 0, 255)]


def render_map(labels, out_path=None, legend=False, scale=1) -> Image.Image:
    """Render a class grid to an image, optionally with a legend strip.

    When `out_path` is given the PNG is written atomically. `scale`
    magnifies with nearest-neighbor so single pixels stay crisp.
    """
    rgb = colorize(labels)
    img = Image.fromarray(rgb, mode="RGB")
    if scale > 1:
        img = img.resize((img.width * scale, img.height * scale),
                         Image.Resampling.NEAREST)
    if legend:
        present = sorted(set(np.unique(np.asarray(labels)).astype(int).tolist())
                         & set(_LEGEND_NAMES))
        row_h, pad = 18, 6
        strip = Image.new("RGB", (img.width, pad * 2 + row_h * len(present)),
                          (255, 255, 255))
        draw = ImageDraw.Draw(strip)
        for k, code in enumerate(present):
            y = pad + k * row_h
            draw.rectangle([pad, y + 2, pad + 14, y + 14], fill=PALETTE[code],
                           outline=(0, 0, 0))
            draw.text((pad + 22, y + 2), f"{code}: {_LEGEND_NAMES[code]}",
                      fill=(0, 0, 0))
        canvas = Image.new("RGB", (img.width, img.height + strip.height))
        canvas.paste(img, (0, 0))
        canvas.paste(strip, (0, img.height))
        img = canvas
    if out_path is not None:
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        atomic_write_bytes(out_path, buf.getvalue())
    return img
