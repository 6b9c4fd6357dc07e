"""Seeded synthetic scenes with exact ground-truth boxes.

Sprites (solid, striped, or gradient rectangles and ellipses, one hue band
per category) are placed on a flat background with a minimum pairwise gap, so
every emitted annotation is correct by construction.  Everything is driven by
explicit seeds; the same spec always yields the same bytes.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .annotations import Annotation, LabeledBox, ManifestEntry, write_manifest, write_xml
from .errors import PlacementFailure
from .geometry import Box, gap
from .raster import new_image, save_image

DEFAULT_BACKGROUND = (204, 204, 204)

# label -> (hue in degrees, shape, style)
SPRITE_FAMILIES: dict[str, tuple[int, str, str]] = {
    "red_solid_rect": (0, "rect", "solid"),
    "orange_striped_rect": (30, "rect", "striped"),
    "yellow_gradient_rect": (55, "rect", "gradient"),
    "lime_solid_ellipse": (90, "ellipse", "solid"),
    "green_striped_rect": (120, "rect", "striped"),
    "teal_gradient_ellipse": (160, "ellipse", "gradient"),
    "cyan_solid_rect": (185, "rect", "solid"),
    "azure_striped_ellipse": (210, "ellipse", "striped"),
    "blue_gradient_rect": (235, "rect", "gradient"),
    "violet_solid_ellipse": (270, "ellipse", "solid"),
    "magenta_striped_rect": (300, "rect", "striped"),
    "rose_gradient_ellipse": (330, "ellipse", "gradient"),
}


@dataclass
class Sprite:
    label: str
    pixels: np.ndarray  # (H, W, 3) uint8
    mask: np.ndarray  # (H, W) bool, touches all four raster edges


@dataclass
class SceneSpec:
    canvas_width: int = 640
    canvas_height: int = 480
    background: tuple[int, int, int] = DEFAULT_BACKGROUND
    noise_amplitude: int = 0
    sprites: list[Sprite] = field(default_factory=list)
    n_objects: int = 1
    min_gap: int = 20
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_objects < 1:
            raise ValueError("n_objects must be >= 1")
        if self.min_gap < 0:
            raise ValueError("min_gap must be >= 0")


def _hsv_color(hue_deg: float, sat: float, val: float) -> np.ndarray:
    rgb = colorsys.hsv_to_rgb((hue_deg % 360) / 360.0, sat, val)
    return np.array([round(c * 255) for c in rgb], dtype=np.uint8)


def _speckle(pixels: np.ndarray, rng: np.random.Generator, amplitude: int = 12) -> np.ndarray:
    """Mild per-pixel texture that stays inside one segmentation region."""
    noise = rng.integers(-amplitude, amplitude + 1, size=pixels.shape, dtype=np.int16)
    return np.clip(pixels.astype(np.int16) + noise, 0, 255).astype(np.uint8)


def make_sprite(label: str, width: int = 72, height: int = 58, rng: np.random.Generator | None = None) -> Sprite:
    """Render one sprite instance; passing an rng jitters size and tone.

    Default sizes keep the sprite box under ~5000 px^2 so that any internal
    fragment bigger than the extraction area filter still overlaps the full
    sprite box by more than the initial merge threshold.
    """
    if label not in SPRITE_FAMILIES:
        raise KeyError(f"unknown sprite label {label!r}")
    hue, shape, style = SPRITE_FAMILIES[label]
    if rng is not None:
        width = int(width * rng.uniform(0.85, 1.12))
        height = int(height * rng.uniform(0.85, 1.12))
        hue = hue + float(rng.uniform(-6, 6))
    width = max(40, width)
    height = max(40, height)

    if style == "solid":
        pixels = np.tile(_hsv_color(hue, 0.85, 0.85), (height, width, 1))
    elif style == "striped":
        # 3 bold horizontal bands sharing one hue, alternating brightness.
        pixels = np.empty((height, width, 3), dtype=np.uint8)
        bands = np.linspace(0, height, 4).astype(int)
        tones = (0.9, 0.55, 0.8)
        for i in range(3):
            pixels[bands[i] : bands[i + 1]] = _hsv_color(hue, 0.9, tones[i])
    else:  # gradient
        vals = np.linspace(0.45, 0.95, height)
        rows = np.stack([_hsv_color(hue, 0.8, v) for v in vals])
        pixels = np.repeat(rows[:, None, :], width, axis=1).astype(np.uint8)

    if rng is not None:
        pixels = _speckle(pixels, rng, amplitude=5)

    if shape == "ellipse":
        ys, xs = np.mgrid[0:height, 0:width]
        cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
        mask = ((xs - cx) / (width / 2.0)) ** 2 + ((ys - cy) / (height / 2.0)) ** 2 <= 1.0
    else:
        mask = np.ones((height, width), dtype=bool)
    return Sprite(label=label, pixels=pixels, mask=mask)


def default_sprite_set(seed: int = 0, per_label: int = 1) -> list[Sprite]:
    rng = np.random.default_rng(seed)
    sprites = []
    for label in SPRITE_FAMILIES:
        for _ in range(per_label):
            sprites.append(make_sprite(label, rng=rng))
    return sprites


def generate_scene(spec: SceneSpec, image_filename: str = "scene.png") -> tuple[np.ndarray, Annotation]:
    """Place n_objects sprites with pairwise gaps; exact boxes by construction."""
    sprites = spec.sprites or default_sprite_set(spec.rng_seed)
    rng = np.random.default_rng(spec.rng_seed)
    canvas = new_image(spec.canvas_width, spec.canvas_height, spec.background)
    if spec.noise_amplitude > 0:
        noise = rng.integers(
            -spec.noise_amplitude, spec.noise_amplitude + 1, size=canvas.shape, dtype=np.int16
        )
        canvas = np.clip(canvas.astype(np.int16) + noise, 0, 255).astype(np.uint8)

    placed: list[LabeledBox] = []
    for _ in range(spec.n_objects):
        sprite = sprites[int(rng.integers(len(sprites)))]
        h, w = sprite.pixels.shape[:2]
        if w > spec.canvas_width or h > spec.canvas_height:
            raise PlacementFailure(
                f"sprite {sprite.label} ({w}x{h}) larger than canvas "
                f"{spec.canvas_width}x{spec.canvas_height}"
            )
        for attempt in range(1000):
            x = int(rng.integers(0, spec.canvas_width - w + 1))
            y = int(rng.integers(0, spec.canvas_height - h + 1))
            candidate = Box(x, y, w, h)
            if all(gap(candidate, p.box) >= spec.min_gap for p in placed):
                break
        else:
            raise PlacementFailure(
                f"no position for sprite {len(placed) + 1}/{spec.n_objects} after 1000 attempts"
            )
        region = canvas[y : y + h, x : x + w]
        region[sprite.mask] = sprite.pixels[sprite.mask]
        placed.append(LabeledBox(label=sprite.label, box=candidate))

    annotation = Annotation(
        image_filename=image_filename,
        image_width=spec.canvas_width,
        image_height=spec.canvas_height,
        objects=placed,
    )
    return canvas, annotation.validate()


def generate_corpus(
    out_dir,
    template: SceneSpec,
    count: int,
    seed: int = 0,
    n_range: tuple[int, int] = (1, 5),
    log=None,
) -> Path:
    """Write images/, annotations/, and manifest.tsv under out_dir.

    Scenes that cannot be placed are skipped (and logged), not fatal.
    Returns the manifest path.
    """
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    ann_dir = out_dir / "annotations"
    images_dir.mkdir(parents=True, exist_ok=True)
    ann_dir.mkdir(parents=True, exist_ok=True)
    master = np.random.default_rng(seed)
    entries = []
    for i in range(count):
        n = int(master.integers(n_range[0], n_range[1] + 1))
        scene_seed = int(master.integers(0, 2**63 - 1))
        name = f"scene_{i:04d}.png"
        spec = replace(template, n_objects=n, rng_seed=scene_seed)
        try:
            img, annotation = generate_scene(spec, image_filename=name)
        except PlacementFailure as exc:
            if log is not None:
                log(f"stage=synth image={name} outcome=skip reason={exc}")
            continue
        save_image(img, images_dir / name)
        ann_path = ann_dir / f"scene_{i:04d}.xml"
        write_xml(annotation, ann_path)
        entries.append(
            ManifestEntry(
                image_path=str(Path("images") / name),
                n_objects=n,
                annotation_path=str(Path("annotations") / ann_path.name),
            )
        )
        if log is not None:
            log(f"stage=synth image={name} outcome=ok n={n}")
    manifest_path = out_dir / "manifest.tsv"
    write_manifest(entries, manifest_path)
    return manifest_path


def render_training_crops(out_dir, per_category: int = 8, seed: int = 0, background=DEFAULT_BACKGROUND) -> dict[str, int]:
    """Emit labeled single-sprite crops for training the baseline classifier."""
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    counts = {}
    for label in SPRITE_FAMILIES:
        label_dir = out_dir / label
        label_dir.mkdir(parents=True, exist_ok=True)
        for k in range(per_category):
            sprite = make_sprite(label, rng=rng)
            h, w = sprite.pixels.shape[:2]
            canvas = new_image(w, h, background)
            canvas[sprite.mask] = sprite.pixels[sprite.mask]
            save_image(canvas, label_dir / f"{label}_{k:03d}.png")
        counts[label] = per_category
    return counts
