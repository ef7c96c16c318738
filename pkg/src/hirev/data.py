"""Synthetic product-review images: generation, augmentation, splitting, packs.

Each product class is a fixed procedural motif (shape, texture frequency and
orientation, base intensities). The review score controls a damage level
lam = (5 - s) / 4 that drives occlusion patches, additive noise with
sigma = 0.3 * lam, a brightness shift, and scratch strokes. Where those cues
land (and how strongly each family is expressed) depends on the class, so
score reading benefits from knowing the class first. Everything is
deterministic in (config, seed): sample i draws from a stream keyed by its
identity, independent of generation order.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import (
    CorruptManifest,
    DatasetIOError,
    InvalidCounts,
    LabelOutOfRange,
    TooFewSamples,
)
from .likert import SCORE_HIGH, SCORE_LOW
from .rng import stream
from .serialize import tensor_from_bytes, tensor_to_bytes
from .tensor import Tensor

GOLDEN = 0.6180339887498949

SHAPE_KINDS = ("disk", "square", "triangle", "cross", "ring", "diamond",
               "hbars", "vbars")


@dataclass(frozen=True)
class GeneratorConfig:
    n_classes: int = 4
    per_score: int = 8
    image_size: int = 32
    channels: int = 1
    augment_per_raw: int = 0
    seed: int = 0


@dataclass
class Sample:
    sample_id: str
    image: Tensor  # [C, H, H], values in [0, 1]
    product_class: int
    score: int  # SCORE_LOW..SCORE_HIGH
    origin: str = "raw"  # raw | augmented
    parent_id: str = ""

    def __post_init__(self):
        if not self.parent_id:
            self.parent_id = self.sample_id


@dataclass
class Dataset:
    config: GeneratorConfig
    samples: list = field(default_factory=list)

    def __len__(self):
        return len(self.samples)


def _frac(x: float) -> float:
    return x - math.floor(x)


DAMAGE_STYLES = ("occlusion", "brightness", "scratch")


@dataclass(frozen=True)
class ClassMotif:
    """Deterministic per-class rendering parameters.

    Each class expresses its damage level through one dominant cue family
    (its damage_style) placed on class-specific geometry, plus the universal
    small-region noise. Pristine motifs already contain decoy damage
    lookalikes (static patches and strokes, a class-specific texture
    amplitude), so absolute cue counts read the score only relative to the
    class baseline: decoding a score means knowing the product first.
    """

    shape: str
    background: float
    foreground: float
    texture_freq: float
    texture_amp: float
    texture_angle: float
    anchor_angle: float  # where damage cues cluster
    ring_radius: float  # fraction of the half-size, shared by decoys and damage
    decoy_patches: int
    decoy_strokes: int
    brightness_sign: float
    damage_style: str
    style_weight: float  # mild per-class gain on the dominant cue


def class_motif(class_index: int) -> ClassMotif:
    c = class_index
    return ClassMotif(
        shape=SHAPE_KINDS[c % len(SHAPE_KINDS)],
        background=0.05 + 0.25 * _frac(c * GOLDEN),
        foreground=0.55 + 0.40 * _frac(c * GOLDEN + 0.37),
        texture_freq=2.0 + (c * 0.7) % 4.0,
        texture_amp=0.14 + 0.14 * _frac(c * GOLDEN + 0.61),
        texture_angle=math.pi * _frac(c * 0.381966),
        anchor_angle=2.0 * math.pi * _frac(c * GOLDEN + 0.11),
        ring_radius=0.45 + 0.3 * _frac(c * GOLDEN + 0.77),
        decoy_patches=c % 3,
        decoy_strokes=(c + 1) % 3,
        brightness_sign=1.0 if c % 2 == 0 else -1.0,
        damage_style=DAMAGE_STYLES[c % len(DAMAGE_STYLES)],
        style_weight=0.65 + 0.8 * _frac(c * GOLDEN + 0.47),
    )


def _shape_mask(kind: str, yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
    r = np.sqrt(xx * xx + yy * yy)
    if kind == "disk":
        return r < 0.62
    if kind == "square":
        return np.maximum(np.abs(xx), np.abs(yy)) < 0.58
    if kind == "triangle":
        return (yy < 0.55) & (yy > -0.65) & (np.abs(xx) < (0.55 - yy) * 0.8)
    if kind == "cross":
        arm = (np.abs(xx) < 0.22) | (np.abs(yy) < 0.22)
        return arm & (np.abs(xx) < 0.7) & (np.abs(yy) < 0.7)
    if kind == "ring":
        return (r > 0.30) & (r < 0.62)
    if kind == "diamond":
        return np.abs(xx) + np.abs(yy) < 0.75
    if kind == "hbars":
        bars = np.floor((yy + 1.0) * 2.5).astype(int) % 2 == 0
        return bars & (np.abs(xx) < 0.7) & (np.abs(yy) < 0.7)
    if kind == "vbars":
        bars = np.floor((xx + 1.0) * 2.5).astype(int) % 2 == 0
        return bars & (np.abs(xx) < 0.7) & (np.abs(yy) < 0.7)
    raise ValueError(f"unknown shape kind {kind!r}")


def _patch_bounds(center_y: float, center_x: float, side: int, size: int) -> tuple:
    y0 = min(max(int(round(center_y)) - side // 2, 0), size - side)
    x0 = min(max(int(round(center_x)) - side // 2, 0), size - side)
    return y0, x0


def _draw_stroke(img: np.ndarray, cy: float, cx: float, angle: float,
                 length: float, value: float) -> None:
    size = img.shape[1]
    ts = np.linspace(-0.5, 0.5, max(int(length), 2))
    ys = np.clip(np.round(cy + ts * length * math.sin(angle)).astype(int), 0, size - 1)
    xs = np.clip(np.round(cx + ts * length * math.cos(angle)).astype(int), 0, size - 1)
    img[:, ys, xs] = value


def render_motif(class_index: int, size: int, channels: int = 1) -> np.ndarray:
    """The pristine class image (the score-5 appearance), float64 [C,H,H]."""
    m = class_motif(class_index)
    axis = np.linspace(-1.0, 1.0, size)
    yy, xx = np.meshgrid(axis, axis, indexing="ij")
    mask = _shape_mask(m.shape, yy, xx)
    phase = xx * math.cos(m.texture_angle) + yy * math.sin(m.texture_angle)
    texture = 1.0 + m.texture_amp * np.sin(2.0 * math.pi * m.texture_freq * phase)
    img = np.where(mask, np.clip(m.foreground * texture, 0.0, 1.0), m.background)
    if channels == 1:
        img = img[None, :, :].astype(np.float64)
    else:
        tints = [0.6 + 0.4 * _frac(class_index * GOLDEN + 0.13 * ch)
                 for ch in range(channels)]
        img = np.clip(np.stack([img * t for t in tints]), 0.0, 1.0)

    # static damage lookalikes at fixed spots on the class ring
    side = max(2, int(round(size * 0.2)))
    radius = m.ring_radius * size / 2.0
    for i in range(m.decoy_patches):
        angle = m.anchor_angle + 1.1 + i * 2.3
        y0, x0 = _patch_bounds(size / 2.0 + radius * math.sin(angle),
                               size / 2.0 + radius * math.cos(angle), side, size)
        img[:, y0:y0 + side, x0:x0 + side] = 0.5 * m.background
    for i in range(m.decoy_strokes):
        angle = m.texture_angle + 0.5 + i * 0.9
        cy = size * (0.35 + 0.3 * _frac(class_index * GOLDEN + 0.4 + 0.2 * i))
        cx = size * (0.35 + 0.3 * _frac(class_index * GOLDEN + 0.8 + 0.2 * i))
        _draw_stroke(img, cy, cx, angle, 0.5 * size, 0.03 if i % 2 == 0 else 0.97)
    return img


def damage_level(score: int) -> float:
    """lam(s) = (5 - s) / 4: 0 for a pristine score-5 image, 1 for score 1."""
    return (SCORE_HIGH - score) / (SCORE_HIGH - SCORE_LOW)


def _apply_damage(img: np.ndarray, class_index: int, score: int,
                  rng: np.random.Generator) -> np.ndarray:
    lam = damage_level(score)
    if lam == 0.0:
        return img
    m = class_motif(class_index)
    size = img.shape[1]
    out = img.copy()

    def half_slice(which: int):
        return {0: np.s_[:, : size // 2, :], 1: np.s_[:, size // 2:, :],
                2: np.s_[:, :, : size // 2], 3: np.s_[:, :, size // 2:]}[which % 4]

    # the class gain reshapes how strongly one unit of damage shows, so the
    # same visible magnitude decodes to different scores in different classes
    gain = m.style_weight
    if m.damage_style == "occlusion":
        # patch count climbs one step per score level, on the class ring;
        # patch size is a class property, making pooled area ambiguous
        n_occ = int(round(3.9 * lam))
        side = max(2, int(round(size * 0.2 * gain)))
        radius = m.ring_radius * size / 2.0
        for i in range(n_occ):
            angle = m.anchor_angle + i * (2.0 * math.pi / 5.0) + rng.normal(0.0, 0.2)
            y0, x0 = _patch_bounds(size / 2.0 + radius * math.sin(angle),
                                   size / 2.0 + radius * math.cos(angle), side, size)
            out[:, y0:y0 + side, x0:x0 + side] = 0.5 * m.background
    elif m.damage_style == "brightness":
        # shift magnitude climbs with the damage level, over a class half
        shift = m.brightness_sign * 0.3 * lam * gain * rng.uniform(0.9, 1.1)
        out[half_slice(class_index)] += shift
    else:  # scratch
        n_scr = int(round(6.5 * lam * gain))
        for i in range(n_scr):
            angle = m.texture_angle + rng.normal(0.0, 0.3)
            cy = rng.uniform(0.25, 0.75) * size
            cx = rng.uniform(0.25, 0.75) * size
            value = 0.03 if i % 2 == 0 else 0.97
            for off in (-1, 0, 1):  # 3 px wide so pooled features see it
                _draw_stroke(out, cy + off, cx, angle, 0.7 * size, value)

    # universal degradation: additive noise on a small class-anchored square
    side = max(2, size // 3)
    corner = class_index % 4
    y0 = 1 if corner in (0, 2) else size - side - 1
    x0 = 1 if corner in (0, 1) else size - side - 1
    region = np.s_[:, y0:y0 + side, x0:x0 + side]
    out[region] += rng.normal(0.0, 0.3 * lam, size=out[region].shape)
    return np.clip(out, 0.0, 1.0)


def generate_synthetic(n_classes: int, per_score: int, size: int, seed: int,
                       channels: int = 1) -> Dataset:
    """Balanced raw dataset: per_score images per (class, score) cell."""
    if n_classes < 2 or per_score < 1:
        raise InvalidCounts(
            f"need n_classes >= 2 and per_score >= 1, got {n_classes}, {per_score}")
    config = GeneratorConfig(n_classes=n_classes, per_score=per_score,
                             image_size=size, channels=channels, seed=seed)
    samples = []
    for c in range(n_classes):
        motif = render_motif(c, size, channels)
        for score in range(SCORE_LOW, SCORE_HIGH + 1):
            for j in range(per_score):
                rng = stream(seed, "raw", c, score, j)
                img = _apply_damage(motif, c, score, rng)
                samples.append(Sample(
                    sample_id=f"c{c:02d}-s{score}-r{j:03d}",
                    image=Tensor(img),
                    product_class=c,
                    score=score,
                ))
    return Dataset(config=config, samples=samples)


def hflip(image: np.ndarray) -> np.ndarray:
    """Exact horizontal mirror; applying it twice restores the input bitwise."""
    return np.ascontiguousarray(image[:, :, ::-1])


def _random_affine(img: np.ndarray, angle_deg: float, shift_frac: tuple,
                   zoom: float) -> np.ndarray:
    """Rotate/zoom about the center plus translate, one bilinear resample,
    zero-filled borders."""
    size = img.shape[1]
    center = (size - 1) / 2.0
    theta = math.radians(angle_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    # output -> input mapping: undo zoom and rotation about the center
    inv = np.array([[cos_t, sin_t], [-sin_t, cos_t]]) / zoom
    shift = np.array([shift_frac[0] * size, shift_frac[1] * size])
    offset = np.array([center, center]) - inv @ (np.array([center, center]) + shift)
    out = np.empty_like(img)
    for ch in range(img.shape[0]):
        out[ch] = ndimage.affine_transform(img[ch], inv, offset=offset, order=1,
                                           mode="constant", cval=0.0)
    return out


def augment(sample: Sample, count: int, seed: int) -> list:
    """Random rotation/shift/flip/brightness/zoom variants; labels copied."""
    out = []
    for j in range(count):
        rng = stream(seed, "augment", sample.sample_id, j)
        img = sample.image.data
        if rng.random() < 0.5:
            img = hflip(img)
        angle = rng.uniform(-25.0, 25.0)
        shift = (rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1))
        zoom = rng.uniform(0.85, 1.15)
        img = _random_affine(img, angle, shift, zoom)
        img = np.clip(img * rng.uniform(0.7, 1.3), 0.0, 1.0)
        out.append(Sample(
            sample_id=f"{sample.sample_id}-a{j:02d}",
            image=Tensor(img),
            product_class=sample.product_class,
            score=sample.score,
            origin="augmented",
            parent_id=sample.sample_id,
        ))
    return out


def augment_dataset(dataset: Dataset, count: int, seed: int | None = None) -> Dataset:
    """Dataset with `count` augmented variants appended after every raw image."""
    seed = dataset.config.seed if seed is None else seed
    raws = [s for s in dataset.samples if s.origin == "raw"]
    samples = list(dataset.samples)
    for raw in raws:
        samples.extend(augment(raw, count, seed))
    return Dataset(config=replace(dataset.config, augment_per_raw=count),
                   samples=samples)


def split_dataset(dataset: Dataset, ratio: tuple = (3, 1),
                  seed: int | None = None) -> tuple:
    """Parent-disjoint stratified split.

    Raw parents are partitioned per (class, score) cell with a seeded
    shuffle; every augmented sample follows its parent, so no raw image
    leaks information across the split. Returns (train, val) sample lists.
    """
    train_part, val_part = ratio
    if train_part < 1 or val_part < 1:
        raise TooFewSamples(f"split ratio parts must be >= 1, got {ratio}")
    seed = dataset.config.seed if seed is None else seed

    cells: dict[tuple, list] = {}
    for s in dataset.samples:
        if s.origin == "raw":
            cells.setdefault((s.product_class, s.score), []).append(s.sample_id)

    val_parents = set()
    for (c, score), parents in sorted(cells.items()):
        if len(parents) < 2:
            raise TooFewSamples(
                f"cell (class {c}, score {score}) has {len(parents)} raw parents; "
                "need at least 2 to split")
        parents.sort()
        order = stream(seed, "split", c, score).permutation(len(parents))
        n_val = int(math.floor(len(parents) * val_part / (train_part + val_part) + 0.5))
        n_val = min(max(n_val, 1), len(parents) - 1)
        val_parents.update(parents[i] for i in order[:n_val])

    train = [s for s in dataset.samples if s.parent_id not in val_parents]
    val = [s for s in dataset.samples if s.parent_id in val_parents]
    return train, val


# --- on-disk pack -----------------------------------------------------------

PACK_VERSION = 1


def save_dataset(dataset: Dataset, path) -> None:
    """Write manifest.json plus one images.bin of concatenated tensor blobs."""
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        blobs = []
        index = []
        offset = 0
        for s in dataset.samples:
            blob = tensor_to_bytes(s.image)
            index.append({
                "id": s.sample_id,
                "class": s.product_class,
                "score": s.score,
                "origin": s.origin,
                "parent": s.parent_id,
                "offset": offset,
                "length": len(blob),
            })
            blobs.append(blob)
            offset += len(blob)
        payload = b"".join(blobs)
        manifest = {
            "version": PACK_VERSION,
            "config": asdict(dataset.config),
            "checksum": "sha256:" + hashlib.sha256(payload).hexdigest(),
            "samples": index,
        }
        (path / "images.bin").write_bytes(payload)
        (path / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise DatasetIOError(f"cannot write dataset pack at {path}: {exc}") from exc


def load_dataset(path) -> Dataset:
    """Read a pack back; checksum or blob damage raises CorruptManifest."""
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
        payload = (path / "images.bin").read_bytes()
    except OSError as exc:
        raise DatasetIOError(f"cannot read dataset pack at {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CorruptManifest(f"manifest is not valid JSON: {exc}") from exc

    if manifest.get("version") != PACK_VERSION:
        raise CorruptManifest(f"unsupported pack version {manifest.get('version')}")
    digest = "sha256:" + hashlib.sha256(payload).hexdigest()
    if digest != manifest.get("checksum"):
        raise CorruptManifest("images.bin checksum mismatch")

    config = GeneratorConfig(**manifest["config"])
    samples = []
    for entry in manifest["samples"]:
        start, length = entry["offset"], entry["length"]
        if start + length > len(payload):
            raise CorruptManifest(f"sample {entry['id']} blob out of range")
        image = tensor_from_bytes(payload[start:start + length])
        if not (SCORE_LOW <= entry["score"] <= SCORE_HIGH):
            raise LabelOutOfRange(f"sample {entry['id']} score {entry['score']}")
        samples.append(Sample(
            sample_id=entry["id"],
            image=image,
            product_class=entry["class"],
            score=entry["score"],
            origin=entry["origin"],
            parent_id=entry["parent"],
        ))
    return Dataset(config=config, samples=samples)
