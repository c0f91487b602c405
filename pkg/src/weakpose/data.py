"""Synthetic articulated-figure dataset, annotation schema IO and
augmentation.

Samples are pure functions of (seed, index): a stick figure with bright
limbs and per-keypoint disks on a textured background, randomized in pose,
scale and position.  Truncation drops a random subset of parts and zeroes
their presence labels, so presence varies across the corpus and carries
signal.  Coordinates are (row, col) everywhere inside the library; the
annotation schema boundary is the single place that speaks (x, y).
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

# spawn-key namespaces so per-sample and bookkeeping streams never collide
_SAMPLE_KEY = 11
_LABEL_KEY = 23


class DataError(ValueError):
    """Malformed annotation file or undecodable image."""


class SchemaError(DataError):
    """Annotation JSON is missing or mistypes a required field."""


# ---------------------------------------------------------------------------
# Skeleton definitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SkeletonSpec:
    """Named keypoints plus the limb list; left/right symmetry pairs are
    derived from the ``left_``/``right_`` name prefixes."""

    names: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]

    @property
    def num_keypoints(self) -> int:
        return len(self.names)

    def symmetry_pairs(self) -> tuple[tuple[int, int], ...]:
        index = {name: i for i, name in enumerate(self.names)}
        pairs = []
        for name, i in index.items():
            if name.startswith("left_"):
                twin = "right_" + name[len("left_") :]
                if twin in index:
                    pairs.append((i, index[twin]))
        return tuple(sorted(pairs))


STICK_FIGURE_SKELETON = SkeletonSpec(
    names=("head", "left_hand", "right_hand", "left_foot", "right_foot"),
    edges=((0, 1), (0, 2), (0, 3), (0, 4)),
)

COCO_SKELETON = SkeletonSpec(
    names=(
        "nose",
        "left_eye",
        "right_eye",
        "left_ear",
        "right_ear",
        "left_shoulder",
        "right_shoulder",
        "left_elbow",
        "right_elbow",
        "left_wrist",
        "right_wrist",
        "left_hip",
        "right_hip",
        "left_knee",
        "right_knee",
        "left_ankle",
        "right_ankle",
    ),
    edges=(
        (15, 13), (13, 11), (16, 14), (14, 12), (11, 12),
        (5, 11), (6, 12), (5, 6), (5, 7), (6, 8),
        (7, 9), (8, 10), (1, 2), (0, 1), (0, 2),
        (1, 3), (2, 4), (3, 5), (4, 6),
    ),
)


# ---------------------------------------------------------------------------
# Samples and datasets
# ---------------------------------------------------------------------------


class LocationAccessCounter:
    """Counts reads of location labels, so weak-mode training can prove it
    never touched them."""

    def __init__(self):
        self.reads = 0


class Sample:
    """One image with per-keypoint presence labels and, on location-labeled
    samples only, (row, col) coordinates.

    ``presence[i] == 0`` means keypoint i is absent and its coordinate row is
    meaningless.  Reading ``locations`` bumps the dataset's access counter.
    """

    __slots__ = ("image", "presence", "has_locations", "_locations", "_counter")

    def __init__(self, image, presence, locations=None, has_locations=False, counter=None):
        self.image = image
        self.presence = presence
        self.has_locations = bool(has_locations)
        self._locations = locations
        self._counter = counter

    @property
    def locations(self) -> np.ndarray | None:
        if self._counter is not None:
            self._counter.reads += 1
        return self._locations

    def peek_locations(self) -> np.ndarray | None:
        """Untracked access, for dataset plumbing (export, augmentation)."""
        return self._locations


class PoseDataset:
    def __init__(self, samples: list[Sample], skeleton: SkeletonSpec, image_hw: tuple[int, int]):
        self.skeleton = skeleton
        self.image_hw = image_hw
        self.location_reads = LocationAccessCounter()
        self.samples = samples
        for s in samples:
            s._counter = self.location_reads

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, i: int) -> Sample:
        return self.samples[i]


@dataclass
class DatasetConfig:
    skeleton: SkeletonSpec = STICK_FIGURE_SKELETON
    height: int = 64
    width: int = 64
    count: int = 800
    labeled_fraction: float = 0.0
    truncation_prob: float = 0.6
    seed: int = 0
    channels: int = 1

    def validate(self) -> list[str]:
        problems = []
        if self.height % 16 != 0 or self.width % 16 != 0:
            problems.append(f"image extents must be multiples of 16, got {self.height}x{self.width}")
        if not 0.0 <= self.labeled_fraction <= 1.0:
            problems.append(f"labeled_fraction must be in [0, 1], got {self.labeled_fraction}")
        if not 0.0 <= self.truncation_prob <= 1.0:
            problems.append(f"truncation_prob must be in [0, 1], got {self.truncation_prob}")
        if self.count < 1:
            problems.append(f"count must be >= 1, got {self.count}")
        if self.channels not in (1, 3):
            problems.append(f"channels must be 1 or 3, got {self.channels}")
        return problems


# ---------------------------------------------------------------------------
# Synthesis
# ---------------------------------------------------------------------------


def _segment_coverage(grid_r, grid_c, p, q, halfwidth):
    """Anti-aliased coverage of the segment p-q with the given half width."""
    pr, pc = p
    qr, qc = q
    dr, dc = qr - pr, qc - pc
    length_sq = dr * dr + dc * dc
    if length_sq < 1e-12:
        dist = np.hypot(grid_r - pr, grid_c - pc)
    else:
        t = ((grid_r - pr) * dr + (grid_c - pc) * dc) / length_sq
        t = np.clip(t, 0.0, 1.0)
        dist = np.hypot(grid_r - (pr + t * dr), grid_c - (pc + t * dc))
    return np.clip(halfwidth + 0.5 - dist, 0.0, 1.0)


def _disk_coverage(grid_r, grid_c, center, radius):
    dist = np.hypot(grid_r - center[0], grid_c - center[1])
    return np.clip(radius + 0.5 - dist, 0.0, 1.0)


def _sample_pose(rng, h, w):
    """Joint coordinates in (row, col); left parts stay on the low-column
    side so mirrored poses genuinely swap labels."""
    s = rng.uniform(0.42, 0.58) * min(h, w)
    center = np.array([rng.uniform(0.40, 0.60) * h, rng.uniform(0.40, 0.60) * w])
    neck = center + np.array([-0.28 * s, rng.uniform(-0.06, 0.06) * s])
    pelvis = center + np.array([0.22 * s, rng.uniform(-0.06, 0.06) * s])
    head = neck + np.array([-rng.uniform(0.30, 0.45) * s, rng.uniform(-0.12, 0.12) * s])
    left_hand = neck + np.array([rng.uniform(-0.15, 0.40) * s, -rng.uniform(0.28, 0.55) * s])
    right_hand = neck + np.array([rng.uniform(-0.15, 0.40) * s, rng.uniform(0.28, 0.55) * s])
    left_foot = pelvis + np.array([rng.uniform(0.35, 0.60) * s, -rng.uniform(0.08, 0.38) * s])
    right_foot = pelvis + np.array([rng.uniform(0.35, 0.60) * s, rng.uniform(0.08, 0.38) * s])
    keypoints = np.stack([head, left_hand, right_hand, left_foot, right_foot])
    return s, neck, pelvis, keypoints


def _render_figure(rng, h, w, s, neck, pelvis, keypoints, keep, distractors: int = 4):
    grid_r, grid_c = np.mgrid[0:h, 0:w].astype(np.float64)
    noise = rng.normal(0.0, 1.0, size=(h, w))
    background = gaussian_filter(noise, sigma=6.0)
    lo, hi = background.min(), background.max()
    img = (background - lo) / max(hi - lo, 1e-9) * 0.18

    def paint(coverage, value):
        np.maximum(img, coverage * value, out=img)

    # distractor blobs that look like limb-end disks but attach to nothing:
    # presence of a part is then verifiable only at the end of its limb, so
    # image-level statistics alone cannot explain the labels
    n_distractors = int(rng.integers(2, distractors + 2))
    placed = 0
    for _ in range(40):
        if placed == n_distractors:
            break
        pos = np.array([rng.uniform(3, h - 4), rng.uniform(3, w - 4)])
        if min(np.hypot(*(pos - kp)) for kp in [*keypoints, neck, pelvis]) < 0.22 * s + 4:
            continue
        paint(_disk_coverage(grid_r, grid_c, pos, rng.uniform(1.8, 3.2)), 1.0)
        placed += 1

    paint(_segment_coverage(grid_r, grid_c, neck, pelvis, 1.0), 0.8)
    parents = [neck, neck, neck, pelvis, pelvis]
    # disk sizes distinguish part types: big head, small hands, mid feet
    radii = [max(0.20 * s, 3.5), max(0.115 * s, 2.4), max(0.115 * s, 2.4), max(0.16 * s, 3.0), max(0.16 * s, 3.0)]
    for k in range(len(keypoints)):
        if not keep[k]:
            continue
        paint(_segment_coverage(grid_r, grid_c, parents[k], keypoints[k], 1.0), 0.8)
        paint(_disk_coverage(grid_r, grid_c, keypoints[k], radii[k]), 1.0)
    return np.clip(img, 0.0, 1.0)


def synth(config: DatasetConfig) -> PoseDataset:
    """Deterministic synthetic dataset; each sample depends only on
    (config.seed, index).  Exactly floor(labeled_fraction * N) samples carry
    location labels, chosen by a seeded shuffle."""
    problems = config.validate()
    if problems:
        raise ValueError("invalid dataset config: " + "; ".join(problems))
    if config.skeleton is not STICK_FIGURE_SKELETON and config.skeleton.names != STICK_FIGURE_SKELETON.names:
        raise ValueError("the synthetic generator draws the 5-keypoint stick figure skeleton")
    h, w = config.height, config.width
    k = config.skeleton.num_keypoints

    label_rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(_LABEL_KEY,)))
    order = label_rng.permutation(config.count)
    labeled = set(order[: int(np.floor(config.labeled_fraction * config.count))].tolist())

    samples: list[Sample] = []
    for index in range(config.count):
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(_SAMPLE_KEY, index)))
        pose = None
        for _ in range(100):
            s, neck, pelvis, keypoints = _sample_pose(rng, h, w)
            if (keypoints[:, 0] > 2).all() and (keypoints[:, 0] < h - 3).all() and (
                keypoints[:, 1] > 2
            ).all() and (keypoints[:, 1] < w - 3).all():
                pose = (s, neck, pelvis, keypoints)
                break
        if pose is None:
            import warnings

            warnings.warn(f"sample {index}: no valid geometry after 100 tries, skipping")
            continue
        s, neck, pelvis, keypoints = pose

        keep = np.ones(k, dtype=bool)
        if rng.uniform() < config.truncation_prob:
            n_drop = int(rng.integers(1, k))
            keep[rng.choice(k, size=n_drop, replace=False)] = False

        img = _render_figure(rng, h, w, s, neck, pelvis, keypoints, keep)
        image = img[..., None]
        if config.channels == 3:
            image = np.repeat(image, 3, axis=-1)
        presence = keep.astype(np.float64)
        has_loc = index in labeled
        locations = keypoints.copy() if has_loc else None
        samples.append(Sample(image, presence, locations, has_loc))
    return PoseDataset(samples, config.skeleton, (h, w))


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------


def flip_sample(sample: Sample, skeleton: SkeletonSpec) -> Sample:
    """Mirror columns and swap left/right keypoint labels.  An involution:
    flipping twice restores the original sample exactly."""
    w = sample.image.shape[1]
    perm = np.arange(skeleton.num_keypoints)
    for i, j in skeleton.symmetry_pairs():
        perm[i], perm[j] = perm[j], perm[i]
    image = sample.image[:, ::-1].copy()
    presence = sample.presence[perm].copy()
    locations = sample.peek_locations()
    if locations is not None:
        locations = locations[perm].copy()
        locations[:, 1] = (w - 1) - locations[:, 1]
    return Sample(image, presence, locations, sample.has_locations, counter=sample._counter)


def scale_sample(sample: Sample, factor: float, fill: float = 0.0) -> Sample:
    """Zoom about the image center by ``factor`` (nearest-neighbour), keeping
    the canonical extents; keypoints pushed outside the frame lose presence."""
    h, w = sample.image.shape[:2]
    cr, cc = (h - 1) / 2.0, (w - 1) / 2.0
    out_r, out_c = np.mgrid[0:h, 0:w].astype(np.float64)
    in_r = np.rint((out_r - cr) / factor + cr).astype(np.int64)
    in_c = np.rint((out_c - cc) / factor + cc).astype(np.int64)
    valid = (in_r >= 0) & (in_r < h) & (in_c >= 0) & (in_c < w)
    image = np.full_like(sample.image, fill)
    image[valid] = sample.image[in_r[valid], in_c[valid]]

    presence = sample.presence.copy()
    locations = sample.peek_locations()
    if locations is not None:
        locations = locations.copy()
        locations[:, 0] = (locations[:, 0] - cr) * factor + cr
        locations[:, 1] = (locations[:, 1] - cc) * factor + cc
        outside = (
            (locations[:, 0] < 0)
            | (locations[:, 0] > h - 1)
            | (locations[:, 1] < 0)
            | (locations[:, 1] > w - 1)
        )
        presence[outside] = 0.0
    return Sample(image, presence, locations, sample.has_locations, counter=sample._counter)


def augment(sample: Sample, rng: np.random.Generator, skeleton: SkeletonSpec) -> Sample:
    """Horizontal flip with probability 0.5, then uniform rescale in
    [0.65, 1.35] about the image center."""
    if rng.uniform() < 0.5:
        sample = flip_sample(sample, skeleton)
    factor = rng.uniform(0.65, 1.35)
    return scale_sample(sample, factor)


# ---------------------------------------------------------------------------
# Image files: PGM/PPM write + PGM/PPM/PNG read
# ---------------------------------------------------------------------------


def write_pgm(path, values: np.ndarray) -> None:
    """Binary PGM (magic P5, maxval 255) from a (H, W) uint8 array."""
    values = np.asarray(values, dtype=np.uint8)
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(values.tobytes())


def write_ppm(path, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=np.uint8)
    h, w, _ = values.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(values.tobytes())


def _read_pnm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    tokens = []
    pos = 2  # past magic
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(int(data[start:pos]))
    return tokens, pos + 1  # single whitespace after maxval


def read_image(path) -> np.ndarray:
    """Load an 8-bit grayscale or RGB image (PGM, PPM or PNG) as float64 in
    [0, 1] with shape (H, W, 1) or (H, W, 3)."""
    data = Path(path).read_bytes()
    if data[:2] in (b"P5", b"P6"):
        (w, h, maxval), pos = _read_pnm_tokens(data, 3)
        if maxval != 255:
            raise DataError(f"{path}: only maxval 255 supported, got {maxval}")
        channels = 1 if data[:2] == b"P5" else 3
        raw = np.frombuffer(data, dtype=np.uint8, count=h * w * channels, offset=pos)
        return raw.reshape(h, w, channels).astype(np.float64) / 255.0
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _read_png(data, str(path))
    raise DataError(f"{path}: unsupported image format (need PGM, PPM or PNG)")


def _read_png(data: bytes, name: str) -> np.ndarray:
    """Minimal PNG reader: 8-bit depth, grayscale or RGB, no interlace."""
    pos = 8
    idat = b""
    header = None
    while pos < len(data):
        length, ctype = struct.unpack(">I4s", data[pos : pos + 8])
        chunk = data[pos + 8 : pos + 8 + length]
        pos += 12 + length
        if ctype == b"IHDR":
            header = struct.unpack(">IIBBBBB", chunk)
        elif ctype == b"IDAT":
            idat += chunk
        elif ctype == b"IEND":
            break
    if header is None:
        raise DataError(f"{name}: missing IHDR chunk")
    w, h, depth, color, _, _, interlace = header
    if depth != 8 or interlace != 0 or color not in (0, 2):
        raise DataError(f"{name}: only 8-bit non-interlaced grayscale/RGB PNG supported")
    channels = 1 if color == 0 else 3
    raw = zlib.decompress(idat)
    stride = w * channels
    out = np.zeros((h, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.uint8)
    for row in range(h):
        filt = raw[row * (stride + 1)]
        line = np.frombuffer(raw, dtype=np.uint8, count=stride, offset=row * (stride + 1) + 1).copy()
        if filt == 0:
            pass
        elif filt == 1:
            for i in range(channels, stride):
                line[i] = (line[i] + line[i - channels]) & 0xFF
        elif filt == 2:
            line = (line + prev) & 0xFF
        elif filt == 3:
            for i in range(stride):
                left = line[i - channels] if i >= channels else 0
                line[i] = (line[i] + ((int(left) + int(prev[i])) >> 1)) & 0xFF
        elif filt == 4:
            for i in range(stride):
                left = int(line[i - channels]) if i >= channels else 0
                up = int(prev[i])
                ul = int(prev[i - channels]) if i >= channels else 0
                p = left + up - ul
                pa, pb, pc = abs(p - left), abs(p - up), abs(p - ul)
                pred = left if (pa <= pb and pa <= pc) else (up if pb <= pc else ul)
                line[i] = (line[i] + pred) & 0xFF
        else:
            raise DataError(f"{name}: unknown PNG filter {filt}")
        out[row] = line
        prev = line
    return out.reshape(h, w, channels).astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# Annotation schema
# ---------------------------------------------------------------------------
#
# JSON layout (a deliberate subset of the COCO keypoints format):
#   keypoint_names : list of K names
#   skeleton       : list of [i, j] limb index pairs
#   images         : [{"id", "width", "height", "file"}, ...]
#   annotations    : [{"image_id", "keypoints": [x1, y1, v1, ..., xK, yK, vK]}]
# Visibility: v = 0 absent, v = 1 present without a location label,
# v = 2 present with (x, y) given.  x is the column, y the row.


def export_dataset(dataset: PoseDataset, out_dir) -> Path:
    """Write images (PGM/PPM) plus annotations.json; returns the json path."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    images = []
    annotations = []
    for i, sample in enumerate(dataset.samples):
        fname = f"images/{i:06d}." + ("pgm" if sample.image.shape[-1] == 1 else "ppm")
        arr = np.rint(sample.image * 255.0).astype(np.uint8)
        if sample.image.shape[-1] == 1:
            write_pgm(out_dir / fname, arr[:, :, 0])
        else:
            write_ppm(out_dir / fname, arr)
        h, w = sample.image.shape[:2]
        images.append({"id": i, "width": w, "height": h, "file": fname})
        kps = []
        locations = sample.peek_locations()
        for k in range(dataset.skeleton.num_keypoints):
            if sample.presence[k] == 0:
                kps.extend([0.0, 0.0, 0])
            elif sample.has_locations and locations is not None:
                kps.extend([float(locations[k][1]), float(locations[k][0]), 2])
            else:
                kps.extend([0.0, 0.0, 1])
        annotations.append({"image_id": i, "keypoints": kps})
    doc = {
        "keypoint_names": list(dataset.skeleton.names),
        "skeleton": [list(e) for e in dataset.skeleton.edges],
        "images": images,
        "annotations": annotations,
    }
    path = out_dir / "annotations.json"
    path.write_text(json.dumps(doc))
    return path


def _require(mapping, key, where):
    if key not in mapping:
        raise SchemaError(f"missing required field {key!r} in {where}")
    return mapping[key]


def parse_annotations(path, expected_keypoint_names: Sequence[str] | None = None) -> PoseDataset:
    """Load a dataset from the annotation schema; images resolve relative to
    the annotation file's directory."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: malformed JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e

    names = tuple(_require(doc, "keypoint_names", "top level"))
    skeleton_edges = tuple(tuple(int(v) for v in e) for e in _require(doc, "skeleton", "top level"))
    if expected_keypoint_names is not None and tuple(expected_keypoint_names) != names:
        raise DataError(
            f"{path}: keypoint names {list(names)} do not match the configured {list(expected_keypoint_names)}"
        )
    skeleton = SkeletonSpec(names, skeleton_edges)
    k = skeleton.num_keypoints

    images = {}
    for entry in _require(doc, "images", "top level"):
        images[_require(entry, "id", "images entry")] = entry
        for req in ("width", "height", "file"):
            _require(entry, req, "images entry")

    samples = []
    hw = None
    for ann in _require(doc, "annotations", "top level"):
        image_id = _require(ann, "image_id", "annotation")
        kps = _require(ann, "keypoints", "annotation")
        if len(kps) != 3 * k:
            raise DataError(
                f"{path}: annotation for image {image_id} has {len(kps)} values, expected {3 * k}"
            )
        entry = images.get(image_id)
        if entry is None:
            raise DataError(f"{path}: annotation references unknown image id {image_id}")
        image = read_image(path.parent / entry["file"])
        if image.shape[0] != entry["height"] or image.shape[1] != entry["width"]:
            raise DataError(f"{path}: image {entry['file']} extents do not match its metadata")
        hw = image.shape[:2]
        triples = np.asarray(kps, dtype=np.float64).reshape(k, 3)
        presence = (triples[:, 2] > 0).astype(np.float64)
        locations = np.stack([triples[:, 1], triples[:, 0]], axis=-1)  # (row, col)
        present = presence > 0
        has_loc = bool(present.any()) and bool((triples[present, 2] == 2).all())
        samples.append(Sample(image, presence, locations if has_loc else None, has_loc))
    if hw is None:
        raise DataError(f"{path}: no annotations found")
    return PoseDataset(samples, skeleton, hw)
