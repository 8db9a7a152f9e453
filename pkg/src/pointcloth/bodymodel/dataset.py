"""Procedural training set: outfits draped over interpolated pose sequences."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..io.manifest import ManifestRecord, read_manifest, write_manifest
from ..io.ply import load_ply, save_ply
from .garments import KINDS, GarmentStyle, synth_garment
from .sampling import sample_surface
from .skinning import N_JOINTS, N_SHAPES, PoseShapeParams, pose_body
from .template import JOINT_NAMES, BodyTemplate, default_template

N_POINTS = 8192
DEFAULT_STRIDE = 10

# per-joint (low, high) bounds of each axis-angle component for random key poses
_LIMITS = {
    "pelvis": ((-0.1, 0.1), (-0.4, 0.4), (-0.1, 0.1)),
    "chest": ((-0.15, 0.15), (-0.2, 0.2), (-0.1, 0.1)),
    "neck": ((-0.2, 0.2), (-0.3, 0.3), (-0.1, 0.1)),
    "head": ((-0.2, 0.2), (-0.3, 0.3), (-0.1, 0.1)),
    "shoulder": ((-0.4, 0.4), (-0.3, 0.3), (-0.4, 0.4)),
    "elbow": ((-0.3, 0.3), (-0.3, 0.3), (-0.3, 0.3)),
    "wrist": ((-0.2, 0.2), (-0.2, 0.2), (-0.2, 0.2)),
    "hip": ((-0.6, 0.3), (-0.2, 0.2), (-0.05, 0.2)),     # z range is for the left side
    "knee": ((0.0, 0.7), (0.0, 0.0), (0.0, 0.0)),
    "ankle": ((-0.2, 0.2), (-0.1, 0.1), (-0.1, 0.1)),
}


def random_pose(rng) -> np.ndarray:
    """Random axis-angle pose inside per-joint limits (mirrored for right limbs)."""
    pose = np.zeros((N_JOINTS, 3))
    for j, name in enumerate(JOINT_NAMES):
        key = name.split("_", 1)[-1]
        lim = np.array(_LIMITS[key])
        if name.startswith("r_"):
            # mirror across the sagittal plane: y and z components flip sign
            lim = lim.copy()
            lim[1:] = -lim[1:, ::-1]
        pose[j] = rng.uniform(lim[:, 0], lim[:, 1])
    return pose


def random_shape(rng, sigma_limit: float = 2.5) -> np.ndarray:
    return np.clip(rng.normal(size=N_SHAPES), -sigma_limit, sigma_limit)


def random_outfits(n: int, seed) -> list[GarmentStyle]:
    """``n`` styles cycling through the garment kinds with random parameters."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        kind = KINDS[k % len(KINDS)]
        wide = kind in ("skirt", "dress")
        out.append(GarmentStyle(
            kind=kind,
            flare=float(rng.uniform(0.0, 0.3 if wide else 0.05)),
            length=float(rng.uniform(0.4, 1.0)),
            offset=float(rng.uniform(0.01, 0.03)),
            waist_height=float(rng.uniform(0.0, 0.5)),
        ))
    return out


def pose_sequence(n_frames: int, key_every: int, seed) -> list[PoseShapeParams]:
    """Linear interpolation between random key poses/shapes every ``key_every`` frames."""
    rng = np.random.default_rng(seed)
    n_keys = (n_frames - 1) // key_every + 2
    poses = [random_pose(rng) for _ in range(n_keys)]
    shapes = [random_shape(rng) for _ in range(n_keys)]
    seq = []
    for f in range(n_frames):
        k, r = divmod(f, key_every)
        t = r / key_every
        seq.append(PoseShapeParams((1 - t) * poses[k] + t * poses[k + 1],
                                   (1 - t) * shapes[k] + t * shapes[k + 1]))
    return seq


@dataclass
class DatasetConfig:
    outfits: list
    n_frames: int = 50
    stride: int = DEFAULT_STRIDE
    key_every: int = 25
    n_points: int = N_POINTS
    seed: int = 0

    def __post_init__(self):
        if self.stride < 1 or self.n_frames < 1 or self.key_every < 1:
            raise ValueError("n_frames, stride and key_every must be positive")


@dataclass
class Frame:
    frame_id: int
    params: PoseShapeParams
    cloud: np.ndarray


@dataclass
class TrainingSet:
    outfits: list                       # [(outfit_id, GarmentStyle)]
    frames: list                        # per outfit, list of Frame
    stride: int = DEFAULT_STRIDE
    template: BodyTemplate | None = field(default=None, repr=False)

    def samples(self):
        """Flat list of (outfit index, frame index)."""
        return [(o, f) for o in range(len(self.outfits)) for f in range(len(self.frames[o]))]

    def __len__(self):
        return sum(len(f) for f in self.frames)


def _frame_seed(seed, outfit, frame):
    return np.random.SeedSequence([int(seed), int(outfit), int(frame)])


def _synth_outfit(config: DatasetConfig, template: BodyTemplate, o: int, style) -> list[Frame]:
    seq = pose_sequence(config.n_frames, config.key_every, np.random.SeedSequence([config.seed, o, 0x5E0]))
    kept = []
    for f in range(0, config.n_frames, config.stride):
        body = pose_body(template, seq[f])
        mesh = synth_garment(style, body)
        cloud = sample_surface(mesh, config.n_points, _frame_seed(config.seed, o, f))
        kept.append(Frame(f, seq[f], cloud.astype(np.float32).astype(np.float64)))
    return kept


def make_dataset(config: DatasetConfig, template: BodyTemplate | None = None, jobs: int = 1) -> TrainingSet:
    """Synthesize every ``stride``-th frame of one pose sequence per outfit.

    Clouds are rounded to float32 so the serialized dataset round-trips.
    Every outfit has its own seed stream, so ``jobs`` does not change the result.
    """
    template = template or default_template()
    work = list(enumerate(config.outfits))
    if jobs > 1 and len(work) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            frames = list(pool.map(lambda w: _synth_outfit(config, template, *w), work))
    else:
        frames = [_synth_outfit(config, template, o, style) for o, style in work]
    return TrainingSet(work, frames, config.stride, template)


# ------------------------------------------------------------------ files

_STYLE_FIELDS = ("kind", "flare", "length", "offset", "waist_height")


def save_dataset(ts: TrainingSet, root) -> None:
    root = Path(root)
    (root / "clouds").mkdir(parents=True, exist_ok=True)
    lines = ["# outfit_id\t" + "\t".join(_STYLE_FIELDS)]
    for oid, style in ts.outfits:
        d = style.to_dict()
        lines.append("\t".join([str(oid), d["kind"]] + [repr(float(d[k])) for k in _STYLE_FIELDS[1:]]))
    (root / "outfits.tsv").write_text("\n".join(lines) + "\n")
    records = []
    for (oid, _), frames in zip(ts.outfits, ts.frames):
        for fr in frames:
            rel = f"clouds/o{oid:03d}_f{fr.frame_id:05d}.ply"
            save_ply(root / rel, fr.cloud)
            records.append(ManifestRecord(oid, fr.frame_id, fr.params.to_vector(), rel))
    write_manifest(root / "manifest.tsv", records, ts.stride)


def load_dataset(root, template: BodyTemplate | None = None) -> TrainingSet:
    root = Path(root)
    styles = {}
    for n, raw in enumerate((root / "outfits.tsv").read_text().splitlines(), 1):
        if not raw.strip() or raw.startswith("#"):
            continue
        cols = raw.split("\t")
        if len(cols) != 6:
            raise ValueError(f"{root / 'outfits.tsv'}:{n}: expected 6 fields, got {len(cols)}")
        styles[int(cols[0])] = GarmentStyle(cols[1], *(float(c) for c in cols[2:]))
    records, stride = read_manifest(root / "manifest.tsv")
    ids = sorted(styles)
    frames = {oid: [] for oid in ids}
    for rec in records:
        if rec.outfit_id not in frames:
            raise ValueError(f"manifest references unknown outfit {rec.outfit_id}")
        cloud = load_ply(root / rec.path).vertices
        frames[rec.outfit_id].append(Frame(rec.frame_id, PoseShapeParams.from_vector(rec.params), cloud))
    return TrainingSet([(oid, styles[oid]) for oid in ids], [frames[oid] for oid in ids], stride,
                       template or default_template())
