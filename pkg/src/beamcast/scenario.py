"""Synthetic V2I scenario generation, dataset ingestion, and windowing.

A roadside BS sits at the origin with its camera boresight along +y and the
antenna array along +x (broadside = boresight). A vehicle drives along a
straight road segment; frames inside the camera's horizontal field of view
yield a normalized bounding box (pinhole-style: x_c linear in bearing, box
size proportional to 1/distance) and a ground-truth optimal beam from the
channel model.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import bearing_sine, dft_codebook, los_channel, all_gains
from .errors import ConfigError, ParseError, ValidationError

WINDOW_SIZE = 13  # T_hist + T_pred for both prediction modes

# Jitter can push width/height to the clamp floor but never to the all-zero
# "no detection" sentinel.
MIN_BOX_SIDE = 1e-4


@dataclass
class BoundingBox:
    """Normalized detection box: center, width, height as image fractions."""

    x_c: float
    y_c: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.x_c, self.y_c, self.w, self.h)
        if any(v < 0.0 or v > 1.0 for v in vals):
            raise ValidationError(f"bbox components must lie in [0, 1]: {vals}")
        if not self.is_sentinel() and (self.w <= 0.0 or self.h <= 0.0):
            raise ValidationError(f"non-sentinel bbox needs w, h > 0: {vals}")

    def is_sentinel(self):
        """All-zero box: the reserved 'no detection' marker."""
        return self.x_c == 0.0 and self.y_c == 0.0 and self.w == 0.0 and self.h == 0.0

    def as_array(self):
        return np.array([self.x_c, self.y_c, self.w, self.h], dtype=np.float64)


@dataclass
class FrameMeta:
    width: int
    height: int
    channels: int = 3

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or self.channels <= 0:
            raise ValidationError("frame dimensions must be positive")


@dataclass
class Frame:
    t: int
    bbox: BoundingBox
    optimal_beam: int
    beam_powers: np.ndarray | None = None


@dataclass
class SequenceRecord:
    """One synchronized (bbox, beam label) trajectory; the ingestion unit."""

    seq_id: int
    frames: list

    def __post_init__(self):
        ts = [f.t for f in self.frames]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValidationError(f"sequence {self.seq_id}: frame times must strictly increase")


@dataclass
class WindowSample:
    """History matrix (4 x T_hist, rows x_c/y_c/w/h) plus future beam labels."""

    history: np.ndarray
    future_beams: np.ndarray
    seq_id: int = -1
    start: int = 0


@dataclass
class DatasetSplit:
    train: list
    val: list
    test: list
    seed: int
    t_hist: int = 8
    t_pred: int = 5
    train_seq_ids: list = field(default_factory=list)
    val_seq_ids: list = field(default_factory=list)
    test_seq_ids: list = field(default_factory=list)


@dataclass
class ScenarioConfig:
    """Geometry and sampling parameters for the synthetic generator.

    The BS is at the origin; `road_start` -> `road_end` is traversed once per
    pass at a per-pass constant speed drawn uniformly from `speed_range`.
    """

    n_passes: int = 60
    fov_deg: float = 50.0
    road_start: tuple = (-40.0, 22.0)
    road_end: tuple = (40.0, 22.0)
    speed_range: tuple = (8.0, 14.0)
    frame_rate: float = 7.79
    box_noise: float = 0.01
    n_antennas: int = 16
    n_beams: int = 32
    ref_gain: float = 1.0
    box_ref_width: float = 0.08
    box_ref_height: float = 0.12
    box_ref_dist: float = 22.0
    store_powers: bool = False

    def __post_init__(self):
        if self.fov_deg <= 0:
            raise ConfigError("fov_deg must be positive")
        if self.n_passes < 1:
            raise ConfigError("n_passes must be >= 1")
        if np.allclose(self.road_start, self.road_end):
            raise ConfigError("road segment is degenerate")
        if not (0 < self.speed_range[0] <= self.speed_range[1]):
            raise ConfigError("speed_range must satisfy 0 < lo <= hi")
        if self.frame_rate <= 0:
            raise ConfigError("frame_rate must be positive")
        if self.box_noise < 0:
            raise ConfigError("box_noise must be >= 0")


def _clamp01(v):
    return min(1.0, max(0.0, v))


def project_bbox(ue_pos, cfg):
    """Pinhole-style projection of the UE position into a normalized bbox.

    Returns None when the UE is outside the horizontal field of view.
    x_c maps bearing linearly across the FOV; w, h scale with 1/distance;
    y_c drifts mildly with distance so no feature row is exactly constant.
    """
    sin_b, d = bearing_sine((0.0, 0.0), ue_pos, (1.0, 0.0))
    bearing = math.asin(sin_b)
    half_fov = math.radians(cfg.fov_deg) / 2.0
    if abs(bearing) > half_fov or ue_pos[1] <= 0:
        return None
    x_c = 0.5 + bearing / (2.0 * half_fov)
    scale = cfg.box_ref_dist / d
    w = _clamp01(cfg.box_ref_width * scale)
    h = _clamp01(cfg.box_ref_height * scale)
    y_c = _clamp01(0.5 + 0.2 * (scale - 1.0))
    return BoundingBox(x_c=_clamp01(x_c), y_c=y_c, w=max(w, MIN_BOX_SIDE), h=max(h, MIN_BOX_SIDE))


def generate_scenario(cfg, rng):
    """Simulate `cfg.n_passes` drive-bys; one SequenceRecord per pass.

    Deterministic given (cfg, rng state). Frames outside the FOV are
    dropped; optional Gaussian jitter `box_noise` is applied to every box
    component and re-clamped to [0, 1].
    """
    codebook = dft_codebook(cfg.n_antennas, cfg.n_beams)
    start = np.asarray(cfg.road_start, dtype=np.float64)
    end = np.asarray(cfg.road_end, dtype=np.float64)
    seg = end - start
    seg_len = float(np.linalg.norm(seg))
    direction = seg / seg_len
    records = []
    for seq_id in range(cfg.n_passes):
        speed = rng.uniform(*cfg.speed_range)
        step = speed / cfg.frame_rate
        n_steps = int(seg_len / step) + 1
        frames = []
        t = 0
        for k in range(n_steps):
            pos = start + direction * (k * step)
            box = project_bbox(pos, cfg)
            if box is None:
                continue
            if cfg.box_noise > 0:
                noisy = box.as_array() + rng.normal(0.0, cfg.box_noise, size=4)
                noisy = np.clip(noisy, 0.0, 1.0)
                noisy[2] = max(noisy[2], MIN_BOX_SIDE)
                noisy[3] = max(noisy[3], MIN_BOX_SIDE)
                box = BoundingBox(*noisy)
            snap = los_channel((0.0, 0.0), pos, (1.0, 0.0), cfg.n_antennas, cfg.ref_gain, t=t)
            gains = all_gains(snap, codebook)
            frames.append(
                Frame(
                    t=t,
                    bbox=box,
                    optimal_beam=int(np.argmax(gains)),
                    beam_powers=gains.copy() if cfg.store_powers else None,
                )
            )
            t += 1
        records.append(SequenceRecord(seq_id=seq_id, frames=frames))
    if all(len(r.frames) == 0 for r in records):
        raise ConfigError("scenario produced no in-FOV frames; widen the FOV or move the road")
    return records


def normalize_bbox(pixel_box, meta):
    """Convert a pixel-unit (x_c, y_c, w, h) box to image fractions."""
    x_c, y_c, w, h = (float(v) for v in pixel_box)
    if w <= 0 or h <= 0:
        raise ValidationError(f"pixel box needs positive size: {pixel_box}")
    if not (0 <= x_c - w / 2 and x_c + w / 2 <= meta.width):
        raise ValidationError(f"pixel box exceeds image width: {pixel_box}")
    if not (0 <= y_c - h / 2 and y_c + h / 2 <= meta.height):
        raise ValidationError(f"pixel box exceeds image height: {pixel_box}")
    return BoundingBox(
        x_c=x_c / meta.width,
        y_c=y_c / meta.height,
        w=w / meta.width,
        h=h / meta.height,
    )


def sliding_windows(record, t_hist, t_pred):
    """Stride-1 windows of size t_hist + t_pred over one sequence.

    Sequences shorter than one window yield an empty list. Frame times must
    be contiguous so history and labels stay aligned.
    """
    window = t_hist + t_pred
    frames = record.frames
    if len(frames) < window:
        return []
    ts = [f.t for f in frames]
    if any(b - a != 1 for a, b in zip(ts, ts[1:])):
        raise ValidationError(f"sequence {record.seq_id}: frames must be contiguous in t")
    samples = []
    boxes = np.stack([f.bbox.as_array() for f in frames])  # [T, 4]
    beams = np.array([f.optimal_beam for f in frames], dtype=np.int64)
    for i in range(len(frames) - window + 1):
        samples.append(
            WindowSample(
                history=boxes[i : i + t_hist].T.copy(),
                future_beams=beams[i + t_hist : i + window].copy(),
                seq_id=record.seq_id,
                start=i,
            )
        )
    return samples


def split_dataset(records, seed, t_hist=8, t_pred=5):
    """Shuffle sequences, assign 70/10/20 by sequence count, then window.

    Splitting happens before windowing so no window straddles splits.
    """
    if len(records) < 10:
        raise ConfigError(f"need at least 10 sequences to split, got {len(records)}")
    if t_hist + t_pred != WINDOW_SIZE:
        raise ConfigError(
            f"t_hist + t_pred must equal the window size {WINDOW_SIZE}, got {t_hist}+{t_pred}"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(records))
    n = len(records)
    n_train = int(math.floor(0.7 * n))
    n_val = int(math.floor(0.1 * n))
    train_ids = [records[i].seq_id for i in order[:n_train]]
    val_ids = [records[i].seq_id for i in order[n_train : n_train + n_val]]
    test_ids = [records[i].seq_id for i in order[n_train + n_val :]]
    by_id = {r.seq_id: r for r in records}

    def windows(ids):
        out = []
        for sid in ids:
            out.extend(sliding_windows(by_id[sid], t_hist, t_pred))
        return out

    return DatasetSplit(
        train=windows(train_ids),
        val=windows(val_ids),
        test=windows(test_ids),
        seed=seed,
        t_hist=t_hist,
        t_pred=t_pred,
        train_seq_ids=train_ids,
        val_seq_ids=val_ids,
        test_seq_ids=test_ids,
    )


def save_jsonl(records, path):
    """One sequence per line; see load_jsonl for the schema."""
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            frames = []
            for fr in rec.frames:
                entry = {
                    "t": fr.t,
                    "bbox": [fr.bbox.x_c, fr.bbox.y_c, fr.bbox.w, fr.bbox.h],
                    "optimal_beam": fr.optimal_beam,
                }
                if fr.beam_powers is not None:
                    entry["beam_powers"] = [float(p) for p in fr.beam_powers]
                frames.append(entry)
            f.write(json.dumps({"seq_id": rec.seq_id, "frames": frames}) + "\n")


def load_jsonl(path):
    """Parse sequences from a JSON-lines file.

    Schema per line:
      {"seq_id": int, "frames": [{"t": int, "bbox": [xc, yc, w, h],
        "beam_powers": [float, ...] (optional), "optimal_beam": int}]}

    Errors carry the 1-based line number. When beam_powers is present the
    stored label must equal argmax(beam_powers) (ties to the lowest index).
    """
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"invalid JSON: {e.msg}", line=lineno) from e
            if not isinstance(obj, dict) or "seq_id" not in obj or "frames" not in obj:
                raise ParseError("record must have 'seq_id' and 'frames'", line=lineno)
            frames = []
            for fr in obj["frames"]:
                for key in ("t", "bbox", "optimal_beam"):
                    if key not in fr:
                        raise ParseError(f"frame missing '{key}'", line=lineno)
                bbox = fr["bbox"]
                if not isinstance(bbox, list) or len(bbox) != 4:
                    raise ParseError("'bbox' must be a list of 4 floats", line=lineno)
                try:
                    box = BoundingBox(*[float(v) for v in bbox])
                except ValidationError as e:
                    raise ParseError(str(e), line=lineno) from e
                powers = fr.get("beam_powers")
                label = int(fr["optimal_beam"])
                if label < 0:
                    raise ParseError(f"optimal_beam must be >= 0, got {label}", line=lineno)
                if powers is not None:
                    arr = np.asarray(powers, dtype=np.float64)
                    recomputed = int(np.argmax(arr))
                    if recomputed != label:
                        raise ValidationError(
                            f"line {lineno}: optimal_beam={label} but argmax(beam_powers)={recomputed}"
                        )
                    powers = arr
                frames.append(Frame(t=int(fr["t"]), bbox=box, optimal_beam=label, beam_powers=powers))
            try:
                records.append(SequenceRecord(seq_id=int(obj["seq_id"]), frames=frames))
            except ValidationError as e:
                raise ParseError(str(e), line=lineno) from e
    return records
