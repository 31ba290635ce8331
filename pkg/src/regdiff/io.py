"""Reading and writing sample directories, depth maps, images and predictions.

All data artifacts are JSON; floats in prediction files are rounded to six
decimals so that repeated runs produce byte-identical output.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .detect import ScoredBox
from .errors import InputDomainError
from .geometry import CameraModel, CorrespondenceSet, DepthMap

SAMPLE_FILES = ("view1.png", "view2.png", "depth1.pfm", "depth2.pfm", "cameras.json",
                "correspondences.json", "gt_boxes.json", "meta.json")


# ---------------------------------------------------------------------------
# Depth
# ---------------------------------------------------------------------------

def write_pfm(path, values: np.ndarray) -> None:
    """Single-channel little-endian PFM (negative scale), rows stored bottom-up."""
    values = np.asarray(values, dtype="<f4")
    if values.ndim != 2:
        raise InputDomainError("PFM writer takes a 2D array")
    h, w = values.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(np.ascontiguousarray(values[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    # header: magic, dims, scale, each terminated by a single whitespace byte
    m = re.match(rb"(P[fF])\s+(\d+)\s+(\d+)\s+([-+0-9.eE]+)\s", raw)
    if not m:
        raise InputDomainError(f"{path}: not a PFM file")
    magic, w, h, scale = m.group(1), int(m.group(2)), int(m.group(3)), float(m.group(4))
    channels = 3 if magic == b"PF" else 1
    dtype = "<f4" if scale < 0 else ">f4"
    count = w * h * channels
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=m.end()) if len(raw) - m.end() >= 4 * count else None
    if data is None:
        raise InputDomainError(f"{path}: truncated PFM payload")
    data = data.reshape(h, w, channels)[::-1, :, 0]
    return data.astype(np.float64)


def write_depth_png(path, values: np.ndarray, units_per_step: float = 0.001) -> None:
    """16-bit PNG plus a ``.json`` sidecar; 0 marks missing depth."""
    path = Path(path)
    steps = np.round(np.nan_to_num(np.asarray(values, dtype=np.float64), nan=0.0) / units_per_step)
    if steps.max(initial=0) > 65535:
        raise InputDomainError(f"depth exceeds the 16-bit range at {units_per_step} units per step")
    Image.fromarray(np.clip(steps, 0, 65535).astype(np.uint16)).save(path)
    path.with_suffix(".json").write_text(json.dumps({"units_per_step": units_per_step}))


def read_depth_png(path) -> np.ndarray:
    path = Path(path)
    sidecar = path.with_suffix(".json")
    if not sidecar.exists():
        raise InputDomainError(f"16-bit depth PNG {path} needs a sidecar {sidecar.name} with units_per_step")
    scale = float(json.loads(sidecar.read_text())["units_per_step"])
    steps = np.asarray(Image.open(path), dtype=np.float64)
    if steps.ndim != 2:
        raise InputDomainError(f"{path}: depth PNG must be single-channel")
    return steps * scale


def load_depth(path) -> DepthMap:
    """Depth from ``.pfm`` or 16-bit ``.png``; non-positive values count as missing."""
    path = Path(path)
    if not path.exists():
        raise InputDomainError(f"depth file {path} does not exist")
    if path.suffix.lower() == ".pfm":
        values = read_pfm(path)
    elif path.suffix.lower() == ".png":
        values = read_depth_png(path)
    else:
        raise InputDomainError(f"unsupported depth format {path.suffix!r}")
    return DepthMap.with_mask(values)


# ---------------------------------------------------------------------------
# Images
# ---------------------------------------------------------------------------

def to_uint8(rgb: np.ndarray) -> np.ndarray:
    return np.round(np.clip(rgb, 0.0, 1.0) * 255).astype(np.uint8)


def save_image(path, rgb: np.ndarray) -> None:
    arr = rgb if rgb.dtype == np.uint8 else to_uint8(rgb)
    Image.fromarray(arr).save(path)


def load_image(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise InputDomainError(f"image {path} does not exist")
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)


def save_gray(path, values: np.ndarray, vmax: float | None = None) -> None:
    """Grey-scale PNG of a 2D map scaled to ``[0, vmax]``."""
    v = np.asarray(values, dtype=np.float64)
    top = vmax if vmax is not None else float(v.max(initial=0.0))
    scaled = v / top if top > 0 else np.zeros_like(v)
    Image.fromarray(to_uint8(scaled)).save(path)


def draw_overlay(path, rgb: np.ndarray, boxes: list[ScoredBox], color=(255, 40, 40)) -> None:
    img = Image.fromarray(rgb if rgb.dtype == np.uint8 else to_uint8(rgb))
    draw = ImageDraw.Draw(img)
    for b in boxes:
        draw.rectangle([b.x_min, b.y_min, b.x_max - 1, b.y_max - 1], outline=color)
        draw.text((b.x_min + 2, b.y_min + 1), f"{b.score:.2f}", fill=color)
    img.save(path)


# ---------------------------------------------------------------------------
# JSON documents
# ---------------------------------------------------------------------------

def _read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise InputDomainError(f"{path} does not exist")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise InputDomainError(f"{path}: invalid JSON ({e})") from None


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_cameras(path) -> tuple[CameraModel, CameraModel, tuple[int, int]]:
    """``{"image_size": [h, w], "cam1": {...}, "cam2": {...}}``."""
    doc = _read_json(path)
    try:
        size = tuple(int(s) for s in doc["image_size"])
        return CameraModel.from_dict(doc["cam1"]), CameraModel.from_dict(doc["cam2"]), size
    except KeyError as e:
        raise InputDomainError(f"{path}: missing key {e}") from None


def save_cameras(path, cam1: CameraModel, cam2: CameraModel, size) -> None:
    write_json(path, {"image_size": [int(size[0]), int(size[1])], "cam1": cam1.to_dict(), "cam2": cam2.to_dict()})


def load_correspondences(path) -> CorrespondenceSet:
    doc = _read_json(path)
    if "pairs" not in doc:
        raise InputDomainError(f"{path}: expected an object with a 'pairs' list")
    return CorrespondenceSet.from_pairs(doc["pairs"])


def save_correspondences(path, corr: CorrespondenceSet) -> None:
    write_json(path, {"pairs": corr.to_pairs()})


def _boxes_from_doc(doc: dict, path) -> tuple[list, list]:
    out = []
    for key in ("image1", "image2"):
        if key not in doc:
            raise InputDomainError(f"{path}: missing {key!r}")
        out.append(doc[key])
    return out[0], out[1]


def load_gt_boxes(path) -> tuple[list[tuple], list[tuple]]:
    b1, b2 = _boxes_from_doc(_read_json(path), path)
    return [tuple(b["bbox"]) for b in b1], [tuple(b["bbox"]) for b in b2]


def predictions_doc(boxes1: list[ScoredBox], boxes2: list[ScoredBox]) -> dict:
    return {"image1": [b.to_dict() for b in boxes1], "image2": [b.to_dict() for b in boxes2]}


def save_predictions(path, boxes1: list[ScoredBox], boxes2: list[ScoredBox]) -> None:
    write_json(path, predictions_doc(boxes1, boxes2))


def load_predictions(path) -> tuple[list, list]:
    p1, p2 = _boxes_from_doc(_read_json(path), path)
    conv = lambda lst: [(tuple(p["bbox"]), float(p["score"])) for p in lst]  # noqa: E731
    return conv(p1), conv(p2)


# ---------------------------------------------------------------------------
# Sample directories
# ---------------------------------------------------------------------------

@dataclass
class PairInputs:
    rgb1: np.ndarray
    rgb2: np.ndarray
    depth1: DepthMap | None = None
    depth2: DepthMap | None = None
    cam1: CameraModel | None = None
    cam2: CameraModel | None = None
    correspondences: CorrespondenceSet | None = None
    name: str = "pair"


def write_sample(sample, root) -> Path:
    """Write a generated pair to ``root/sample_<seed>/``."""
    d = Path(root) / f"sample_{sample.seed}"
    d.mkdir(parents=True, exist_ok=True)
    save_image(d / "view1.png", sample.rgb1)
    save_image(d / "view2.png", sample.rgb2)
    write_pfm(d / "depth1.pfm", sample.depth1.values)
    write_pfm(d / "depth2.pfm", sample.depth2.values)
    save_cameras(d / "cameras.json", sample.cam1, sample.cam2, sample.size)
    save_correspondences(d / "correspondences.json", sample.gt_correspondences)
    gt = {key: [{"bbox": [round(float(v), 6) for v in b.bbox], "visibility": round(b.visibility, 6),
                 "object": b.object_index} for b in boxes]
          for key, boxes in (("image1", sample.gt_boxes_1), ("image2", sample.gt_boxes_2))}
    write_json(d / "gt_boxes.json", gt)
    write_json(d / "meta.json", {"seed": sample.seed, "config_digest": sample.config.digest(),
                                 "config": asdict(sample.config), "removed": list(sample.removed)})
    return d


def is_sample_dir(path) -> bool:
    return (Path(path) / "view1.png").exists() and (Path(path) / "view2.png").exists()


def sample_dirs(path) -> list[Path]:
    """``path`` itself if it is a sample directory, else its sample subdirectories in name order."""
    path = Path(path)
    if not path.is_dir():
        raise InputDomainError(f"{path} is not a directory")
    if is_sample_dir(path):
        return [path]
    found = sorted(p for p in path.iterdir() if p.is_dir() and is_sample_dir(p))
    if not found:
        raise InputDomainError(f"{path} holds no sample directories")
    return found


def load_pair(path, need_depth: bool = True, need_cameras: bool = False, need_correspondences: bool = False) -> PairInputs:
    d = Path(path)
    pair = PairInputs(load_image(d / "view1.png"), load_image(d / "view2.png"), name=d.name)
    if need_depth:
        pair.depth1, pair.depth2 = load_depth(d / "depth1.pfm"), load_depth(d / "depth2.pfm")
    if need_cameras:
        pair.cam1, pair.cam2, _ = load_cameras(d / "cameras.json")
    if need_correspondences:
        pair.correspondences = load_correspondences(d / "correspondences.json")
    return pair
