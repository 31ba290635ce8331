"""Deterministic multi-scale features used in place of a learned backbone."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InputDomainError
from .featgrid import FeatureGrid

N_ORIENTATIONS = 4


@dataclass(frozen=True)
class FeatureConfig:
    levels: int = 3
    gaussian_sigmas: tuple[float, ...] = (1.0, 2.0)
    include_color: bool = True
    include_gradients: bool = False
    resmooth_sigma: float = 0.5
    joint_standardization: bool = True

    def __post_init__(self):
        if self.levels < 1:
            raise InputDomainError("levels must be >= 1")
        if not (self.include_color or self.include_gradients):
            raise InputDomainError("enable at least one channel family")
        if not self.gaussian_sigmas or min(self.gaussian_sigmas) <= 0:
            raise InputDomainError("gaussian_sigmas must be a non-empty list of positive scales")
        object.__setattr__(self, "gaussian_sigmas", tuple(float(s) for s in self.gaussian_sigmas))

    @property
    def channels(self) -> int:
        per_sigma = 3 * self.include_color + N_ORIENTATIONS * self.include_gradients
        return per_sigma * len(self.gaussian_sigmas)

    @property
    def min_size(self) -> int:
        return 2 ** (self.levels - 1) * 8


@dataclass(frozen=True)
class FeaturePyramid:
    levels: tuple[FeatureGrid, ...]

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, i: int) -> FeatureGrid:
        return self.levels[i]


def as_float_image(image) -> np.ndarray:
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InputDomainError(f"expected an H x W x 3 RGB image, got shape {img.shape}")
    if img.dtype == np.uint8:
        return img.astype(np.float64) / 255.0
    return img.astype(np.float64)


def orientation_channels(gray: np.ndarray, sigma: float) -> np.ndarray:
    """Gradient magnitude softly split over 4 unsigned orientation bins."""
    gy = ndimage.gaussian_filter(gray, sigma, order=(1, 0), mode="nearest")
    gx = ndimage.gaussian_filter(gray, sigma, order=(0, 1), mode="nearest")
    mag = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), math.pi)
    pos = theta / (math.pi / N_ORIENTATIONS)
    lo = np.floor(pos).astype(int) % N_ORIENTATIONS
    frac = pos - np.floor(pos)
    hi = (lo + 1) % N_ORIENTATIONS
    out = np.zeros((N_ORIENTATIONS,) + gray.shape)
    for b in range(N_ORIENTATIONS):
        out[b] = np.where(lo == b, mag * (1 - frac), 0.0) + np.where(hi == b, mag * frac, 0.0)
    return out


def raw_channels(img: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    """Level-0 responses before standardisation, (channels, H, W)."""
    chans = []
    gray = img.mean(axis=2)
    for s in cfg.gaussian_sigmas:
        if cfg.include_color:
            for k in range(3):
                chans.append(ndimage.gaussian_filter(img[:, :, k], s, mode="nearest"))
        if cfg.include_gradients:
            chans.extend(orientation_channels(gray, s))
    return np.stack(chans)


def _interior(chans: np.ndarray, border: int) -> np.ndarray:
    h, w = chans.shape[1:]
    b = min(border, (h - 1) // 2, (w - 1) // 2)
    return chans[:, b:h - b, b:w - b].reshape(len(chans), -1)


def channel_statistics(raws, border: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and std over the interiors of one or more raw channel stacks."""
    inner = np.concatenate([_interior(r, border) for r in raws], axis=1)
    return inner.mean(axis=1), inner.std(axis=1)


def standardize(chans: np.ndarray, border: int, stats=None) -> np.ndarray:
    """Zero-mean, unit-variance channels using statistics from the interior only.

    ``stats`` overrides the statistics, e.g. with ones shared by an image pair.
    """
    mean, std = channel_statistics([chans], border) if stats is None else stats
    out = chans - mean[:, None, None]
    ok = std > 1e-12
    out[ok] /= std[ok, None, None]
    out[~ok] = 0.0
    return out


def area_downsample(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    return x[:, :2 * h2, :2 * w2].reshape(c, h2, 2, w2, 2).mean(axis=(2, 4))


def _border(cfg: FeatureConfig) -> int:
    return int(math.ceil(max(cfg.gaussian_sigmas)))


def _checked_raw(image, cfg: FeatureConfig) -> np.ndarray:
    img = as_float_image(image)
    h, w = img.shape[:2]
    if min(h, w) < cfg.min_size:
        raise InputDomainError(f"image {h}x{w} is smaller than {cfg.min_size} for {cfg.levels} levels")
    return raw_channels(img, cfg)


def extract_pyramid(image, cfg: FeatureConfig = FeatureConfig(), stats=None) -> FeaturePyramid:
    """Feature pyramid whose level ``l`` has resolution ``(H / 2**l, W / 2**l)``.

    Channels are standardised with the image's own statistics unless
    ``stats = (mean, std)`` is given.
    """
    return _build(_checked_raw(image, cfg), cfg, stats)


def extract_pair(image1, image2, cfg: FeatureConfig = FeatureConfig()) -> tuple[FeaturePyramid, FeaturePyramid]:
    """Pyramids for both views.

    With ``joint_standardization`` the two views share channel statistics,
    so a surface seen in both maps to the same feature values even when
    the views show different amounts of other content.
    """
    r1, r2 = _checked_raw(image1, cfg), _checked_raw(image2, cfg)
    if r1.shape != r2.shape:
        raise InputDomainError(f"images differ in size: {r1.shape[1:]} vs {r2.shape[1:]}")
    if not cfg.joint_standardization:
        return _build(r1, cfg, None), _build(r2, cfg, None)
    stats = channel_statistics([r1, r2], _border(cfg))
    return _build(r1, cfg, stats), _build(r2, cfg, stats)


def _build(raw: np.ndarray, cfg: FeatureConfig, stats) -> FeaturePyramid:
    level = standardize(raw, _border(cfg), stats)
    levels = [FeatureGrid(level)]
    for _ in range(1, cfg.levels):
        level = area_downsample(level)
        if cfg.resmooth_sigma > 0:
            level = ndimage.gaussian_filter(level, (0, cfg.resmooth_sigma, cfg.resmooth_sigma), mode="nearest")
        levels.append(FeatureGrid(level))
    return FeaturePyramid(tuple(levels))
