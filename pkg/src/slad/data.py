"""Seedable toy datasets with integer class labels.

Every sampler is a pure function of ``(seed, index)``: batch ``i`` of a
sampler built with seed ``s`` is always the same array.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass
class LabeledBatch:
    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.points.ndim != 2 or self.labels.shape != (self.points.shape[0],):
            raise ValueError("points must be [batch, dim] with one label per row")

    def __len__(self):
        return self.points.shape[0]


@dataclass
class DatasetSpec:
    """Descriptor of a toy dataset; stored with configs and checkpoints."""

    kind: str = "gaussian_mixture"
    n_modes: int = 8
    radius: float = 4.0
    scale: float = 0.3
    dim: int = 2
    normalize: bool = True
    shift: list[float] | None = None
    # Filled from the raw generator when ``normalize`` is set.
    norm_center: list[float] | None = field(default=None)
    norm_scale: float | None = field(default=None)

    def to_dict(self) -> dict:
        return asdict(self)


KINDS = ("gaussian_mixture", "swiss_roll", "checkerboard")


class Sampler:
    """Draws labeled batches; ``batch(index, size)`` is deterministic."""

    def __init__(self, spec: DatasetSpec, seed: int):
        if spec.kind not in KINDS:
            raise ValueError(f"unknown dataset kind {spec.kind!r}; expected one of {KINDS}")
        if not (1 <= spec.dim <= 16):
            raise ValueError(f"dim must be in [1, 16], got {spec.dim}")
        if spec.kind != "gaussian_mixture" and spec.dim != 2:
            raise ValueError(f"{spec.kind} is only defined for dim=2")
        self.spec = spec
        self.seed = int(seed)
        if spec.normalize and spec.norm_scale is None:
            center, scale = _normalizer(spec)
            spec.norm_center = center.tolist()
            spec.norm_scale = float(scale)

    @property
    def n_labels(self) -> int:
        return n_labels(self.spec)

    def raw(self, rng: np.random.Generator, size: int) -> LabeledBatch:
        return _GENERATORS[self.spec.kind](self.spec, rng, size)

    def batch(self, index: int, size: int) -> LabeledBatch:
        rng = np.random.default_rng([self.seed, int(index)])
        b = self.raw(rng, size)
        return LabeledBatch(self.normalize(b.points), b.labels)

    def normalize(self, points: np.ndarray) -> np.ndarray:
        s = self.spec
        if not s.normalize:
            return points
        return (points - np.asarray(s.norm_center)) / s.norm_scale

    def mode_centers(self) -> np.ndarray:
        """Mixture component means in normalized coordinates."""
        if self.spec.kind != "gaussian_mixture":
            raise ValueError("mode centers are only defined for gaussian_mixture")
        return self.normalize(_centers(self.spec))

    def mode_scale(self) -> float:
        s = self.spec
        return s.scale / s.norm_scale if s.normalize else s.scale


def n_labels(spec: DatasetSpec) -> int:
    if spec.kind == "gaussian_mixture":
        return spec.n_modes
    if spec.kind == "checkerboard":
        return 8
    return 4


def _normalizer(spec: DatasetSpec) -> tuple[np.ndarray, float]:
    # Fixed stream independent of the run seed, so the constants are a
    # property of the descriptor alone.
    rng = np.random.default_rng(0x5EED)
    pts = _GENERATORS[spec.kind](spec, rng, 100_000).points
    std = float(pts.std())
    if std == 0.0:
        raise ValueError("cannot normalize a dataset with zero spread; set normalize=False")
    return pts.mean(axis=0), std


def _centers(spec: DatasetSpec) -> np.ndarray:
    n, d = spec.n_modes, spec.dim
    ang = 2.0 * np.pi * np.arange(n) / n
    centers = np.zeros((n, d))
    if d == 1:
        centers[:, 0] = spec.radius * np.cos(ang)
    else:
        centers[:, 0] = spec.radius * np.cos(ang)
        centers[:, 1] = spec.radius * np.sin(ang)
    if spec.shift is not None:
        centers = centers + np.asarray(spec.shift, dtype=np.float64)
    return centers


def gaussian_mixture(spec: DatasetSpec, rng: np.random.Generator, size: int) -> LabeledBatch:
    """Isotropic Gaussians placed uniformly on a circle, label = mode index."""
    if spec.n_modes < 1 or spec.scale < 0:
        raise ValueError("gaussian_mixture needs n_modes >= 1 and scale >= 0")
    centers = _centers(spec)
    labels = rng.integers(0, spec.n_modes, size=size)
    pts = centers[labels] + spec.scale * rng.standard_normal((size, spec.dim))
    return LabeledBatch(pts, labels)


def swiss_roll(spec: DatasetSpec, rng: np.random.Generator, size: int) -> LabeledBatch:
    """2-D swiss roll; the label is the quarter of the arc a point lies on."""
    u = rng.uniform(0.0, 1.0, size=size)
    theta = 1.5 * np.pi * (1.0 + 2.0 * u)
    pts = np.stack([theta * np.cos(theta), theta * np.sin(theta)], axis=1) / 3.0
    pts = pts + spec.scale * rng.standard_normal((size, 2))
    labels = np.minimum((u * 4).astype(np.int64), 3)
    return LabeledBatch(pts, labels)


def checkerboard(spec: DatasetSpec, rng: np.random.Generator, size: int) -> LabeledBatch:
    """Uniform points on the 8 dark cells of a 4x4 board; label = cell index."""
    cells = np.array([(i, j) for i in range(4) for j in range(4) if (i + j) % 2 == 0], dtype=float)
    labels = rng.integers(0, len(cells), size=size)
    pts = cells[labels] + rng.uniform(0.0, 1.0, size=(size, 2)) - 2.0
    return LabeledBatch(pts * spec.radius / 2.0, labels)


_GENERATORS = {
    "gaussian_mixture": gaussian_mixture,
    "swiss_roll": swiss_roll,
    "checkerboard": checkerboard,
}


def export_csv(batch: LabeledBatch, path) -> None:
    from .report import write_csv

    dims = batch.points.shape[1]
    header = [f"x{i}" for i in range(dims)] + ["label"]
    rows = [list(p) + [int(c)] for p, c in zip(batch.points, batch.labels)]
    write_csv(path, header, rows)
