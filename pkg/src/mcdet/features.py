"""Per-symbol features from occupancy traces, plus train-statistics z-scoring.

The feature for symbol k is the bound-receptor count sampled at the end of its
interval, u_k = r(k * t_b).  Normalization is always parameterized by
explicitly passed statistics so that test data can only ever be scaled with
training-set numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .channel import MalformedTraceError, Trace

__all__ = [
    "DegenerateFeaturesError",
    "FeatureSeq",
    "extract_features",
    "fit_zscore",
    "apply_zscore",
    "save_features",
    "load_features",
]


class DegenerateFeaturesError(ValueError):
    """Zero-variance training features: the upstream simulation is broken."""


@dataclass(frozen=True)
class FeatureSeq:
    """A per-symbol feature vector with optional labels and scaling metadata."""

    u: np.ndarray
    labels: np.ndarray | None = None
    normalized: bool = False
    norm_mean: float = 0.0
    norm_std: float = 1.0

    def __post_init__(self):
        self.u.setflags(write=False)
        if self.labels is not None:
            if len(self.labels) != len(self.u):
                raise ValueError(
                    f"{len(self.u)} features but {len(self.labels)} labels"
                )
            self.labels.setflags(write=False)

    def __len__(self) -> int:
        return len(self.u)

    def slice(self, start: int, stop: int) -> "FeatureSeq":
        labels = None if self.labels is None else self.labels[start:stop].copy()
        return replace(self, u=self.u[start:stop].copy(), labels=labels)


def extract_features(trace: Trace) -> FeatureSeq:
    """End-of-interval occupancy per symbol: u_k = counts[k * spb - 1]."""
    trace.validate()
    spb = trace.samples_per_symbol
    if len(trace.counts) % spb != 0:
        raise MalformedTraceError(
            f"{len(trace.counts)} samples is not a multiple of {spb} per symbol"
        )
    idx = np.arange(1, len(trace.bits) + 1) * spb - 1
    return FeatureSeq(
        u=trace.counts[idx].astype(float),
        labels=np.asarray(trace.bits, dtype=np.int8).copy(),
    )


def fit_zscore(train: FeatureSeq) -> tuple[float, float]:
    """Sample mean and population (1/N) standard deviation of training features."""
    if len(train) == 0:
        raise ValueError("cannot fit normalization to an empty feature sequence")
    mean = float(np.mean(train.u))
    std = float(np.std(train.u))
    if std == 0.0:
        raise DegenerateFeaturesError(
            "training features have zero variance; refusing to normalize"
        )
    return mean, std


def apply_zscore(seq: FeatureSeq, mean: float, std: float) -> FeatureSeq:
    """Affine rescale u' = (u - mean) / std, recording the statistics used."""
    if not std > 0:
        raise ValueError(f"std must be positive, got {std}")
    return replace(
        seq,
        u=(seq.u - mean) / std,
        normalized=True,
        norm_mean=mean,
        norm_std=std,
    )


def save_features(seq: FeatureSeq, path: str | Path) -> Path:
    """CSV with header `k,u,label`; label column empty when labels are absent."""
    path = Path(path)
    lines = ["k,u,label"]
    for k in range(len(seq)):
        label = "" if seq.labels is None else str(int(seq.labels[k]))
        lines.append(f"{k + 1},{seq.u[k]:.17g},{label}")
    path.write_text("\n".join(lines) + "\n")
    return path


def load_features(path: str | Path) -> FeatureSeq:
    rows = Path(path).read_text().strip().split("\n")
    if rows[0] != "k,u,label":
        raise ValueError(f"unexpected feature header {rows[0]!r}")
    u = []
    labels: list[int] | None = []
    for row in rows[1:]:
        _, val, lab = row.split(",")
        u.append(float(val))
        if lab == "":
            labels = None
        elif labels is not None:
            labels.append(int(lab))
    return FeatureSeq(
        u=np.array(u),
        labels=None if labels is None else np.array(labels, dtype=np.int8),
    )
