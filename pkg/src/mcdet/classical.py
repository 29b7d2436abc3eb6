"""Classical detector baselines: fixed threshold, adaptive EMA, Viterbi MAP.

All three operate on raw (unnormalized) per-symbol occupancy features.  The
fixed detector compares each feature to a single threshold tuned for minimum
training error.  The adaptive detector offsets that threshold by an
exponential moving average of past observations:

    I_k = beta * I_{k-1} + (1 - beta) * u_{k-1},   decide 1 iff u_k > eta + I_k

with u_0 taken as 0 (there is no pre-transmission observation).

The sequence detector is a mismatched maximum-likelihood decoder: it assumes
a static linear channel u_k = sum_j h_j b_{k-j} + N(0, noise_var) with taps
estimated once from training data, and finds the best bit sequence with the
Viterbi algorithm over 2^(L-1) states.  On a mobile channel the static-tap
assumption is wrong by construction; quantifying that degradation is the
point of carrying this baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import FeatureSeq

__all__ = [
    "SingleClassError",
    "RankDeficientError",
    "MemoryTooLargeError",
    "FixedThresholdModel",
    "EmaModel",
    "CirEstimate",
    "fit_fixed",
    "detect_fixed",
    "fit_ema",
    "detect_ema",
    "ema_offsets",
    "estimate_cir",
    "detect_viterbi",
    "save_cir",
    "load_cir",
]

_MAX_MEMORY = 12


class SingleClassError(ValueError):
    pass


class RankDeficientError(ValueError):
    pass


class MemoryTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class FixedThresholdModel:
    threshold: float


@dataclass(frozen=True)
class EmaModel:
    threshold: float
    beta: float
    i_init: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")


@dataclass(frozen=True)
class CirEstimate:
    """Static per-symbol channel taps plus a residual noise variance."""

    taps: np.ndarray
    noise_var: float

    def __post_init__(self):
        self.taps.setflags(write=False)
        if self.memory < 1:
            raise ValueError("need at least one tap")
        if self.noise_var < 0:
            raise ValueError(f"noise_var must be >= 0, got {self.noise_var}")

    @property
    def memory(self) -> int:
        return len(self.taps)


def _features_and_labels(seq: FeatureSeq) -> tuple[np.ndarray, np.ndarray]:
    if seq.labels is None:
        raise ValueError("labeled features are required for fitting")
    return np.asarray(seq.u, dtype=float), np.asarray(seq.labels, dtype=np.int8)


def _ber_over_thresholds(u, labels, thresholds) -> np.ndarray:
    """Error count of the rule (u > eta) for every candidate eta."""
    order = np.argsort(u, kind="stable")
    su, sl = u[order], labels[order]
    ones_below = np.concatenate([[0], np.cumsum(sl == 1)])
    zeros_below = np.concatenate([[0], np.cumsum(sl == 0)])
    n_zero = int(np.sum(sl == 0))
    pos = np.searchsorted(su, thresholds, side="right")
    return ones_below[pos] + (n_zero - zeros_below[pos])


def fit_fixed(train: FeatureSeq) -> FixedThresholdModel:
    """Single threshold minimizing training error, ignoring channel memory.

    Candidates are midpoints of consecutive sorted unique features; ties go
    to the smallest threshold.
    """
    u, labels = _features_and_labels(train)
    if np.all(labels == labels[0]):
        raise SingleClassError("threshold fitting needs both classes present")
    uniq = np.unique(u)
    if len(uniq) == 1:
        return FixedThresholdModel(threshold=float(uniq[0]))
    candidates = (uniq[:-1] + uniq[1:]) / 2.0
    errors = _ber_over_thresholds(u, labels, candidates)
    return FixedThresholdModel(threshold=float(candidates[int(np.argmin(errors))]))


def detect_fixed(model: FixedThresholdModel, seq: FeatureSeq) -> np.ndarray:
    return (np.asarray(seq.u) > model.threshold).astype(np.int8)


def ema_offsets(model: EmaModel, u: np.ndarray) -> np.ndarray:
    """The running threshold offset I_k for every symbol, I_1 from i_init."""
    u = np.asarray(u, dtype=float)
    offsets = np.empty(len(u))
    prev_i = model.i_init
    prev_u = 0.0
    for k in range(len(u)):
        prev_i = model.beta * prev_i + (1.0 - model.beta) * prev_u
        offsets[k] = prev_i
        prev_u = u[k]
    return offsets


def detect_ema(model: EmaModel, seq: FeatureSeq) -> np.ndarray:
    """Adaptive decision: 1 iff u_k exceeds eta plus the EMA of past inputs."""
    u = np.asarray(seq.u, dtype=float)
    return (u > model.threshold + ema_offsets(model, u)).astype(np.int8)


def fit_ema(
    train: FeatureSeq,
    beta_grid: np.ndarray | None = None,
    eta_grid: np.ndarray | None = None,
) -> EmaModel:
    """Exhaustive (beta, eta) grid search for minimum training error.

    Defaults: beta over {0.1, ..., 0.9} in steps of 0.1, eta over 50 uniform
    points spanning the training feature range.  Ties prefer the smaller
    beta, then the smaller eta.
    """
    u, labels = _features_and_labels(train)
    if np.all(labels == labels[0]):
        raise SingleClassError("EMA fitting needs both classes present")
    if beta_grid is None:
        beta_grid = np.round(np.arange(0.1, 0.95, 0.1), 10)
    if eta_grid is None:
        lo, hi = float(np.min(u)), float(np.max(u))
        eta_grid = np.linspace(lo, hi, 50)
    beta_grid = np.asarray(beta_grid, dtype=float)
    eta_grid = np.asarray(eta_grid, dtype=float)
    if beta_grid.size == 0 or eta_grid.size == 0:
        raise ValueError("beta and eta grids must be non-empty")
    best = None
    for beta in beta_grid:
        offs = ema_offsets(EmaModel(threshold=0.0, beta=float(beta)), u)
        margin = u - offs
        pred = margin[:, None] > eta_grid[None, :]
        errors = np.sum(pred != (labels[:, None] == 1), axis=0)
        j = int(np.argmin(errors))
        if best is None or errors[j] < best[0]:
            best = (int(errors[j]), float(beta), float(eta_grid[j]))
    return EmaModel(threshold=best[2], beta=best[1])


def estimate_cir(train: FeatureSeq, memory: int) -> CirEstimate:
    """Least-squares tap fit of u_k ~ sum_j h_j b_{k-j} with zero pre-history.

    noise_var is the residual variance (sum of squared residuals over the
    residual degrees of freedom).
    """
    u, labels = _features_and_labels(train)
    if memory < 1:
        raise ValueError(f"memory must be >= 1, got {memory}")
    n = len(u)
    design = np.zeros((n, memory))
    b = labels.astype(float)
    for j in range(memory):
        design[j:, j] = b[: n - j]
    rank = np.linalg.matrix_rank(design)
    if rank < memory:
        raise RankDeficientError(
            f"bit pattern identifies only {rank} of {memory} taps"
        )
    taps, _, _, _ = np.linalg.lstsq(design, u, rcond=None)
    residuals = u - design @ taps
    dof = max(n - memory, 1)
    noise_var = float(residuals @ residuals) / dof
    return CirEstimate(taps=taps, noise_var=noise_var)


def detect_viterbi(seq: FeatureSeq, cir: CirEstimate) -> np.ndarray:
    """Maximum-likelihood bit sequence under the static-channel model.

    Trellis over 2^(L-1) states (the last L-1 bits), branch metric equal to
    the squared residual over the noise variance, equal priors, all-zero
    pre-history.  Exact metric ties are resolved toward the lexicographically
    smaller bit sequence.
    """
    u = np.asarray(seq.u, dtype=float)
    L = cir.memory
    if L > _MAX_MEMORY:
        raise MemoryTooLargeError(
            f"memory {L} exceeds the supported maximum {_MAX_MEMORY}"
        )
    if not cir.noise_var > 0:
        raise ValueError(f"noise_var must be positive, got {cir.noise_var}")
    n = len(u)
    if n == 0:
        return np.empty(0, dtype=np.int8)
    h = cir.taps
    if L == 1:
        # Memoryless maximum likelihood: nearest of {0, h_0} to each sample.
        d0 = u**2
        d1 = (u - h[0]) ** 2
        bits = np.where(d1 < d0, 1, 0)
        return bits.astype(np.int8)

    n_states = 1 << (L - 1)
    mask = n_states - 1
    state_ids = np.arange(n_states)
    # Predicted observation for arriving at state s' (whose bit 0 is the new
    # bit) from predecessor carrying oldest-bit o: pred_obs[o, s'].
    prev0 = state_ids >> 1
    prev1 = (state_ids >> 1) | (1 << (L - 2))
    tap_hist = np.zeros(n_states)
    for j in range(1, L):
        tap_hist += h[j] * ((state_ids >> (j - 1)) & 1)
    new_bit = state_ids & 1

    def pred_obs_for(prev_states: np.ndarray) -> np.ndarray:
        hist = np.zeros(n_states)
        for j in range(1, L):
            hist += h[j] * ((prev_states >> (j - 1)) & 1)
        return h[0] * new_bit + hist

    obs0 = pred_obs_for(prev0)
    obs1 = pred_obs_for(prev1)

    metric = np.full(n_states, np.inf)
    metric[0] = 0.0  # all-zero pre-history
    traceback = np.empty((n, n_states), dtype=np.int8)
    inv_var = 1.0 / cir.noise_var

    def _path_to_state(upto: int, s: int) -> np.ndarray:
        bits = np.empty(upto + 1, dtype=np.int8)
        cur = s
        for k in range(upto, -1, -1):
            bits[k] = cur & 1
            o = traceback[k, cur]
            cur = (cur >> 1) | (o << (L - 2))
        return bits

    for k in range(n):
        cand0 = metric[prev0] + (u[k] - obs0) ** 2 * inv_var
        cand1 = metric[prev1] + (u[k] - obs1) ** 2 * inv_var
        choose1 = cand1 < cand0
        ties = cand1 == cand0
        if ties.any():
            for s in np.nonzero(ties & np.isfinite(cand0))[0]:
                if k == 0:
                    continue  # prefix via o=0 is lexicographically smaller
                p0 = _path_to_state(k - 1, int(prev0[s]))
                p1 = _path_to_state(k - 1, int(prev1[s]))
                cmp = np.nonzero(p0 != p1)[0]
                if cmp.size and p1[cmp[0]] < p0[cmp[0]]:
                    choose1[s] = True
        metric = np.where(choose1, cand1, cand0)
        traceback[k] = choose1
    finals = np.nonzero(metric == metric.min())[0]
    best_state = int(finals[0])
    if len(finals) > 1:
        paths = [_path_to_state(n - 1, int(s)) for s in finals]
        best_state = int(finals[min(range(len(finals)), key=lambda i: tuple(paths[i]))])
    return _path_to_state(n - 1, best_state)


def save_cir(cir: CirEstimate, path: str | Path) -> Path:
    path = Path(path)
    lines = ["j,h_j"]
    for j, h in enumerate(cir.taps):
        lines.append(f"{j},{float(h)!r}")
    lines.append(f"noise_var,{float(cir.noise_var)!r}")
    path.write_text("\n".join(lines) + "\n")
    return path


def load_cir(path: str | Path) -> CirEstimate:
    rows = Path(path).read_text().strip().split("\n")
    if rows[0] != "j,h_j":
        raise ValueError(f"unexpected cir header {rows[0]!r}")
    taps = []
    noise_var = None
    for row in rows[1:]:
        key, val = row.split(",")
        if key == "noise_var":
            noise_var = float(val)
        else:
            taps.append(float(val))
    if noise_var is None:
        raise ValueError("cir file is missing its noise_var line")
    return CirEstimate(taps=np.array(taps), noise_var=noise_var)
