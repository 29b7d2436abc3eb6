"""Leaky-integrator echo state network with a ridge-regression readout.

The reservoir is a fixed random recurrent network: input weights drawn
uniformly from [-s_in, s_in], recurrent weights drawn uniformly from [-1, 1]
and rescaled so the spectral radius hits its configured target below one
(which gives the fading-memory / echo-state property).  Only the linear
readout (n_reservoir weights plus a bias) is trained, in closed form.

Two decision rules share the same scores: a fixed 0.5 threshold, and a
validation-optimized threshold chosen to minimize empirical bit error rate
over the ROC operating points.

State update, for input u_k and leak rate alpha:

    x_k = (1 - alpha) * x_{k-1} + alpha * tanh(W_res x_{k-1} + w_in u_k)
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "NumericalFailureError",
    "SingleClassError",
    "ReservoirConfig",
    "Reservoir",
    "TrainedReadout",
    "init_reservoir",
    "spectral_radius",
    "power_iteration_radius",
    "update_state",
    "collect_states",
    "train_readout",
    "predict_scores",
    "decide_standard",
    "decide_with_threshold",
    "optimize_threshold",
    "ReservoirStepper",
    "save_model",
    "load_model",
]


class NumericalFailureError(RuntimeError):
    pass


class SingleClassError(ValueError):
    """An operation needed examples of both classes but got only one."""


@dataclass(frozen=True)
class ReservoirConfig:
    n_reservoir: int = 400
    spectral_radius: float = 0.7
    leak_rate: float = 0.3
    input_scaling: float = 1.0
    washout: int = 300
    ridge_lambda: float = 1e-6
    density: float = 1.0
    rng_seed: int = 0

    def validate(self) -> None:
        if self.n_reservoir < 1:
            raise ValueError(f"n_reservoir must be >= 1, got {self.n_reservoir}")
        if not 0.0 < self.spectral_radius < 1.0:
            raise ValueError(f"spectral_radius must be in (0, 1), got {self.spectral_radius}")
        if not 0.0 < self.leak_rate <= 1.0:
            raise ValueError(f"leak_rate must be in (0, 1], got {self.leak_rate}")
        if self.washout < 0:
            raise ValueError(f"washout must be >= 0, got {self.washout}")
        if self.ridge_lambda < 0:
            raise ValueError(f"ridge_lambda must be >= 0, got {self.ridge_lambda}")
        if not 0.0 < self.density <= 1.0:
            raise ValueError(f"density must be in (0, 1], got {self.density}")


@dataclass(frozen=True)
class Reservoir:
    """Fixed input and recurrent weights; immutable after construction."""

    w_in: np.ndarray
    w_res: np.ndarray
    config: ReservoirConfig
    achieved_radius: float

    def __post_init__(self):
        self.w_in.setflags(write=False)
        self.w_res.setflags(write=False)

    @property
    def n_reservoir(self) -> int:
        return self.w_res.shape[0]


@dataclass(frozen=True)
class TrainedReadout:
    """Linear readout: the only trained parameters (weights + bias)."""

    weights: np.ndarray
    bias: float
    threshold: float = 0.5
    norm_mean: float = 0.0
    norm_std: float = 1.0
    ridge_lambda: float = 0.0

    def __post_init__(self):
        self.weights.setflags(write=False)

    @property
    def param_count(self) -> int:
        return len(self.weights) + 1


def power_iteration_radius(
    m: np.ndarray, max_iter: int = 1000, tol: float = 1e-6
) -> float:
    """Largest |eigenvalue| via power iteration with a deterministic start.

    The per-step norm ratio oscillates when the dominant eigenvalues are a
    complex pair (generic for random reservoirs), so the estimate is the
    geometric-mean growth rate of ``m^k v`` after a burn-in, which converges
    in modulus for rotating dominant pairs.  The same pass is run on
    ``m @ m`` (square root of its growth) as a cross-check, and the larger
    estimate is returned; if neither stabilizes to ``tol`` a warning
    reports the best estimate.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise ValueError(f"need a non-empty square matrix, got shape {m.shape}")

    def _growth(a: np.ndarray) -> tuple[float, bool]:
        n = a.shape[0]
        v = np.ones(n) / math.sqrt(n)
        burn = max(10, max_iter // 10)
        log_sum = 0.0
        est_prev = None
        est = 0.0
        for k in range(1, max_iter + 1):
            w = a @ v
            norm = float(np.linalg.norm(w))
            if norm == 0.0:
                return 0.0, True
            v = w / norm
            if k <= burn:
                continue
            log_sum += math.log(norm)
            est = math.exp(log_sum / (k - burn))
            if est_prev is not None and abs(est - est_prev) <= tol * est:
                return est, True
            est_prev = est
        return est, False

    est1, ok1 = _growth(m)
    est2sq, ok2 = _growth(m @ m)
    est = max(est1, math.sqrt(max(est2sq, 0.0)))
    if not (ok1 or ok2):
        warnings.warn(
            f"power iteration did not converge in {max_iter} iterations; "
            f"best spectral-radius estimate {est:.6g}",
            RuntimeWarning,
        )
    return est


_DENSE_EIG_LIMIT = 1024


def spectral_radius(m: np.ndarray) -> float:
    """Largest absolute eigenvalue of a square matrix.

    Uses the dense eigensolver up to {limit}x{limit} (exact, and cheap at
    reservoir sizes); falls back to power iteration beyond that.
    """.format(limit=_DENSE_EIG_LIMIT)
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise ValueError(f"need a non-empty square matrix, got shape {m.shape}")
    if m.shape[0] <= _DENSE_EIG_LIMIT:
        return float(np.max(np.abs(np.linalg.eigvals(m))))
    return power_iteration_radius(m)


def init_reservoir(cfg: ReservoirConfig) -> Reservoir:
    """Draw and scale the fixed weights; deterministic in the seed."""
    cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence(cfg.rng_seed))
    n = cfg.n_reservoir
    w_in = rng.uniform(-cfg.input_scaling, cfg.input_scaling, size=n)
    w_res = rng.uniform(-1.0, 1.0, size=(n, n))
    if cfg.density < 1.0:
        mask = rng.random((n, n)) < cfg.density
        w_res = np.where(mask, w_res, 0.0)
    measured = spectral_radius(w_res)
    if measured < 1e-12:
        raise NumericalFailureError(
            f"degenerate random reservoir: measured spectral radius {measured}"
        )
    w_res = np.ascontiguousarray(w_res * (cfg.spectral_radius / measured))
    return Reservoir(
        w_in=w_in,
        w_res=w_res,
        config=cfg,
        achieved_radius=spectral_radius(w_res),
    )


def update_state(res: Reservoir, x_prev: np.ndarray, u: float) -> np.ndarray:
    """One step of the leaky-integrator recursion."""
    alpha = res.config.leak_rate
    pre = res.w_res @ x_prev + res.w_in * u
    return (1.0 - alpha) * x_prev + alpha * np.tanh(pre)


def collect_states(res: Reservoir, u: np.ndarray) -> np.ndarray:
    """Iterate the recursion from x_0 = 0 over an input sequence.

    Returns the full (len(u), n_reservoir) trajectory; discarding washout
    rows is the trainer's concern.
    """
    u = np.asarray(u, dtype=float).ravel()
    n = res.n_reservoir
    states = np.empty((len(u), n))
    if len(u) == 0:
        return states
    alpha = res.config.leak_rate
    x = np.zeros(n)
    w_res = res.w_res
    w_in = res.w_in
    for k in range(len(u)):
        x = (1.0 - alpha) * x + alpha * np.tanh(w_res @ x + w_in * u[k])
        states[k] = x
    return states


def train_readout(
    states: np.ndarray,
    labels: np.ndarray,
    cfg: ReservoirConfig,
    norm_mean: float = 0.0,
    norm_std: float = 1.0,
) -> TrainedReadout:
    """Closed-form ridge fit of the readout on post-washout states.

    Solves (X^T X + lambda I') w = X^T y over bias-augmented states, where I'
    is the identity with a zero in the bias slot (the bias is not penalized,
    so in the large-lambda limit the weights vanish and the bias tends to the
    label mean).  The decision threshold is initialized to 0.5.
    """
    states = np.asarray(states, dtype=float)
    labels = np.asarray(labels, dtype=float).ravel()
    if states.ndim != 2 or states.shape[0] != len(labels):
        raise ValueError(
            f"states {states.shape} and labels ({len(labels)},) are misaligned"
        )
    post = states[cfg.washout:]
    y = labels[cfg.washout:]
    if post.shape[0] == 0:
        raise ValueError(
            f"washout {cfg.washout} leaves no training rows out of {states.shape[0]}"
        )
    n_feat = post.shape[1]
    x_aug = np.concatenate([post, np.ones((post.shape[0], 1))], axis=1)
    gram = x_aug.T @ x_aug
    reg = np.eye(n_feat + 1) * cfg.ridge_lambda
    reg[n_feat, n_feat] = 0.0
    rhs = x_aug.T @ y
    try:
        w_full = np.linalg.solve(gram + reg, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(
            f"singular readout system (lambda={cfg.ridge_lambda}): {exc}"
        ) from exc
    return TrainedReadout(
        weights=w_full[:n_feat],
        bias=float(w_full[n_feat]),
        threshold=0.5,
        norm_mean=norm_mean,
        norm_std=norm_std,
        ridge_lambda=cfg.ridge_lambda,
    )


def predict_scores(res: Reservoir, readout: TrainedReadout, u: np.ndarray) -> np.ndarray:
    """Score every symbol (no washout at inference): s_k = w . x_k + bias."""
    if len(readout.weights) != res.n_reservoir:
        raise ValueError(
            f"readout has {len(readout.weights)} weights for a "
            f"{res.n_reservoir}-unit reservoir"
        )
    states = collect_states(res, u)
    return states @ readout.weights + readout.bias


def score_states(states: np.ndarray, readout: TrainedReadout) -> np.ndarray:
    """Scores for precomputed states (same linear map as predict_scores)."""
    states = np.asarray(states, dtype=float)
    if states.shape[1] != len(readout.weights):
        raise ValueError(
            f"states with {states.shape[1]} columns do not match "
            f"{len(readout.weights)} readout weights"
        )
    return states @ readout.weights + readout.bias


def decide_standard(scores: np.ndarray) -> np.ndarray:
    """Fixed-rule decision: 1 iff score > 0.5 (strictly)."""
    return (np.asarray(scores) > 0.5).astype(np.int8)


def decide_with_threshold(scores: np.ndarray, threshold: float) -> np.ndarray:
    return (np.asarray(scores) > threshold).astype(np.int8)


def optimize_threshold(scores: np.ndarray, labels: np.ndarray) -> float:
    """Threshold minimizing empirical BER over the score operating points.

    Candidates are the midpoints of consecutive sorted unique scores plus
    -inf/+inf sentinels; ties are broken toward the smallest threshold.
    """
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel().astype(np.int8)
    if len(scores) != len(labels) or len(scores) == 0:
        raise ValueError("scores and labels must be non-empty and aligned")
    n_one = int(np.sum(labels == 1))
    n_zero = len(labels) - n_one
    if n_one == 0 or n_zero == 0:
        raise SingleClassError("threshold optimization needs both classes present")
    uniq = np.unique(scores)
    candidates = np.concatenate(
        [[-np.inf], (uniq[:-1] + uniq[1:]) / 2.0 if len(uniq) > 1 else [], [np.inf]]
    )
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    ones_below = np.concatenate([[0], np.cumsum(sorted_labels == 1)])
    zeros_below = np.concatenate([[0], np.cumsum(sorted_labels == 0)])
    # Decision is score > eta: errors = ones at or below eta + zeros above eta.
    pos = np.searchsorted(sorted_scores, candidates, side="right")
    errors = ones_below[pos] + (n_zero - zeros_below[pos])
    best = int(np.argmin(errors))  # argmin takes the first (smallest) candidate
    return float(candidates[best])


class ReservoirStepper:
    """Streaming single-symbol inference kernel.

    Holds preallocated float32 buffers so one call costs a single matrix-
    vector product plus elementwise updates; this is the per-symbol path whose
    latency the benchmark measures.  float32 is ample for a tanh-squashed
    state read out against a threshold.
    """

    def __init__(self, res: Reservoir, readout: TrainedReadout):
        self._w_res = np.ascontiguousarray(res.w_res, dtype=np.float32)
        self._w_in = res.w_in.astype(np.float32)
        self._w_out = readout.weights.astype(np.float32)
        self._bias = float(readout.bias)
        self._alpha = np.float32(res.config.leak_rate)
        self._keep = np.float32(1.0 - res.config.leak_rate)
        self._threshold = readout.threshold
        self._mean = readout.norm_mean
        self._scale = 1.0 / readout.norm_std
        self._x = np.zeros(res.n_reservoir, dtype=np.float32)
        self._pre = np.empty(res.n_reservoir, dtype=np.float32)

    def reset(self) -> None:
        self._x[:] = 0.0

    def step(self, u_raw: float) -> int:
        """Normalize one raw feature, update the state, and decide the bit."""
        u = (u_raw - self._mean) * self._scale
        np.dot(self._w_res, self._x, out=self._pre)
        self._pre += self._w_in * np.float32(u)
        np.tanh(self._pre, out=self._pre)
        self._x *= self._keep
        self._pre *= self._alpha
        self._x += self._pre
        score = float(np.dot(self._w_out, self._x)) + self._bias
        return 1 if score > self._threshold else 0


# ---------------------------------------------------------------------------
# Model file format (versioned CSV-of-matrices)
# ---------------------------------------------------------------------------
#
#   mcdet-esn-model,1
#   scalar,<name>,<value>          one line per config scalar / stat
#   matrix,<name>,<rows>,<cols>    followed by <rows> comma-separated lines
#
# Scalars are written with repr-precision so a save/load round trip is exact.

_MODEL_MAGIC = "mcdet-esn-model"
_MODEL_VERSION = 1


def save_model(
    res: Reservoir, readout: TrainedReadout, path: str | Path
) -> Path:
    path = Path(path)
    cfg = res.config
    buf = io.StringIO()
    buf.write(f"{_MODEL_MAGIC},{_MODEL_VERSION}\n")
    scalars = {
        "n_reservoir": cfg.n_reservoir,
        "spectral_radius": cfg.spectral_radius,
        "leak_rate": cfg.leak_rate,
        "input_scaling": cfg.input_scaling,
        "washout": cfg.washout,
        "ridge_lambda": cfg.ridge_lambda,
        "density": cfg.density,
        "rng_seed": cfg.rng_seed,
        "achieved_radius": res.achieved_radius,
        "bias": readout.bias,
        "threshold": readout.threshold,
        "norm_mean": readout.norm_mean,
        "norm_std": readout.norm_std,
        "readout_ridge_lambda": readout.ridge_lambda,
    }
    for name, value in scalars.items():
        buf.write(f"scalar,{name},{value!r}\n")
    for name, mat in (
        ("w_in", res.w_in.reshape(-1, 1)),
        ("w_res", res.w_res),
        ("w_out", readout.weights.reshape(-1, 1)),
    ):
        buf.write(f"matrix,{name},{mat.shape[0]},{mat.shape[1]}\n")
        for row in mat:
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
    path.write_text(buf.getvalue())
    return path


def load_model(path: str | Path) -> tuple[Reservoir, TrainedReadout]:
    lines = Path(path).read_text().splitlines()
    magic, version = lines[0].split(",")
    if magic != _MODEL_MAGIC:
        raise ValueError(f"{path} is not an esn model file (header {lines[0]!r})")
    if int(version) != _MODEL_VERSION:
        raise ValueError(f"unsupported model version {version}")
    scalars: dict[str, float] = {}
    matrices: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        parts = lines[i].split(",")
        if parts[0] == "scalar":
            scalars[parts[1]] = float(parts[2])
            i += 1
        elif parts[0] == "matrix":
            name, rows, cols = parts[1], int(parts[2]), int(parts[3])
            mat = np.empty((rows, cols))
            for r in range(rows):
                mat[r] = [float(v) for v in lines[i + 1 + r].split(",")]
            matrices[name] = mat
            i += 1 + rows
        elif parts[0] == "":
            i += 1
        else:
            raise ValueError(f"unexpected model line {lines[i]!r}")
    cfg = ReservoirConfig(
        n_reservoir=int(scalars["n_reservoir"]),
        spectral_radius=scalars["spectral_radius"],
        leak_rate=scalars["leak_rate"],
        input_scaling=scalars["input_scaling"],
        washout=int(scalars["washout"]),
        ridge_lambda=scalars["ridge_lambda"],
        density=scalars["density"],
        rng_seed=int(scalars["rng_seed"]),
    )
    res = Reservoir(
        w_in=matrices["w_in"].ravel(),
        w_res=matrices["w_res"],
        config=cfg,
        achieved_radius=scalars["achieved_radius"],
    )
    readout = TrainedReadout(
        weights=matrices["w_out"].ravel(),
        bias=scalars["bias"],
        threshold=scalars["threshold"],
        norm_mean=scalars["norm_mean"],
        norm_std=scalars["norm_std"],
        ridge_lambda=scalars["readout_ridge_lambda"],
    )
    return res, readout
