"""Mobile molecular-communication channel simulation and symbol detection.

Subpackages by responsibility:

- ``channel``: particle-level Brownian channel with a binding receiver
- ``features``: per-symbol feature extraction and z-score normalization
- ``reservoir``: leaky echo state network detector with ridge readout
- ``classical``: fixed-threshold, adaptive-EMA, and Viterbi baselines
- ``neural``: windowed feedforward baselines trained from scratch
- ``bench``: metrics, latency measurement, and the full detector sweep
- ``cli``: command-line entry points (simulate / train / evaluate / sweep / roc)
"""

from .channel import SimConfig, SimState, Trace, init_sim, emit, step, run_sequence
from .features import FeatureSeq, extract_features, fit_zscore, apply_zscore
from .reservoir import (
    Reservoir,
    ReservoirConfig,
    TrainedReadout,
    collect_states,
    decide_standard,
    init_reservoir,
    optimize_threshold,
    predict_scores,
    spectral_radius,
    train_readout,
    update_state,
)
from .bench import BenchConfig, BenchReport, accuracy_ber, measure_latency, roc, run_benchmark

__version__ = "0.1.0"
