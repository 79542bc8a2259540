"""Toy data, metrics, the training loop and critic-only divergence estimation."""
from .data import ToyDistribution, dirac, dirac_pair, discrete, gaussian, grid25, ring8, sample
from .metrics import frechet_2d, mode_coverage
from .training import (HISTORY_HEADER, OBJECTIVES, HistoryRow, RunHistory, TrainConfig, TrainingAborted,
                       TrainResult, train, write_samples)
