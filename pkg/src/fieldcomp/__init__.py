"""Predict stray-field compensation points from few measurements and compare
the learned predictors with grid search."""

from .geometry import Plane, PlanePoint, fit_plane, intersect_planes, plane_residual
from .simulator import (CompensationRun, ScenarioConfig, TrapScenario, correlation_signal,
                        generate_compensation_run, measure_plane_point, sample_scenario)
from .pca import OffsetPcaModel, PcaModel, fit_offset_model, fit_pca, predict_pca
from .ann import (AdamState, Hyperparams, MlpNetwork, TrainingSet, adam_step, backprop,
                  encode_four, encode_nine, forward, predict_ann, train)
from .metrics import (SigmaEstimate, ScalingPoint, estimate_sigma, grid_search,
                      run_scaling_benchmark)

__version__ = "0.1.0"

__all__ = [
    "Plane", "PlanePoint", "fit_plane", "intersect_planes", "plane_residual",
    "CompensationRun", "ScenarioConfig", "TrapScenario", "correlation_signal",
    "generate_compensation_run", "measure_plane_point", "sample_scenario",
    "OffsetPcaModel", "PcaModel", "fit_offset_model", "fit_pca", "predict_pca",
    "AdamState", "Hyperparams", "MlpNetwork", "TrainingSet", "adam_step", "backprop",
    "encode_four", "encode_nine", "forward", "predict_ann", "train",
    "SigmaEstimate", "ScalingPoint", "estimate_sigma", "grid_search", "run_scaling_benchmark",
]
