"""Benchmark harness for small-data defect classification on height profiles.

Subpackages:

* heightfield - physical data model, synthetic patch generator, TIFF codec
* preprocess  - bit-exact 16-bit to model-input chain
* datakit     - stratified splits, class balancing, nested size ladders
* metrics     - confusion matrices, per-class scores, macro-F1
* learner     - baseline softmax-regression trainer and the session contract
* asha        - asynchronous successive halving scheduler, event log, auditor
* exttrainer  - client for external trainer processes (JSON lines over stdio)
* sweep       - tune-then-sweep experiment orchestration and reports
* cli         - command-line front end
"""

from .heightfield import (Calibration, DefectLabel, HeightImage, LabeledPatch,
                          SynthesisConfig, decode_image, encode_image,
                          physical_extent, synthesize_dataset, synthesize_patch)
# the full chain lives at smalldata.preprocess.preprocess; re-exporting the bare
# function here would shadow the submodule
from .preprocess import GrayPatch8, ModelInput, pad_center, quantize_center, triplicate
from .datakit import DatasetIndex, SplitResult, SplitSpec, balance, stratified_split, subset_ladder
from .metrics import ConfusionMatrix, EvalReport, confusion, evaluate
from .learner import BaselineModel, BaselineTrainer, TrainConfig, TrainerHandle
from .asha import AshaConfig, AshaScheduler, SearchSpace, rung_levels, run_search, sample_trial
from .sweep import ExperimentPlan, SweepReport, TrainerSpec, run_sweep, tune

__version__ = "0.1.0"

__all__ = [
    "Calibration", "DefectLabel", "HeightImage", "LabeledPatch", "SynthesisConfig",
    "decode_image", "encode_image", "physical_extent", "synthesize_dataset",
    "synthesize_patch",
    "GrayPatch8", "ModelInput", "pad_center", "quantize_center", "triplicate",
    "DatasetIndex", "SplitResult", "SplitSpec", "balance", "stratified_split",
    "subset_ladder",
    "ConfusionMatrix", "EvalReport", "confusion", "evaluate",
    "BaselineModel", "BaselineTrainer", "TrainConfig", "TrainerHandle",
    "AshaConfig", "AshaScheduler", "SearchSpace", "rung_levels", "run_search",
    "sample_trial",
    "ExperimentPlan", "SweepReport", "TrainerSpec", "run_sweep", "tune",
]
