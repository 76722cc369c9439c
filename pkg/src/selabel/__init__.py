"""Selective labeling: budgeted yes/no annotation for span-extraction models.

Subpackages map onto the pipeline stages: `corpus` (synthetic documents and
candidates), `scorer` (the trainable binary classifier), `calibration`
(per-field score calibration), `acquisition` (uncertainty ranking and batch
selection), `oracle` (labels, budget, negative inference), `engine`
(round orchestration), `evaluation` (extraction metrics), `api` (live
annotation service), and `cli` (command-line entry points).
"""

from .engine import ExperimentConfig, run_experiment

__all__ = ["ExperimentConfig", "run_experiment"]
__version__ = "0.1.0"
