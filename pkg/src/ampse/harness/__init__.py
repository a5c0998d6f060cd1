""" Config-driven experiments and their CSV reports. """
from .config import ExperimentConfig, config_hash, load_config
from .experiments import (Outcome, TrialResult, run_cs_monte_carlo, run_embed_check,
                          run_general_se_check, run_se_only, run_trials, summary_frame,
                          trials_frame)
from .runner import RUNNERS, run_experiment
from .sweep import run_delta_sweep, sweep_gate
