"""Experiment orchestration: configs, modes and the gamma sweep"""
import logging

from .base import BaseExperiment, ExperimentResult, Table
from .config import (ExperimentConfig, FieldKind, Mode, SchedulePoint, config_from_dict, load_config,
                     out_of_theory)
from .registry import ExperimentRegistry

logging.getLogger(__name__).addHandler(logging.NullHandler())

__all__ = [
    'BaseExperiment', 'ExperimentResult', 'Table',
    'ExperimentConfig', 'FieldKind', 'Mode', 'SchedulePoint', 'config_from_dict', 'load_config',
    'out_of_theory', 'ExperimentRegistry',
]
