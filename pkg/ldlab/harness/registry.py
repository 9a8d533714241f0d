"""
Experiment Registry - Central registry for all experiment modes.
"""
import logging
from typing import Dict, List, Optional

from .base import BaseExperiment

logger = logging.getLogger(__name__)


class ExperimentRegistry:
    """
    Registry for experiment modes.

    Usage:
        ExperimentRegistry.initialize_experiments()
        experiment = ExperimentRegistry.get('gamma-sweep')
    """

    _experiments: Dict[str, BaseExperiment] = {}
    _initialized = False

    @classmethod
    def register(cls, experiment_class: type) -> BaseExperiment:
        """
        Register an experiment class.

        Raises:
            TypeError: class does not inherit from BaseExperiment
            ValueError: an experiment with the same name is already registered
        """
        if not issubclass(experiment_class, BaseExperiment):
            raise TypeError(f"{experiment_class} must inherit from BaseExperiment")

        experiment = experiment_class()
        if experiment.name in cls._experiments:
            raise ValueError(f"Experiment '{experiment.name}' is already registered")
        cls._experiments[experiment.name] = experiment
        return experiment

    @classmethod
    def get(cls, name: str) -> Optional[BaseExperiment]:
        return cls._experiments.get(name)

    @classmethod
    def get_all(cls) -> List[BaseExperiment]:
        return list(cls._experiments.values())

    @classmethod
    def clear(cls):
        """Clear all registered experiments (mainly for testing)."""
        cls._experiments.clear()
        cls._initialized = False

    @classmethod
    def initialize_experiments(cls):
        """Register every built-in mode once."""
        if cls._initialized:
            return

        from .diagnose import DiagnoseExperiment
        from .experiments import ApproxCheckExperiment, MinimizeLDExperiment, MinimizeLimitExperiment, RecoverExperiment
        from .sweep import GammaSweepExperiment
        for experiment_class in (MinimizeLDExperiment, MinimizeLimitExperiment, RecoverExperiment,
                                 GammaSweepExperiment, DiagnoseExperiment, ApproxCheckExperiment):
            cls.register(experiment_class)

        cls._initialized = True
        logger.debug(f"Initialized {len(cls._experiments)} experiments")

    @classmethod
    def is_initialized(cls) -> bool:
        return cls._initialized
