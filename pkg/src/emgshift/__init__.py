"""Sliding-window normalized EMG motion classification under electrode shift."""
from .io import SCHEMA_VERSIONS
from .signal import FilterSpec, PipelineConfig, SignalBuffer, SwnConfig, run_pipeline, swn

__version__ = "0.1.0"

__all__ = ["FilterSpec", "PipelineConfig", "SCHEMA_VERSIONS", "SignalBuffer", "SwnConfig",
           "run_pipeline", "swn", "__version__"]
