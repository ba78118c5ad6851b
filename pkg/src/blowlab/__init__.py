"""Numerical laboratory for semilinear heat blowup in similarity variables."""

__version__ = "0.1.0"

from .grid import Field, Grid, WeightSpec

__all__ = ["Field", "Grid", "WeightSpec", "ExperimentConfig", "RunReport",
           "run_pipeline", "run_checks", "verify_suite", "__version__"]


def __getattr__(name):
    # pipeline/acceptance import most of the package; load them on demand so
    # `import blowlab` stays cheap for library use
    if name in ("ExperimentConfig", "RunReport", "run_pipeline"):
        from . import pipeline
        return getattr(pipeline, name)
    if name in ("run_checks", "verify_suite"):
        from . import acceptance
        return getattr(acceptance, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
