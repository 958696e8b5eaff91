"""Routing and refuelling toolkit for a single fuel bowser serving site assets."""
from importlib import resources

from .core import (
    CISTERN,
    AssetSpec,
    BowserError,
    Instance,
    InstanceKindError,
    Plan,
    PlanDimensionError,
    PlanEvaluation,
    SiteGraph,
    SolverIntegrityError,
    check_plan_feasibility,
    validate_instance,
)
from .instance_io import parse_instance, parse_plan, format_instance, format_plan, read_instance, read_plan

__version__ = "0.1.0"


def data_text(name: str) -> str:
    """Contents of a bundled data file."""
    return resources.files(__package__).joinpath("data", name).read_text()


def worked_example(stochastic: bool = False) -> Instance:
    """The ten-node, ten-period example instance; Poisson consumption if ``stochastic``."""
    fn = "worked_example_poisson.txt" if stochastic else "worked_example.txt"
    return parse_instance(data_text(fn))
