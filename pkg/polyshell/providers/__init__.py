"""
Signed-distance providers for polyshell.

Usage:
    from polyshell.providers import MeshSdfOracle, SampledSdfField, resolve_provider

    # Exact SDF of a watertight mesh
    provider = MeshSdfOracle(read_mesh("building.obj"))

    # Field predicted elsewhere, tabulated on a grid
    provider = SampledSdfField.load("prediction.sdf")

    # From a pipeline spec string
    provider = resolve_provider("oracle:building.obj")
"""

from polyshell.providers.base import BaseSdfProvider, SdfProvider
from polyshell.providers.mesh_oracle import MeshSdfOracle
from polyshell.providers.resolve import parse_provider_spec, resolve_provider
from polyshell.providers.sampled import SampledSdfField

__all__ = [
    "BaseSdfProvider",
    "MeshSdfOracle",
    "SampledSdfField",
    "SdfProvider",
    "parse_provider_spec",
    "resolve_provider",
]
