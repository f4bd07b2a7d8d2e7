"""
Provider spec resolution.

    oracle:<mesh path>   exact SDF of a watertight OBJ/PLY mesh
    sdf:<file>           sampled field (binary grid or x,y,z,d CSV)
"""

import logging
from pathlib import Path
from typing import Union

from polyshell.errors import ConfigError
from polyshell.meshio import read_mesh
from polyshell.providers.base import SdfProvider
from polyshell.providers.mesh_oracle import MeshSdfOracle
from polyshell.providers.sampled import SampledSdfField

logger = logging.getLogger(__name__)

PROVIDER_KINDS = ("oracle", "sdf")


def parse_provider_spec(spec: str) -> tuple[str, str]:
    """Split `kind:path`; raises ConfigError for unknown kinds or missing paths."""
    kind, sep, path = spec.partition(":")
    if not sep or kind not in PROVIDER_KINDS or not path:
        raise ConfigError(f"provider must be oracle:<mesh> or sdf:<file>, got {spec!r}")
    return kind, path


def resolve_provider(spec: Union[str, SdfProvider]) -> SdfProvider:
    """Build the provider a spec names (providers pass through unchanged)."""
    if not isinstance(spec, str):
        return spec
    kind, path = parse_provider_spec(spec)
    if not Path(path).exists():
        raise ConfigError(f"provider file not found: {path}")
    if kind == "oracle":
        logger.info(f"SDF provider: mesh oracle ({path})")
        return MeshSdfOracle(read_mesh(path))
    logger.info(f"SDF provider: sampled field ({path})")
    return SampledSdfField.load(path)
