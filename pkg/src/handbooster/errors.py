"""Exception types shared across the toolkit.

The CLI maps ConfigError to exit code 2 and DataError (and subclasses)
to exit code 3.
"""


class ToolkitError(Exception):
    pass


class ConfigError(ToolkitError):
    """Bad configuration value, flag, or config file."""


class DataError(ToolkitError):
    """Bad input data (manifests, meshes, poses, assets)."""


class InvalidInputError(DataError):
    """An operation received input violating its preconditions."""


class ContractViolationError(DataError):
    """Caller broke an explicit API contract (e.g. uncanonicalized pose)."""


class AssetLookupError(DataError):
    """An object id or asset file could not be resolved."""


class DegenerateGeometryError(DataError):
    """Point set or mesh is numerically degenerate for the operation."""


class NonWatertightMeshError(InvalidInputError):
    """Mesh fails the closed-surface (every edge shared by 2 faces) check."""
