"""Object asset registry: a directory of OBJ meshes keyed by object id."""

from __future__ import annotations

from pathlib import Path

from .errors import AssetLookupError
from .geometry import MeshGeometry, load_obj


class AssetRegistry:
    def __init__(self, root):
        self.root = Path(root)
        if not self.root.is_dir():
            raise AssetLookupError(f"asset registry directory not found: {self.root}")
        self._cache: dict[str, MeshGeometry] = {}

    def ids(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.obj"))

    def path_for(self, object_id: str) -> Path:
        return self.root / f"{object_id}.obj"

    def get(self, object_id: str) -> MeshGeometry:
        if object_id not in self._cache:
            path = self.path_for(object_id)
            if not path.is_file():
                raise AssetLookupError(f"no asset for object id {object_id!r} under {self.root}")
            self._cache[object_id] = load_obj(path)
        return self._cache[object_id]
