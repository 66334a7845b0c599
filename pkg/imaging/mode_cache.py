"""On-disk cache of precomputed mode images.

Each entry is a binary matrix dump (2P x N, columns are flattened mode
images) named after the hash of its key; an index.json maps hashes to the
full keys. A key mismatch or a damaged file means the images are recomputed.
"""

import json
import os

import numpy as np

from core.errors import QuadratureError
from core.matrix_dump import dump_matrix, load_matrix
from core.provenance import key_hash
from imaging.functional import ImageGrid, ImagingGrid


INDEX_FILENAME = "index.json"
CACHE_VERSION = "1"


def load_index(cache_dir: str) -> dict:
    """Load the cache index, or an empty one if none exists."""
    index_path = os.path.join(cache_dir, INDEX_FILENAME)
    if os.path.exists(index_path):
        with open(index_path, "r", encoding="utf-8") as f:
            return json.load(f)
    return {"cache_version": CACHE_VERSION, "entries": {}}


def save_index(cache_dir: str, index: dict) -> None:
    os.makedirs(cache_dir, exist_ok=True)
    index_path = os.path.join(cache_dir, INDEX_FILENAME)
    with open(index_path, "w", encoding="utf-8") as f:
        json.dump(index, f, indent=2, sort_keys=True)
        f.write("\n")


def mode_image_key(curve_dict: dict, M: int, omega: float, radius: float, n_sensors: int,
                   grid: ImagingGrid, n_modes: int) -> dict:
    return {
        "shape": curve_dict,
        "M": int(M),
        "omega": float(omega),
        "radius": float(radius),
        "n_sensors": int(n_sensors),
        "grid": grid.key(),
        "n_modes": int(n_modes),
    }


def load_mode_images(cache_dir: str, key: dict, grid: ImagingGrid) -> list[ImageGrid] | None:
    """Cached images for ``key``, or None on a miss."""
    if not cache_dir:
        return None
    index = load_index(cache_dir)
    name = key_hash(key)
    entry = index.get("entries", {}).get(name)
    if entry is None or entry.get("key") != json.loads(json.dumps(key)):
        return None
    path = os.path.join(cache_dir, entry["file"])
    try:
        matrix, tag = load_matrix(path)
    except (OSError, QuadratureError):
        return None
    P = grid.points.shape[0]
    if matrix.shape != (2 * P, key["n_modes"]) or tag != f"mode-images:{name}":
        return None
    return [
        ImageGrid(grid, np.stack([matrix[:P, i], matrix[P:, i]], axis=-1), {"mode": i + 1})
        for i in range(matrix.shape[1])
    ]


def save_mode_images(cache_dir: str, key: dict, images: list[ImageGrid]) -> str:
    """Store images under ``key`` and update the index. Returns the file path."""
    name = key_hash(key)
    filename = f"modes-{name}.dmrg"
    matrix = np.stack([img.flat() for img in images], axis=1) if images else np.zeros((0, 0))
    path = dump_matrix(os.path.join(cache_dir, filename), matrix, f"mode-images:{name}")
    index = load_index(cache_dir)
    index.setdefault("entries", {})[name] = {"file": filename, "key": key}
    save_index(cache_dir, index)
    return str(path)
