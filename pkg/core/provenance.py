"""Output provenance: config hashes and per-run file manifests.

Every experiment writes manifest.json next to its outputs, listing each file
with its SHA-256 and size plus the hash of the configuration that produced
it. Manifests contain no timestamps, so identical runs give identical
manifests.
"""

import hashlib
import json
import os


MANIFEST_FILENAME = "manifest.json"
MANIFEST_VERSION = "1.0"


def canonical_json(obj) -> bytes:
    """Deterministic JSON: sorted keys, no whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_default).encode("utf-8")


def _default(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def public_view(obj):
    """Drop private ``_``-prefixed keys (file paths, runtime-only state)."""
    if isinstance(obj, dict):
        return {k: public_view(v) for k, v in obj.items() if not str(k).startswith("_")}
    if isinstance(obj, (list, tuple)):
        return [public_view(v) for v in obj]
    return obj


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical public part of a config."""
    return hashlib.sha256(canonical_json(public_view(config))).hexdigest()


def key_hash(key: dict) -> str:
    """Short stable hash used to name cache entries."""
    return hashlib.sha256(canonical_json(key)).hexdigest()[:16]


def file_sha256(filepath: str) -> str:
    """Compute SHA-256 hash of a file."""
    h = hashlib.sha256()
    with open(filepath, "rb") as f:
        for chunk in iter(lambda: f.read(8192), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: str, files: list[str], config: dict) -> str:
    """Write manifest.json for ``files`` (paths as written, or relative to out_dir)."""
    entries = {}
    for path in sorted(set(files)):
        abspath = os.path.abspath(path) if os.path.exists(path) else os.path.join(out_dir, path)
        rel = os.path.relpath(abspath, os.path.abspath(out_dir)).replace(os.sep, "/")
        if os.path.exists(abspath):
            entries[rel] = {"sha256": file_sha256(abspath), "size": os.path.getsize(abspath)}
        else:
            entries[rel] = {"sha256": None, "missing": True}
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "algorithm": "sha256",
        "config_hash": config_hash(config),
        "constants": public_view(config.get("physics", {})),
        "files": entries,
    }
    path = os.path.join(out_dir, MANIFEST_FILENAME)
    os.makedirs(out_dir, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path
