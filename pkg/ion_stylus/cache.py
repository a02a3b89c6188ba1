"""
On-disk cache of solved boundary-element bases.

Each solve is stored as ``<key>.parquet`` (one row per panel: geometry and
one charge column per role) plus ``<key>.json`` (roles and diagnostics),
where the key is an md5 of the geometry and refinement level, salted with
``SOLVER_REVISION``.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import polars as pl

from ion_stylus.mesh import PANEL_ARRAYS, PanelMesh

CACHE_DIR = Path.home() / ".ion-stylus" / "cache"
# Bump when the solved charges change for an unchanged geometry
SOLVER_REVISION = 2


def get_cache_dir() -> Path:
    """Return the cache directory path."""
    return CACHE_DIR


def cache_key(geometry, resolution: int) -> str:
    """md5 of the geometry repr and refinement level, salted with SOLVER_REVISION."""
    return hashlib.md5(f"{geometry!r}|{resolution}|{SOLVER_REVISION}".encode("utf-8")).hexdigest()


def get_cache_file(key: str) -> Path:
    """Return the parquet path for a cache key (may not exist)."""
    return CACHE_DIR / f"{key}.parquet"


def is_cached(key: str) -> bool:
    return get_cache_file(key).exists() and get_cache_file(key).with_suffix(".json").exists()


def save_basis(key: str, mesh: PanelMesh, charges: np.ndarray, diagnostics: dict) -> Path:
    """Write a solved basis to the cache and return the parquet path."""
    CACHE_DIR.mkdir(parents=True, exist_ok=True)
    columns = {name: getattr(mesh, name) for name in PANEL_ARRAYS}
    for i, role in enumerate(mesh.roles):
        columns[f"q_{role}"] = charges[:, i]
    path = get_cache_file(key)
    pl.DataFrame(columns).write_parquet(path)
    path.with_suffix(".json").write_text(json.dumps({"roles": list(mesh.roles), "diagnostics": diagnostics}))
    return path


def load_basis(key: str) -> tuple[PanelMesh, np.ndarray, dict]:
    """Read (mesh, charges, diagnostics) for a cache key.

    Raises:
        FileNotFoundError: If the key is not cached
    """
    path = get_cache_file(key)
    if not is_cached(key):
        raise FileNotFoundError(
            f"No cached basis '{key}' in {CACHE_DIR}. Solve without the cache or delete the directory to rebuild."
        )
    meta = json.loads(path.with_suffix(".json").read_text())
    df = pl.read_parquet(path)
    roles = tuple(meta["roles"])
    mesh = PanelMesh(
        r0=df["r0"].to_numpy(),
        z0=df["z0"].to_numpy(),
        r1=df["r1"].to_numpy(),
        z1=df["z1"].to_numpy(),
        owner=df["owner"].to_numpy().astype(int),
        segment=df["segment"].to_numpy().astype(int),
        roles=roles,
    )
    charges = np.column_stack([df[f"q_{role}"].to_numpy() for role in roles])
    return mesh, charges, meta["diagnostics"]


def clear_cache() -> int:
    """Delete every cached basis; returns the number of solves removed."""
    if not CACHE_DIR.exists():
        return 0
    removed = 0
    for path in CACHE_DIR.glob("*.parquet"):
        path.unlink()
        path.with_suffix(".json").unlink(missing_ok=True)
        removed += 1
    return removed
