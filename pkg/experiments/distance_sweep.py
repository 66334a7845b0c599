"""Localization errors as the dipole moves radially away from the particle."""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from core.geometry import distance_to_boundary
from experiments.common import (
    build_scene,
    forward_data,
    localize_pair,
    make_source,
    output_dir,
    require,
    timed,
    write_csv,
    write_report,
)
from imaging.localize import NM


COLUMNS = ["distance_nm", "err_uncorr_nm", "err_corr_nm", "angerr_uncorr_deg", "angerr_corr_deg", "offset_nm"]
# Largest gap between the two fits expected at the farthest separation.
FAR_AGREEMENT_NM = 5.0


def sweep_positions(position_nm, offsets_nm) -> list[np.ndarray]:
    """z* translated by each offset along the ray from the origin through z*."""
    z = np.asarray(position_nm, dtype=float)
    norm = np.linalg.norm(z)
    require(norm > 0, "source.position_nm must be away from the origin for a radial sweep")
    direction = z / norm
    return [z + o * direction for o in offsets_nm]


def run_distance_sweep(config: dict, log) -> dict:
    scene = build_scene(config, log)
    offsets = [float(o) for o in config["sweeps"]["offsets_nm"]]
    positions = sweep_positions(config["source"]["position_nm"], offsets)

    def one(position_nm):
        source = make_source(config, scene.source.omega, position_nm)
        _, data = forward_data(scene, source)
        fits = localize_pair(scene, data, source)
        distance = float(distance_to_boundary(scene.particle.curve, source.z)) / NM
        return distance, fits

    with timed(log, "distance_sweep", points=len(offsets), threads=config["run"]["threads"]):
        with ThreadPoolExecutor(max_workers=config["run"]["threads"]) as pool:
            results = list(pool.map(one, positions))

    rows = []
    points = []
    for offset, (distance, fits) in zip(offsets, results):
        u, c = fits["uncorrected"], fits["corrected"]
        rows.append([distance, u["position_error_nm"], c["position_error_nm"],
                     u["angle_error_deg"], c["angle_error_deg"], offset])
        points.append({"offset_nm": offset, "distance_nm": distance, "uncorrected": u, "corrected": c})

    out = output_dir(config)
    files = [write_csv(out / "distance_sweep.csv", COLUMNS, rows)]

    nearest = min(range(len(rows)), key=lambda i: rows[i][0])
    farthest = max(range(len(rows)), key=lambda i: rows[i][0])
    checks = {
        "nearest_corrected_at_most_half": bool(rows[nearest][2] <= rows[nearest][1] / 2),
        "farthest_within_nm": FAR_AGREEMENT_NM,
        "farthest_agree": bool(abs(rows[farthest][2] - rows[farthest][1]) <= FAR_AGREEMENT_NM),
    }
    return write_report(config, "sweep-distance", {
        "source": scene.source.to_dict(),
        "modes": list(scene.modes),
        "points": points,
        "checks": checks,
    }, files)
