"""Mirage report: forward solve, image, uncorrected and corrected fits."""

import numpy as np

from core.forward import boundary_mismatch, compute_couplings, modal_mismatch, write_far_field
from imaging.functional import write_image_csv
from experiments.common import (
    build_scene,
    forward_data,
    localize_pair,
    output_dir,
    timed,
    write_report,
)


# Expected position-error bands in nm per shape kind:
# (uncorrected low, uncorrected high, corrected max). Reported, not enforced.
REFERENCE_BANDS = {
    "diamond": (25.0, 55.0, 10.0),
    "flower": (18.0, 45.0, 12.0),
    "ellipse": (50.0, 95.0, 12.0),
}


def band_flags(kind: str, uncorrected_nm: float, corrected_nm: float) -> dict | None:
    band = REFERENCE_BANDS.get(kind)
    if band is None:
        return None
    lo, hi, corr = band
    return {
        "uncorrected_band_nm": [lo, hi],
        "corrected_max_nm": corr,
        "uncorrected_in_band": bool(lo <= uncorrected_nm <= hi),
        "corrected_in_band": bool(corrected_nm < corr),
    }


def run_mirage(config: dict, log) -> dict:
    scene = build_scene(config, log)
    particle = scene.particle
    out = output_dir(config)
    files = []

    pair, data = forward_data(scene, log=log)
    files.extend(write_far_field(out / "far_field.csv", data))

    with timed(log, "localize", modes=list(scene.modes)):
        fits = localize_pair(scene, data, scene.source)
    files.extend(write_image_csv(out / "image", fits["_image"]))

    payload = {
        "shape": particle.curve.to_dict(),
        "source": scene.source.to_dict(),
        "omega": scene.source.omega,
        "modes": list(scene.modes),
        "amplitudes": config["localize"]["amplitudes"],
        "forward": {
            "residual": pair.residual,
            "condition": pair.condition,
            "boundary_mismatch": boundary_mismatch(particle.mesh, particle.medium, scene.source, pair),
        },
        "uncorrected": fits["uncorrected"],
        "corrected": fits["corrected"],
    }
    if scene.modes:
        true_alphas = compute_couplings(particle.spectrum, particle.mesh, particle.medium,
                                        scene.source, scene.modes)
        payload["true_alphas"] = [[complex(a).real, complex(a).imag] for a in true_alphas]
        payload["modal_mismatch"] = modal_mismatch(
            particle.spectrum, particle.mesh, particle.medium, scene.source, pair,
            max(scene.modes), data.positions,
        )
    flags = band_flags(particle.curve.kind, fits["uncorrected"]["position_error_nm"],
                       fits["corrected"]["position_error_nm"])
    if flags is not None:
        payload["reference_bands"] = flags
    payload["improvement"] = float(
        fits["uncorrected"]["position_error_nm"] / max(fits["corrected"]["position_error_nm"], np.finfo(float).tiny)
    )
    return write_report(config, "mirage", payload, files)
