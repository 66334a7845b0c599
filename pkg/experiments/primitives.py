"""Scripting primitives: forward data, back-propagation image, localization.

``image`` and ``localize`` read far-field data from ``run.data`` when set
(CSV + JSON sidecar as written by ``forward``) and otherwise solve the
configured forward problem first.
"""

from core.errors import ConfigError
from core.forward import DipoleSource, boundary_mismatch, read_far_field, write_far_field
from experiments.common import (
    build_particle,
    build_scene,
    forward_data,
    localize_pair,
    output_dir,
    timed,
    write_report,
)
from imaging.functional import backpropagate, write_image_csv
from imaging.localize import NM


def _input_data(config: dict, log, particle):
    """(data, truth) from run.data or from a fresh forward solve."""
    path = config["run"]["data"]
    if not path:
        scene = build_scene(config, log, particle=particle, with_modes=False)
        _, data = forward_data(scene, log=log)
        return data, scene.source
    try:
        data = read_far_field(path)
    except OSError as e:
        raise ConfigError(f"run.data: cannot read {path}: {e}")
    recorded = data.metadata.get("source")
    truth = DipoleSource(position=tuple(recorded["position"]), moment=tuple(recorded["moment"]),
                         omega=float(recorded["omega"])) if recorded else None
    return data, truth


def run_forward(config: dict, log) -> dict:
    scene = build_scene(config, log, with_modes=False)
    pair, data = forward_data(scene, log=log)
    out = output_dir(config)
    files = list(write_far_field(out / "far_field.csv", data))
    return write_report(config, "forward", {
        "source": scene.source.to_dict(),
        "omega": data.omega,
        "radius": data.radius,
        "n_sensors": data.n_sensors,
        "forward": {
            "residual": pair.residual,
            "condition": pair.condition,
            "boundary_mismatch": boundary_mismatch(scene.particle.mesh, scene.particle.medium,
                                                   scene.source, pair),
        },
    }, files)


def run_image(config: dict, log) -> dict:
    particle = build_particle(config, log)
    data, _ = _input_data(config, log, particle)
    scene = build_scene(config, log, particle=particle, with_modes=False, data=data)
    with timed(log, "image", points=int(scene.grid.points.shape[0])):
        image = backpropagate(data, scene.grid, scene.projector)
    files = write_image_csv(output_dir(config) / "image", image)
    return write_report(config, "image", {
        "omega": data.omega,
        "sigma0": data.sigma0,
        "peak_nm": [float(c / NM) for c in image.peak()],
    }, files)


def run_localize(config: dict, log) -> dict:
    particle = build_particle(config, log)
    data, truth = _input_data(config, log, particle)
    scene = build_scene(config, log, particle=particle, data=data)
    with timed(log, "localize", modes=list(scene.modes)):
        fits = localize_pair(scene, data, truth)
    return write_report(config, "localize", {
        "omega": data.omega,
        "modes": list(scene.modes),
        "truth": truth.to_dict() if truth is not None else None,
        "uncorrected": fits["uncorrected"],
        "corrected": fits["corrected"],
    }, [])
