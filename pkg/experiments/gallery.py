"""Mode gallery: NP spectrum, resonance table and exterior mode fields."""

import numpy as np

from core.geometry import distance_to_boundary, point_inside
from core.potentials import OFFBOUNDARY_GUARD
from core.spectrum import mode_field, spectrum_report, wavenumbers
from experiments.common import (
    build_particle,
    output_dir,
    resolve_omega,
    timed,
    write_csv,
    write_json,
    write_report,
)


def field_grid(particle, config: dict):
    """Square grid around the particle and the mask of exterior points kept."""
    sw = config["sweeps"]
    curve = particle.curve
    half = sw["gallery_extent"] * curve.delta
    n = sw["gallery_grid"]
    xs = np.linspace(curve.center[0] - half, curve.center[0] + half, n)
    ys = np.linspace(curve.center[1] - half, curve.center[1] + half, n)
    X, Y = np.meshgrid(xs, ys)
    pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
    guard = OFFBOUNDARY_GUARD * float(particle.mesh.spacing.max())
    keep = ~point_inside(curve, pts) & (distance_to_boundary(curve, pts) > guard)
    return xs, ys, pts, keep


def write_plane(path, xs, ys, plane):
    rows = [[f"{y * 1e9:.6f}", *(float(v) for v in row)] for y, row in zip(ys, plane)]
    return write_csv(path, ["y_nm\\x_nm"] + [f"{x * 1e9:.6f}" for x in xs], rows)


def run_modes(config: dict, log) -> dict:
    particle = build_particle(config, log)
    omega = resolve_omega(config, particle)
    k_m, _ = wavenumbers(particle.medium, omega)
    out = output_dir(config)
    files = []

    summary = spectrum_report(particle.spectrum, particle.resonances)
    summary["omega"] = omega
    summary["k_m"] = [k_m.real, k_m.imag]
    files.append(write_json(out / "resonances.json", summary))

    xs, ys, pts, keep = field_grid(particle, config)
    n_show = min(config["sweeps"]["gallery_modes"], particle.spectrum.count - 1)
    fields = []
    with timed(log, "mode_fields", modes=n_show, points=int(keep.sum())):
        for n in range(1, n_show + 1):
            values = np.full(pts.shape[0], np.nan + 1j * np.nan)
            values[keep] = mode_field(particle.spectrum, particle.mesh, k_m, n, pts[keep])
            plane = values.reshape(ys.size, xs.size)
            for suffix, part in (("re", plane.real), ("im", plane.imag), ("abs", np.abs(plane))):
                files.append(write_plane(out / f"mode_{n:02d}_{suffix}.csv", xs, ys, part))
            fields.append({"mode": n, "lambda": float(particle.spectrum.eigenvalues[n]),
                           "max_abs": float(np.nanmax(np.abs(plane)))})

    boundary = np.asarray(particle.mesh.nodes)
    files.append(write_csv(out / "boundary.csv", ["x_nm", "y_nm"],
                           [[float(x * 1e9), float(y * 1e9)] for x, y in boundary]))

    return write_report(config, "modes", {
        "shape": particle.curve.to_dict(),
        "omega": omega,
        "resonances": particle.resonances.to_records(),
        "omitted_modes": list(particle.resonances.omitted),
        "mode_fields": fields,
    }, files)
