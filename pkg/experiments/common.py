"""Shared scene construction and output helpers for the experiments.

A scene bundles everything one experiment needs: the particle (curve, mesh,
medium, NP spectrum, resonance table), the operating frequency, the dipole
source and the imaging setup (grid, back-projector, mode images). Output
writers are deterministic: sorted keys, repr floats, no timestamps.
"""

import csv
import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from core.config import parse_omega
from core.errors import ConfigError
from core.forward import (
    BiePair,
    DipoleSource,
    FarFieldData,
    ModalCoupler,
    measure,
    modal_coupler,
    solve_transmission,
)
from core.geometry import BoundaryMesh, ParametricCurve, curve_from_config, discretize
from core.provenance import canonical_json, config_hash, public_view, write_manifest
from core.run_log import RunLog
from core.spectrum import (
    DrudeMedium,
    NpSpectrum,
    ResonanceTable,
    compute_spectrum,
    find_resonances,
    wavenumbers,
)
from imaging.functional import BackProjector, ImageGrid, ImagingGrid, backpropagate, make_grid, mode_images
from imaging.localize import (
    NM,
    LocalizationProblem,
    LocalizationResult,
    error_metrics,
    fit_corrected,
    fit_uncorrected,
)
from imaging.mode_cache import load_mode_images, mode_image_key, save_mode_images


@contextmanager
def timed(log: RunLog, name: str, **details):
    """Log the wall time of the enclosed block as a stage."""
    start = time.time()
    yield
    log.stage(name, int((time.time() - start) * 1000), **details)


@dataclass(frozen=True)
class Particle:
    curve: ParametricCurve
    mesh: BoundaryMesh
    medium: DrudeMedium
    spectrum: NpSpectrum
    resonances: ResonanceTable


@dataclass(frozen=True)
class Scene:
    """Particle plus source and imaging setup at one operating frequency."""
    config: dict
    particle: Particle
    source: DipoleSource
    k_m: complex
    radius: float
    grid: ImagingGrid
    projector: BackProjector
    modes: tuple[int, ...]
    mode_images: tuple[ImageGrid, ...]
    coupler: ModalCoupler | None = None

    @property
    def n_sensors(self) -> int:
        return self.projector.n_sensors


def medium_from_config(config: dict) -> DrudeMedium:
    phys = dict(config["physics"])
    if phys.get("eps_m") is None:
        phys["eps_m"] = phys["eps0"]
    if phys.get("mu_m") is None:
        phys["mu_m"] = phys["mu0"]
    phys.pop("omega_range", None)
    return DrudeMedium.from_config(phys)


def build_particle(config: dict, log: RunLog) -> Particle:
    """Curve, mesh, NP spectrum and resonance table of the configured shape."""
    curve = curve_from_config(config["shape"])
    mesh = discretize(curve, config["discretization"]["M"])
    medium = medium_from_config(config)
    with timed(log, "spectrum", M=mesh.n, n_eig=config["discretization"]["n_eig"]):
        spectrum = compute_spectrum(mesh, config["discretization"]["n_eig"])
    lo, hi = config["physics"]["omega_range"]
    with timed(log, "resonances"):
        table = find_resonances(spectrum, medium, (lo * medium.omega_p, hi * medium.omega_p))
    return Particle(curve=curve, mesh=mesh, medium=medium, spectrum=spectrum, resonances=table)


def resolve_omega(config: dict, particle: Particle) -> float:
    kind, value = parse_omega(config["source"]["omega"])
    if kind == "value":
        return value
    return particle.resonances.omega_for(value)


def make_source(config: dict, omega: float, position_nm=None) -> DipoleSource:
    position_nm = config["source"]["position_nm"] if position_nm is None else position_nm
    moment = np.asarray(config["source"]["moment"], dtype=float)
    moment = moment / np.linalg.norm(moment)
    return DipoleSource(position=tuple(float(c) * NM for c in position_nm),
                        moment=tuple(float(c) for c in moment), omega=float(omega))


def selected_modes(config: dict, n_modes: int | None = None) -> tuple[int, ...]:
    """Mode indices of the correction basis: explicit ``modes`` or 1..n_modes."""
    loc = config["localize"]
    if n_modes is not None:
        return tuple(range(1, n_modes + 1))
    if loc["modes"]:
        return tuple(sorted(set(loc["modes"])))
    return tuple(range(1, loc["n_modes"] + 1))


def imaging_grid(config: dict, curve: ParametricCurve) -> ImagingGrid:
    img = config["imaging"]
    center = [c * NM for c in img["window_center_nm"]]
    return make_grid(center, img["window_nm"] * NM / 2, img["grid"], curve=curve,
                     guard=img["guard_nm"] * NM)


def basis_images(config: dict, particle: Particle, k_m: complex, radius: float,
                 projector: BackProjector, omega: float, upto: int, log: RunLog) -> list[ImageGrid]:
    """Mode images 1..upto, through the on-disk cache when configured."""
    if upto == 0:
        return []
    cache_dir = config["run"]["cache_dir"]
    key = mode_image_key(particle.curve.to_dict(), particle.mesh.n, omega, radius,
                         projector.n_sensors, projector.grid, upto)
    cached = load_mode_images(cache_dir, key, projector.grid)
    if cached is not None:
        log.stage("mode_images", 0, n_modes=upto, cached=True)
        return cached
    with timed(log, "mode_images", n_modes=upto, cached=False):
        images = mode_images(particle.spectrum, particle.mesh, k_m, radius, projector.n_sensors,
                             projector.grid, upto, projector=projector)
    if cache_dir:
        save_mode_images(cache_dir, key, images)
    return images


def coupler_for(config: dict, particle: Particle, omega: float, images) -> ModalCoupler | None:
    """Coupler tying the amplitudes of ``images`` to the dipole, or None for free amplitudes."""
    if config["localize"]["amplitudes"] == "free" or not images:
        return None
    modes = [img.provenance["mode"] for img in images]
    return modal_coupler(particle.spectrum, particle.medium, omega, modes)


def build_scene(config: dict, log: RunLog, particle: Particle | None = None,
                with_modes: bool = True, data: FarFieldData | None = None) -> Scene:
    """Assemble the scene of ``config``.

    With ``data`` the frequency, sensor circle and back-projector are taken
    from the recorded far field instead of the config.
    """
    particle = particle or build_particle(config, log)
    omega = data.omega if data is not None else resolve_omega(config, particle)
    source = make_source(config, omega)
    k_m, _ = wavenumbers(particle.medium, omega)
    grid = imaging_grid(config, particle.curve)
    with timed(log, "back_projector", points=int(grid.points.shape[0])):
        if data is not None:
            radius = data.radius
            projector = BackProjector.for_data(data, grid)
        else:
            radius = config["discretization"]["radius_factor"] * particle.curve.delta
            projector = BackProjector.for_circle(k_m, radius, config["discretization"]["n_sensors"], grid)
    modes = selected_modes(config)
    images = ()
    if with_modes and modes:
        everything = basis_images(config, particle, k_m, radius, projector, omega, max(modes), log)
        images = tuple(everything[n - 1] for n in modes)
    with timed(log, "coupler", modes=len(images)):
        coupler = coupler_for(config, particle, omega, images)
    return Scene(config=config, particle=particle, source=source, k_m=k_m, radius=radius,
                 grid=grid, projector=projector, modes=modes, mode_images=images, coupler=coupler)


def forward_data(scene: Scene, source: DipoleSource | None = None,
                 log: RunLog | None = None) -> tuple[BiePair, FarFieldData]:
    """BIE densities and far-field data of ``source`` (default: the scene's source)."""
    source = source or scene.source
    p = scene.particle
    start = time.time()
    pair = solve_transmission(p.mesh, p.medium, source)
    data = measure(p.mesh, p.medium, source, pair, scene.radius, scene.n_sensors)
    if log is not None:
        log.stage("forward", int((time.time() - start) * 1000),
                  residual=pair.residual, condition=pair.condition)
    return pair, data


def problem_for(scene: Scene, data, images=(), coupler: ModalCoupler | None = None) -> LocalizationProblem:
    loc = scene.config["localize"]
    image = backpropagate(data, scene.grid, scene.projector)
    return LocalizationProblem(
        image=image, projector=scene.projector, mode_images=tuple(images), coupler=coupler,
        xatol_nm=loc["xatol_nm"], max_evaluations=loc["max_evaluations"],
        multistart=loc["multistart"],
    )


def localize_pair(scene: Scene, data, truth: DipoleSource | None, images=None) -> dict:
    """Uncorrected and mode-corrected fits of ``data`` with their errors."""
    if images is None:
        images, coupler = scene.mode_images, scene.coupler
    else:
        coupler = coupler_for(scene.config, scene.particle, scene.source.omega, images)
    base = problem_for(scene, data)
    uncorrected = fit_uncorrected(base)
    corrected = fit_corrected(replace(base, mode_images=tuple(images), coupler=coupler))
    return {
        "uncorrected": summarize(uncorrected, truth),
        "corrected": summarize(corrected, truth),
        "_results": (uncorrected, corrected),
        "_image": base.image,
    }


def summarize(result: LocalizationResult, truth: DipoleSource | None) -> dict:
    out = result.to_dict()
    if truth is not None:
        position, angle = error_metrics(result, truth)
        out["position_error_nm"] = position
        out["angle_error_deg"] = angle
    return out


def output_dir(config: dict) -> Path:
    path = Path(config["run"]["out"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(json.loads(canonical_json(public_view(obj))), indent=2, sort_keys=True)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def write_csv(path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_report(config: dict, experiment: str, payload: dict, files: list) -> dict:
    """Write report.json and manifest.json; return the run summary."""
    out = output_dir(config)
    report = {
        "experiment": experiment,
        "config_hash": config_hash(config),
        "constants": config["physics"],
        "config": config,
        **payload,
    }
    report_path = write_json(out / "report.json", report)
    written = [str(p) for p in files] + [str(report_path)]
    manifest = write_manifest(str(out), written, config)
    return {"out": str(out), "files": sorted(written) + [manifest], "report": public_view(payload)}


def require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)
