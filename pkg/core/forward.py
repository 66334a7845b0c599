"""Transmission problem for a point dipole near the particle.

Outside D the field is u = u_in + S^{k_m}[Psi], inside u = S^{k_D}[Phi].
Continuity of u and of (1/eps) du/dnu across the boundary gives the 2M x 2M
system

    [ S_m                 -S_D               ] [Psi]   [ -u_in               ]
    [ (I/2 + K_m*)/eps_m   (I/2 - K_D*)/eps_D ] [Phi] = [ -(du_in/dnu)/eps_m  ]

solved by a row-equilibrated LU factorization.
"""

import csv
import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import linalg

from core.errors import AccuracyWarning, ForwardSolveError
from core.geometry import BoundaryMesh, point_inside
from core.kernels import grad_gamma, hess_gamma
from core.potentials import (
    assemble_np_adjoint,
    assemble_single_layer,
    single_layer_matrix_offboundary,
    single_layer_on_curve,
)
from core.spectrum import (
    DrudeMedium,
    NpSpectrum,
    drude_epsilon,
    tau_n,
    wavenumbers,
)


MAX_CONDITION = 1e12
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class DipoleSource:
    """Unit dipole ``moment`` at ``position`` (meters) radiating at ``omega`` rad/s."""
    position: tuple[float, float]
    moment: tuple[float, float]
    omega: float

    def __post_init__(self):
        p = np.asarray(self.moment, dtype=float)
        if p.shape != (2,) or abs(np.linalg.norm(p) - 1.0) > 1e-9:
            raise ForwardSolveError(f"Dipole moment must be a unit 2-vector, got {self.moment}")
        if not self.omega > 0:
            raise ForwardSolveError(f"Source frequency must be positive, got {self.omega}")

    @property
    def z(self) -> np.ndarray:
        return np.asarray(self.position, dtype=float)

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.moment, dtype=float)

    def to_dict(self) -> dict:
        return {"position": list(self.position), "moment": list(self.moment), "omega": self.omega}


def check_source_outside(mesh: BoundaryMesh, source: DipoleSource) -> None:
    if point_inside(mesh.curve, source.z):
        raise ForwardSolveError(f"Dipole at {source.position} lies inside the particle")
    if np.min(np.hypot(*(mesh.nodes - source.z).T)) == 0:
        raise ForwardSolveError(f"Dipole at {source.position} lies on the particle boundary")


def incident_field(source: DipoleSource, k_m, x, moment=None) -> np.ndarray:
    """u_in(x) = grad Gamma^{k_m}(x - z*) . p*, for x of shape (..., 2)."""
    p = source.p if moment is None else np.asarray(moment)
    diff = np.asarray(x, dtype=float) - source.z
    if np.any(np.hypot(diff[..., 0], diff[..., 1]) == 0):
        raise ForwardSolveError("Incident field evaluated at the dipole position")
    return grad_gamma(k_m, diff) @ p


def incident_normal_derivative(source: DipoleSource, k_m, mesh: BoundaryMesh, moment=None) -> np.ndarray:
    """nu(x)^T D^2 Gamma^{k_m}(x - z*) p* at the boundary nodes."""
    p = source.p if moment is None else np.asarray(moment)
    hess = hess_gamma(k_m, mesh.nodes - source.z)
    return np.einsum("ic,icd,d->i", mesh.normals, hess, p)


@dataclass(frozen=True)
class BiePair:
    """Exterior (psi) and interior (phi) single-layer densities."""
    psi: np.ndarray
    phi: np.ndarray
    residual: float = 0.0
    condition: float = 1.0
    k_m: complex = 0j
    k_d: complex = 0j


def _transmission_blocks(mesh: BoundaryMesh, medium: DrudeMedium, omega: float):
    k_m, k_d = wavenumbers(medium, omega)
    eps_d = drude_epsilon(medium, omega)
    eye = np.eye(mesh.n) / 2
    S_m = assemble_single_layer(mesh, k_m).matrix
    S_d = assemble_single_layer(mesh, k_d).matrix
    K_m = assemble_np_adjoint(mesh, k_m).matrix
    K_d = assemble_np_adjoint(mesh, k_d).matrix
    A = np.block([
        [S_m, -S_d],
        [(eye + K_m) / medium.eps_m, (eye - K_d) / eps_d],
    ])
    return A, k_m, k_d


def solve_transmission(mesh: BoundaryMesh, medium: DrudeMedium, source: DipoleSource) -> BiePair:
    """Solve the boundary-integral transmission system for (Psi, Phi)."""
    check_source_outside(mesh, source)
    A, k_m, k_d = _transmission_blocks(mesh, medium, source.omega)
    rhs = np.concatenate([
        -incident_field(source, k_m, mesh.nodes),
        -incident_normal_derivative(source, k_m, mesh) / medium.eps_m,
    ])
    scale = 1.0 / np.abs(A).max(axis=1)
    A_eq = A * scale[:, None]
    b_eq = rhs * scale

    condition = float(np.linalg.cond(A_eq))
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise ForwardSolveError(
            f"Transmission system is ill-conditioned (cond ~ {condition:.2e}) at omega = {source.omega:.6e}"
        )
    solution = linalg.lu_solve(linalg.lu_factor(A_eq), b_eq)
    residual = float(np.linalg.norm(A_eq @ solution - b_eq) / np.linalg.norm(b_eq))
    if residual > RESIDUAL_TOL:
        warnings.warn(f"Transmission residual {residual:.2e} above {RESIDUAL_TOL:g}",
                      AccuracyWarning, stacklevel=2)
    M = mesh.n
    return BiePair(psi=solution[:M], phi=solution[M:], residual=residual,
                   condition=condition, k_m=k_m, k_d=k_d)


def scattered_field(mesh: BoundaryMesh, medium: DrudeMedium, source: DipoleSource,
                    pair: BiePair, x) -> np.ndarray:
    """S^{k_m}[Psi](x) outside the particle."""
    k_m, _ = wavenumbers(medium, source.omega)
    x = np.asarray(x, dtype=float)
    values = single_layer_matrix_offboundary(mesh, k_m, x.reshape(-1, 2)) @ pair.psi
    return values.reshape(x.shape[:-1])


@dataclass(frozen=True)
class FarFieldData:
    """Complex samples of u on the sensor circle of radius ``radius``."""
    angles: np.ndarray
    values: np.ndarray
    radius: float
    omega: float
    k_m: complex
    sigma0: float = 0.0
    metadata: dict = field(default_factory=dict)

    @property
    def n_sensors(self) -> int:
        return self.angles.size

    @property
    def positions(self) -> np.ndarray:
        return self.radius * np.stack([np.cos(self.angles), np.sin(self.angles)], axis=-1)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid weights of the sensor circle."""
        return np.full(self.n_sensors, 2 * np.pi * self.radius / self.n_sensors)

    def with_values(self, values, **changes) -> "FarFieldData":
        return replace(self, values=np.asarray(values, dtype=complex), **changes)


def sensor_angles(n_sensors: int) -> np.ndarray:
    if n_sensors < 1:
        raise ForwardSolveError(f"Need at least one sensor, got {n_sensors}")
    return 2 * np.pi * np.arange(n_sensors) / n_sensors


def measure(mesh: BoundaryMesh, medium: DrudeMedium, source: DipoleSource, pair: BiePair | None,
            radius: float, n_sensors: int) -> FarFieldData:
    """Sample u = u_in + S^{k_m}[Psi] on the measurement circle."""
    k_m, _ = wavenumbers(medium, source.omega)
    angles = sensor_angles(n_sensors)
    data = FarFieldData(angles=angles, values=np.zeros(n_sensors, dtype=complex),
                        radius=float(radius), omega=source.omega, k_m=k_m)
    values = incident_field(source, k_m, data.positions)
    if pair is not None:
        values = values + scattered_field(mesh, medium, source, pair, data.positions)
    return data.with_values(values, metadata={
        "shape": mesh.curve.to_dict(), "M": mesh.n, "source": source.to_dict(),
    })


def free_dipole_data(source: DipoleSource, k_m, radius: float, n_sensors: int) -> FarFieldData:
    """Far field of the dipole alone (no particle)."""
    angles = sensor_angles(n_sensors)
    data = FarFieldData(angles=angles, values=np.zeros(n_sensors, dtype=complex),
                        radius=float(radius), omega=source.omega, k_m=complex(k_m))
    return data.with_values(incident_field(source, k_m, data.positions),
                            metadata={"shape": None, "source": source.to_dict()})


@dataclass(frozen=True)
class ModalCoupler:
    """Couplings alpha_n(z, p) for a fixed spectrum, medium, frequency and mode set.

    alpha_n = <F, phi_n>_{H*} / tau_n with
    F = -(1/eps_m) du_in/dnu - (1/eps_D)(I/2 - K_D*) (S^{k_D})^{-1} u_in.
    F is linear in u_in and du_in/dnu, so both terms fold into two M x N
    matrices once; each dipole position then costs one gradient and one
    Hessian evaluation on the nodes.
    """
    mesh: BoundaryMesh
    modes: tuple[int, ...]
    omega: float
    k_m: complex
    direct: np.ndarray
    interior: np.ndarray

    def unit_couplings(self, position) -> np.ndarray:
        """N x 2 matrix whose columns are alpha(z, e_x) and alpha(z, e_y)."""
        diff = self.mesh.nodes - np.asarray(position, dtype=float)
        if np.min(np.hypot(diff[:, 0], diff[:, 1])) == 0:
            raise ForwardSolveError(f"Dipole at {tuple(position)} lies on the particle boundary")
        u_in = grad_gamma(self.k_m, diff)
        du_in = np.einsum("ic,icd->id", self.mesh.normals, hess_gamma(self.k_m, diff))
        return -(du_in.T @ self.direct + u_in.T @ self.interior).T

    def couplings(self, position, moment) -> np.ndarray:
        return self.unit_couplings(position) @ np.asarray(moment, dtype=float)


def modal_coupler(spectrum: NpSpectrum, medium: DrudeMedium, omega: float, modes) -> ModalCoupler:
    mesh = spectrum.mesh
    modes = tuple(int(n) for n in modes)
    k_m, k_d = wavenumbers(medium, omega)
    eps_d = drude_epsilon(medium, omega)
    floor = 1e-14 * abs(1 / eps_d - 1 / medium.eps_m)
    taus = np.array([tau_n(spectrum, medium, omega, n) for n in modes], dtype=complex)
    for n, tau in zip(modes, taus):
        if abs(tau) <= floor:
            raise ForwardSolveError(f"tau_{n}(omega) vanishes at omega = {omega:.6e}; coupling diverges")

    projected = spectrum.metric.gram @ spectrum.densities[:, list(modes)] if modes else np.zeros((mesh.n, 0))
    S_d = assemble_single_layer(mesh, k_d).matrix
    K_d = assemble_np_adjoint(mesh, k_d).matrix
    # (I/2 - K_D*) S_D^{-1} moved onto the projected modes by transposition
    interior = linalg.lu_solve(linalg.lu_factor(S_d), (0.5 * np.eye(mesh.n) - K_d).T @ projected, trans=1)
    return ModalCoupler(
        mesh=mesh, modes=modes, omega=float(omega), k_m=k_m,
        direct=projected / (medium.eps_m * taus),
        interior=interior / (eps_d * taus),
    )


def compute_couplings(spectrum: NpSpectrum, mesh: BoundaryMesh, medium: DrudeMedium,
                      source: DipoleSource, modes) -> np.ndarray:
    """alpha_n = <F, phi_n>_{H*} / tau_n(omega) for each n in ``modes``."""
    if mesh is not spectrum.mesh:
        raise ForwardSolveError("Spectrum was computed on a different mesh")
    check_source_outside(mesh, source)
    coupler = modal_coupler(spectrum, medium, source.omega, modes)
    return coupler.couplings(source.z, source.p).astype(complex)


def compute_coupling(spectrum: NpSpectrum, mesh: BoundaryMesh, medium: DrudeMedium,
                     source: DipoleSource, n: int) -> complex:
    return complex(compute_couplings(spectrum, mesh, medium, source, [n])[0])


def modal_scattered_field(spectrum: NpSpectrum, mesh: BoundaryMesh, medium: DrudeMedium,
                          source: DipoleSource, n_modes: int, x) -> np.ndarray:
    """sum_{n=1}^{N} alpha_n e_n(x)."""
    x = np.asarray(x, dtype=float)
    pts = x.reshape(-1, 2)
    if n_modes == 0:
        return np.zeros(x.shape[:-1], dtype=complex)
    if n_modes >= spectrum.count:
        raise ForwardSolveError(f"Only {spectrum.count - 1} modes retained, asked for {n_modes}")
    modes = list(range(1, n_modes + 1))
    k_m, _ = wavenumbers(medium, source.omega)
    alphas = compute_couplings(spectrum, mesh, medium, source, modes)
    fields = single_layer_matrix_offboundary(mesh, k_m, pts) @ spectrum.densities[:, modes]
    return (fields @ alphas).reshape(x.shape[:-1])


def modal_field(spectrum: NpSpectrum, mesh: BoundaryMesh, medium: DrudeMedium,
                source: DipoleSource, n_modes: int, x) -> np.ndarray:
    """Truncated modal approximation u_in(x) + sum_{n=1}^{N} alpha_n e_n(x)."""
    k_m, _ = wavenumbers(medium, source.omega)
    u_in = incident_field(source, k_m, x)
    if n_modes == 0:
        return u_in
    return u_in + modal_scattered_field(spectrum, mesh, medium, source, n_modes, x)


def modal_mismatch(spectrum: NpSpectrum, mesh: BoundaryMesh, medium: DrudeMedium,
                   source: DipoleSource, pair: BiePair, n_modes: int, x) -> float:
    """Relative L2 mismatch of the modal scattered field against S^{k_m}[Psi] at x."""
    reference = scattered_field(mesh, medium, source, pair, x)
    modal = modal_scattered_field(spectrum, mesh, medium, source, n_modes, x)
    return float(np.linalg.norm(modal - reference) / np.linalg.norm(reference))


def boundary_mismatch(mesh: BoundaryMesh, medium: DrudeMedium, source: DipoleSource,
                      pair: BiePair, t=None) -> float:
    """Relative jump of u across the boundary at curve parameters ``t``.

    Compares u_in + S^{k_m}[Psi] with S^{k_D}[Phi] between the nodes (at the
    parameter midpoints by default), where the Nystrom system does not
    enforce continuity directly.
    """
    if t is None:
        t = mesh.theta + mesh.h / 2
    t = np.atleast_1d(np.asarray(t, dtype=float))
    k_m, k_d = wavenumbers(medium, source.omega)
    z = mesh.curve.position(t)
    pts = np.stack([z.real, z.imag], axis=-1)
    outside = incident_field(source, k_m, pts) + single_layer_on_curve(mesh, k_m, t) @ pair.psi
    inside = single_layer_on_curve(mesh, k_d, t) @ pair.phi
    return float(np.linalg.norm(outside - inside) / np.linalg.norm(outside))


# ============================================================
# CSV + JSON sidecar
# ============================================================

def write_far_field(path, data: FarFieldData) -> tuple[Path, Path]:
    """Write ``path`` (CSV: angle, re_u, im_u) and ``path`` with .json sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["angle", "re_u", "im_u"])
        for angle, value in zip(data.angles, data.values):
            writer.writerow([repr(float(angle)), repr(float(value.real)), repr(float(value.imag))])
    sidecar = path.with_suffix(".json")
    meta = {
        "omega": data.omega,
        "radius": data.radius,
        "n_sensors": data.n_sensors,
        "sigma0": data.sigma0,
        "k_m": [data.k_m.real, data.k_m.imag],
        **data.metadata,
    }
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path, sidecar


def read_far_field(path) -> FarFieldData:
    path = Path(path)
    sidecar = path.with_suffix(".json")
    if not sidecar.exists():
        raise ForwardSolveError(f"Missing metadata sidecar {sidecar}")
    meta = json.loads(sidecar.read_text(encoding="utf-8"))
    angles, values = [], []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        for row in reader:
            angles.append(float(row["angle"]))
            values.append(complex(float(row["re_u"]), float(row["im_u"])))
    if not angles:
        raise ForwardSolveError(f"{path}: no samples")
    extra = {k: v for k, v in meta.items()
             if k not in ("omega", "radius", "n_sensors", "sigma0", "k_m")}
    return FarFieldData(
        angles=np.asarray(angles), values=np.asarray(values, dtype=complex),
        radius=float(meta["radius"]), omega=float(meta["omega"]),
        k_m=complex(*meta["k_m"]), sigma0=float(meta.get("sigma0", 0.0)), metadata=extra,
    )
