"""Neumann-Poincare spectrum, Drude dispersion and plasmonic resonances.

The static NP adjoint K* is self-adjoint in H*(dD), so the eigenproblem is
solved as the symmetric-definite pencil (G K*, G) with G the H* Gram matrix.
Mode 0 is the equilibrium density (lambda_0 = 1/2). In two dimensions the
rest of the spectrum comes in pairs +-lambda; modes are numbered by
descending |lambda| with each pair listed -lambda first, and inside a
degenerate cluster the partners alternate (-a, +a, -b, +b). On the rounded
diamond this puts the two dipolar modes with lambda > 0 at indices 4 and 6.
"""

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg, optimize

from core.errors import AccuracyWarning, ResonanceNotice, SpectrumError
from core.geometry import BoundaryMesh
from core.kernels import check_wavenumber
from core.potentials import (
    BoundaryOperator,
    HStarMetric,
    assemble_np_adjoint,
    calderon_residual,
    eval_single_layer_offboundary,
    hstar_metric,
)

EPS0 = 8.854187128e-12
MU0 = 4e-7 * np.pi

DEFAULT_N_EIG = 16
# Discrete spectrum may leave [-1/2, 1/2] by this much before we give up.
SPECTRUM_SLACK = 1e-4
# Eigenvalues closer than this are treated as one degenerate cluster.
CLUSTER_TOL = 1e-9
# |lambda| values closer than this form one +-pair group.
PAIR_TOL = 1e-7
# Imaginary parts above this are reported before truncation.
IMAG_TOL = 1e-6
# Fourier test functions used to fix a basis inside degenerate clusters.
_CANON_ORDERS = 16


@dataclass(frozen=True)
class DrudeMedium:
    """Drude particle in a homogeneous background (SI units)."""
    omega_p: float = 2e15
    tau: float = 1e-14
    eps0: float = EPS0
    eps_m: float = EPS0
    mu_m: float = MU0

    @property
    def light_speed(self) -> float:
        return float(1.0 / np.sqrt(self.eps_m * self.mu_m))

    @classmethod
    def from_config(cls, block: dict) -> "DrudeMedium":
        eps0 = float(block.get("eps0", EPS0))
        return cls(
            omega_p=float(block.get("omega_p", 2e15)),
            tau=float(block.get("tau", 1e-14)),
            eps0=eps0,
            eps_m=float(block.get("eps_m", eps0)),
            mu_m=float(block.get("mu_m", block.get("mu0", MU0))),
        )

    def to_dict(self) -> dict:
        return {
            "omega_p": self.omega_p, "tau": self.tau, "eps0": self.eps0,
            "eps_m": self.eps_m, "mu_m": self.mu_m,
        }


def _check_omega(omega) -> float:
    omega = float(omega)
    if not np.isfinite(omega) or omega <= 0:
        raise SpectrumError(f"Angular frequency must be positive, got {omega}")
    return omega


def drude_epsilon(medium: DrudeMedium, omega) -> complex:
    """eps_D(omega) = eps0 (1 - omega_p^2 / (omega (omega + i/tau)))."""
    omega = _check_omega(omega)
    return complex(medium.eps0 * (1 - medium.omega_p ** 2 / (omega * (omega + 1j / medium.tau))))


def contrast_lambda(medium: DrudeMedium, omega) -> complex:
    """lambda(omega) = (eps_m + eps_D) / (2 (eps_m - eps_D))."""
    eps_d = drude_epsilon(medium, omega)
    if eps_d == medium.eps_m:
        raise SpectrumError("Particle and background permittivities coincide; contrast undefined")
    return (medium.eps_m + eps_d) / (2 * (medium.eps_m - eps_d))


def wavenumbers(medium: DrudeMedium, omega) -> tuple[complex, complex]:
    """(k_m, k_D) with the principal square root, so Im k_D > 0."""
    omega = _check_omega(omega)
    k_m = check_wavenumber(omega * np.sqrt(medium.eps_m * medium.mu_m))
    k_d = check_wavenumber(omega * np.sqrt(complex(drude_epsilon(medium, omega) * medium.mu_m)))
    return k_m, k_d


@dataclass(frozen=True)
class NpSpectrum:
    """Retained NP eigenpairs; ``densities[:, n]`` is phi_n, H*-orthonormal."""
    eigenvalues: np.ndarray
    densities: np.ndarray
    metric: HStarMetric
    mesh: BoundaryMesh

    @property
    def count(self) -> int:
        return self.eigenvalues.size

    def density(self, n: int) -> np.ndarray:
        self.check_index(n)
        return self.densities[:, n]

    def check_index(self, n: int) -> None:
        if not 0 <= n < self.count:
            raise SpectrumError(f"Mode index {n} outside retained spectrum 0..{self.count - 1}")

    def gram(self) -> np.ndarray:
        """H* Gram matrix of the retained densities."""
        V = self.densities
        return V.T @ self.metric.gram @ V

    def to_records(self) -> list[dict]:
        return [{"mode": n, "lambda": float(lam)} for n, lam in enumerate(self.eigenvalues)]


def _pair_groups(magnitudes: np.ndarray) -> list[np.ndarray]:
    """Runs of a descending |lambda| sequence that agree within PAIR_TOL."""
    groups, start = [], 0
    for i in range(1, magnitudes.size + 1):
        if i == magnitudes.size or magnitudes[i - 1] - magnitudes[i] > PAIR_TOL:
            groups.append(np.arange(start, i))
            start = i
    return groups


def _order(values: np.ndarray) -> np.ndarray:
    """lambda_0 first, then descending |lambda|; inside a +-pair group, ascending lambda."""
    i0 = int(np.argmin(np.abs(values - 0.5)))
    rest = np.array([i for i in range(values.size) if i != i0], dtype=int)
    rest = rest[np.argsort(-np.abs(values[rest]), kind="stable")]
    ordered = [i0]
    for group in _pair_groups(np.abs(values[rest])):
        members = rest[group]
        ordered.extend(members[np.argsort(values[members], kind="stable")])
    return np.asarray(ordered, dtype=int)


def _interleave(values: np.ndarray) -> np.ndarray:
    """Alternate the -lambda and +lambda members of every pair group.

    ``values`` is already in ``_order`` order, so a group reads -a, -b, +a, +b
    and becomes -a, +a, -b, +b.
    """
    perm = [0]
    for group in _pair_groups(np.abs(values[1:])):
        members = group + 1
        neg = [int(i) for i in members if values[i] < 0]
        pos = [int(i) for i in members if values[i] >= 0]
        for j in range(max(len(neg), len(pos))):
            perm.extend(side[j] for side in (neg, pos) if j < len(side))
    return np.asarray(perm, dtype=int)


def _test_functions(mesh: BoundaryMesh) -> np.ndarray:
    m = np.arange(1, _CANON_ORDERS + 1)
    t = mesh.theta[:, None] * m[None, :]
    return np.concatenate([np.cos(t), np.sin(t)], axis=1)


def _canonicalize(values: np.ndarray, vectors: np.ndarray, mesh: BoundaryMesh) -> np.ndarray:
    """Fix an orthonormal basis inside each degenerate cluster and every sign."""
    vectors = vectors.copy()
    tests = _test_functions(mesh) * mesh.weights[:, None]
    n = values.size
    start = 1
    while start < n:
        stop = start + 1
        while stop < n and abs(values[stop] - values[start]) < CLUSTER_TOL:
            stop += 1
        block = vectors[:, start:stop]
        if stop - start > 1:
            overlaps = tests.T @ block
            Q, R, _ = linalg.qr(overlaps.T, pivoting=True)
            diag = np.diag(R)
            signs = np.where(diag < 0, -1.0, 1.0)
            if signs.size < Q.shape[1]:
                signs = np.concatenate([signs, np.ones(Q.shape[1] - signs.size)])
            vectors[:, start:stop] = block @ (Q * signs[None, :])
        else:
            col = block[:, 0]
            if col[np.argmax(np.abs(col))] < 0:
                vectors[:, start] = -col
        start = stop
    w = mesh.weights
    if w @ vectors[:, 0] < 0:
        vectors[:, 0] = -vectors[:, 0]
    return vectors


def _hstar_gram_schmidt(vectors: np.ndarray, gram: np.ndarray) -> np.ndarray:
    out = np.array(vectors, dtype=float)
    for j in range(out.shape[1]):
        for i in range(j):
            out[:, j] -= (out[:, i] @ gram @ out[:, j]) * out[:, i]
        norm = np.sqrt(out[:, j] @ gram @ out[:, j])
        if norm <= 0:
            raise SpectrumError("H* Gram-Schmidt met a null vector; H* metric is not positive")
        out[:, j] /= norm
    return out


def _solve_pencil(K: np.ndarray, G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    A = G @ K
    A = 0.5 * (A + A.T)
    try:
        return linalg.eigh(A, G)
    except linalg.LinAlgError:
        pass  # G not numerically positive definite, use the nonsymmetric route
    values, vectors = linalg.eig(K)
    spurious = np.abs(values.imag).max()
    if spurious > IMAG_TOL:
        warnings.warn(
            f"NP eigenvalues carry imaginary parts up to {spurious:.2e}; truncated to real",
            AccuracyWarning, stacklevel=3,
        )
    values = values.real
    order = np.argsort(-values)
    return values[order], _hstar_gram_schmidt(vectors[:, order].real, G)


def eig_np(static_np: BoundaryOperator, metric: HStarMetric, n_eig: int = DEFAULT_N_EIG) -> NpSpectrum:
    """H*-orthonormal eigenpairs of the static NP adjoint, mode 0 first."""
    if static_np.mesh is not metric.mesh:
        raise SpectrumError("NP operator and H* metric live on different meshes")
    if n_eig < 1:
        raise SpectrumError(f"Retained spectrum size must be >= 1, got {n_eig}")
    K = static_np.matrix.real
    values, vectors = _solve_pencil(K, metric.gram)

    if values.max() > 0.5 + SPECTRUM_SLACK or values.min() < -0.5 - SPECTRUM_SLACK:
        raise SpectrumError(
            f"Discrete NP spectrum [{values.min():.6f}, {values.max():.6f}] leaves [-1/2, 1/2]; "
            "discretization too coarse"
        )
    order = _order(values)
    values = values[order]
    vectors = vectors[:, order]
    if abs(values[0] - 0.5) > 1e-6:
        raise SpectrumError(f"lambda_0 = {values[0]:.9f} is not 1/2")

    vectors = _canonicalize(values, vectors, metric.mesh)
    perm = _interleave(values)
    values = values[perm]
    vectors = vectors[:, perm]
    n_eig = min(int(n_eig), values.size)
    values = values[:n_eig].copy()
    vectors = np.ascontiguousarray(vectors[:, :n_eig])
    values.flags.writeable = False
    vectors.flags.writeable = False
    return NpSpectrum(eigenvalues=values, densities=vectors, metric=metric, mesh=metric.mesh)


def compute_spectrum(mesh: BoundaryMesh, n_eig: int = DEFAULT_N_EIG, residual_tol: float = 1e-8) -> NpSpectrum:
    """Assemble K*, the H* metric, check the Calderon identity and eigensolve."""
    np_adjoint = assemble_np_adjoint(mesh, 0)
    metric = hstar_metric(mesh, np_adjoint)
    residual = calderon_residual(metric, np_adjoint)
    if residual > residual_tol:
        warnings.warn(
            f"Calderon residual {residual:.2e} exceeds {residual_tol:g}; refine the mesh",
            AccuracyWarning, stacklevel=2,
        )
    return eig_np(np_adjoint, metric, n_eig)


TauCorrection = Callable[[int, float], complex]


def _tau_leading(medium: DrudeMedium, omega: float, lam_n: float) -> complex:
    prefactor = 1 / drude_epsilon(medium, omega) - 1 / medium.eps_m
    if prefactor == 0:
        return 0j
    return prefactor * (contrast_lambda(medium, omega) - lam_n)


def tau_n(spectrum: NpSpectrum, medium: DrudeMedium, omega, n: int,
          correction: TauCorrection | None = None) -> complex:
    """Spectral denominator tau_n(omega).

    Leading order (1/eps_D - 1/eps_m)(lambda(omega) - lambda_n). When a
    ``correction`` provider is given, (omega delta/c)^2 log(omega delta/c)
    times its tau_{n,1} value is added.
    """
    spectrum.check_index(n)
    value = _tau_leading(medium, omega, float(spectrum.eigenvalues[n]))
    if correction is not None:
        x = omega * spectrum.mesh.curve.delta / medium.light_speed
        value += x ** 2 * np.log(x) * complex(correction(n, omega))
    return complex(value)


@dataclass(frozen=True)
class ResonanceEntry:
    mode: int
    omega: float
    eigenvalue: float
    tau_abs: float


@dataclass(frozen=True)
class ResonanceTable:
    entries: tuple[ResonanceEntry, ...] = ()
    omega_range: tuple[float, float] = (0.0, 0.0)
    omitted: tuple[int, ...] = field(default=())

    def omega_for(self, n: int) -> float:
        for entry in self.entries:
            if entry.mode == n:
                return entry.omega
        raise SpectrumError(
            f"Mode {n} has no resonance in [{self.omega_range[0]:.4e}, {self.omega_range[1]:.4e}] rad/s"
        )

    def to_records(self) -> list[dict]:
        return [
            {"mode": e.mode, "lambda": e.eigenvalue, "omega": e.omega, "tau_abs": e.tau_abs}
            for e in self.entries
        ]


def default_omega_range(medium: DrudeMedium) -> tuple[float, float]:
    return (0.2 * medium.omega_p, 0.99 * medium.omega_p)


def find_resonances(spectrum: NpSpectrum, medium: DrudeMedium,
                    omega_range: tuple[float, float] | None = None) -> ResonanceTable:
    """Solve Re lambda(omega) = lambda_n for every retained mode n >= 1.

    Mode 0 (lambda_0 = 1/2) never resonates and is skipped. Modes without a
    sign change of Re lambda(omega) - lambda_n over the range are omitted
    with a ResonanceNotice.
    """
    lo, hi = omega_range or default_omega_range(medium)
    lo, hi = _check_omega(lo), _check_omega(hi)
    if hi <= lo:
        raise SpectrumError(f"Empty frequency range [{lo}, {hi}]")
    entries = []
    omitted = []
    for n in range(1, spectrum.count):
        lam_n = float(spectrum.eigenvalues[n])

        def f(omega, lam_n=lam_n):
            return contrast_lambda(medium, omega).real - lam_n

        f_lo, f_hi = f(lo), f(hi)
        if f_lo * f_hi > 0:
            omitted.append(n)
            warnings.warn(
                f"Mode {n} (lambda = {lam_n:.6f}) has no resonance in [{lo:.4e}, {hi:.4e}] rad/s",
                ResonanceNotice, stacklevel=2,
            )
            continue
        omega_n = optimize.brentq(f, lo, hi, xtol=1e-12 * medium.omega_p, rtol=4 * np.finfo(float).eps)
        entries.append(ResonanceEntry(
            mode=n, omega=float(omega_n), eigenvalue=lam_n,
            tau_abs=abs(tau_n(spectrum, medium, omega_n, n)),
        ))
    return ResonanceTable(entries=tuple(entries), omega_range=(lo, hi), omitted=tuple(omitted))


def mode_field(spectrum: NpSpectrum, mesh: BoundaryMesh, k_m, n: int, x) -> np.ndarray:
    """Radiating mode e_n(x) = S_D^{k_m}[phi_n](x) outside the particle."""
    if mesh is not spectrum.mesh:
        raise SpectrumError("Spectrum was computed on a different mesh")
    return eval_single_layer_offboundary(mesh, k_m, spectrum.density(n), x)


def spectrum_report(spectrum: NpSpectrum, table: ResonanceTable) -> dict:
    """JSON-ready eigenvalue list and resonance table."""
    return {
        "eigenvalues": spectrum.to_records(),
        "resonances": table.to_records(),
        "omitted_modes": list(table.omitted),
        "omega_range": list(table.omega_range),
    }
