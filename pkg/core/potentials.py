"""Discrete layer potentials on a BoundaryMesh.

Nystrom matrices act on nodal density values. The single layer and the
Helmholtz Neumann-Poincare adjoint have logarithmic kernel singularities and
are discretized with the periodic product quadrature that splits

    K(t, s) = L(t, s) ln(4 sin^2((t - s)/2)) + N(t, s)

with L and N smooth; the log factor is integrated exactly against the
trigonometric interpolant of L (Fourier weights), N by the trapezoid rule.
The static NP adjoint has a smooth kernel and needs only its diagonal limit.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from core.errors import AccuracyWarning, QuadratureError, SpectrumError
from core.geometry import BoundaryMesh
from core.kernels import bessel_j, check_wavenumber, euler_gamma_eta, gamma_r, gamma_radial


# Off-boundary evaluation closer than this many local node spacings is flagged.
OFFBOUNDARY_GUARD = 5.0

# phi_0 must be isolated within this distance of 1/2.
PHI0_TOLERANCE = 1e-6


@dataclass(frozen=True)
class BoundaryOperator:
    """Dense M x M Nystrom matrix with the mesh it lives on."""
    matrix: np.ndarray
    mesh: BoundaryMesh
    tag: str

    def __matmul__(self, density):
        return self.matrix @ density

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


@dataclass(frozen=True)
class HStarMetric:
    """Gram matrix of <u, v>_{H*} = -<S~[v], u> and the equilibrium density."""
    gram: np.ndarray
    phi0: np.ndarray
    mesh: BoundaryMesh
    s_tilde: BoundaryOperator


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def kress_weights(M: int) -> np.ndarray:
    """First column of the circulant log-quadrature matrix for 2n = M nodes.

    R(d) = -(2pi/n) sum_{m=1}^{n-1} cos(m d pi/n)/m - (pi/n^2) cos(d pi).
    """
    n = M // 2
    d = np.arange(M)
    m = np.arange(1, n)
    series = (np.cos(np.outer(d, m) * np.pi / n) / m).sum(axis=1)
    return -(2 * np.pi / n) * series - (np.pi / n ** 2) * np.cos(d * np.pi)


def _log_quadrature(M: int) -> np.ndarray:
    return linalg.circulant(kress_weights(M))


def _pairwise(mesh: BoundaryMesh):
    """Node differences, distances and log(4 sin^2) table.

    The distance diagonal holds the local element length so that kernels
    evaluated there stay finite for complex k; those entries are overwritten
    by the diagonal limits.
    """
    diff = mesh.nodes[:, None, :] - mesh.nodes[None, :, :]
    r = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(r, mesh.weights)
    dt = mesh.theta[:, None] - mesh.theta[None, :]
    s2 = 4 * np.sin(dt / 2) ** 2
    np.fill_diagonal(s2, 1.0)
    return diff, r, np.log(s2)


def assemble_single_layer(mesh: BoundaryMesh, k) -> BoundaryOperator:
    """S_D^k on the boundary, spectrally accurate for analytic curves."""
    k = check_wavenumber(k)
    M = mesh.n
    _, r, log_s2 = _pairwise(mesh)
    speed = mesh.speed
    full = gamma_r(k, r) * speed[None, :]

    j0 = np.ones_like(r, dtype=complex) if k == 0 else bessel_j(0, k * r) + 0j
    L = j0 * speed[None, :] / (4 * np.pi)
    np.fill_diagonal(L, speed / (4 * np.pi))
    N = full - L * log_s2
    np.fill_diagonal(N, speed * (euler_gamma_eta(k) + np.log(speed) / (2 * np.pi)))

    matrix = _log_quadrature(M) * L + mesh.h * N
    tag = "single-layer-0" if k == 0 else f"single-layer-k({k.real:.6g}{k.imag:+.6g}j)"
    return BoundaryOperator(_freeze(matrix), mesh, tag)


def assemble_np_adjoint(mesh: BoundaryMesh, k) -> BoundaryOperator:
    """K_D^{k,*}[phi](x) = p.v. integral of d Gamma^k(x - y)/d nu(x) phi(y) dsigma(y)."""
    k = check_wavenumber(k)
    M = mesh.n
    diff, r, log_s2 = _pairwise(mesh)
    speed = mesh.speed
    nu = mesh.normals
    dot = np.einsum("ijc,ic->ij", diff, nu)
    diagonal = mesh.curvature * speed / (4 * np.pi)

    if k == 0:
        N = dot / (2 * np.pi * r ** 2) * speed[None, :] + 0j
        np.fill_diagonal(N, diagonal)
        matrix = mesh.h * N
        return BoundaryOperator(_freeze(matrix), mesh, "np-adjoint-0")

    full = gamma_radial(k, r) * dot * speed[None, :]
    L = -(k / (4 * np.pi)) * bessel_j(1, k * r) * dot / r * speed[None, :]
    np.fill_diagonal(L, 0.0)
    N = full - L * log_s2
    np.fill_diagonal(N, diagonal)
    matrix = _log_quadrature(M) * L + mesh.h * N
    return BoundaryOperator(_freeze(matrix), mesh, f"np-adjoint-k({k.real:.6g}{k.imag:+.6g}j)")


def assemble_np(np_adjoint: BoundaryOperator) -> BoundaryOperator:
    """Static K_D as the weighted-L2 adjoint W^-1 (K*)^T W of a static K*."""
    w = np_adjoint.mesh.weights
    matrix = (np_adjoint.matrix.T * w[None, :]) / w[:, None]
    return BoundaryOperator(_freeze(matrix), np_adjoint.mesh, "np-0")


def equilibrium_density(np_adjoint: BoundaryOperator) -> np.ndarray:
    """phi_0: eigenvector of the static K* for eigenvalue 1/2 with integral 1."""
    values, vectors = linalg.eig(np_adjoint.matrix)
    idx = int(np.argmin(np.abs(values - 0.5)))
    if abs(values[idx] - 0.5) > PHI0_TOLERANCE:
        raise SpectrumError(
            f"No eigenvalue within {PHI0_TOLERANCE:g} of 1/2 (closest {values[idx]:.3e}); refine the mesh"
        )
    phi0 = vectors[:, idx]
    phi0 = phi0 / (np_adjoint.mesh.weights @ phi0)
    # real up to roundoff once the complex phase is normalized away
    return np.ascontiguousarray(phi0.real)


def assemble_s_tilde(single_layer: BoundaryOperator, phi0: np.ndarray) -> BoundaryOperator:
    """Invertible S~_D: equals S_D on mean-free densities, sends phi_0 to -1."""
    if not single_layer.tag.startswith("single-layer-0"):
        raise QuadratureError("S~ is built from the static single layer")
    w = single_layer.mesh.weights
    M = single_layer.mesh.n
    if phi0.shape != (M,):
        raise QuadratureError("phi_0 does not live on the single-layer mesh")
    projector = np.eye(M) - np.outer(phi0, w)
    matrix = single_layer.matrix @ projector - np.outer(np.ones(M), w)
    return BoundaryOperator(_freeze(matrix), single_layer.mesh, "s-tilde")


def hstar_metric(mesh: BoundaryMesh, np_adjoint: BoundaryOperator | None = None) -> HStarMetric:
    """Assemble S~ and the H* Gram matrix G = -W S~ (symmetrized)."""
    if np_adjoint is None:
        np_adjoint = assemble_np_adjoint(mesh, 0)
    phi0 = equilibrium_density(np_adjoint)
    s_tilde = assemble_s_tilde(assemble_single_layer(mesh, 0), phi0)
    gram = -(mesh.weights[:, None] * s_tilde.matrix).real
    gram = 0.5 * (gram + gram.T)
    return HStarMetric(gram=_freeze(gram), phi0=_freeze(phi0), mesh=mesh, s_tilde=s_tilde)


def hstar_inner(metric: HStarMetric, u, v) -> complex:
    """<u, v>_{H*}, linear in u and antilinear in v."""
    u = np.asarray(u)
    v = np.asarray(v)
    M = metric.mesh.n
    if u.shape != (M,) or v.shape != (M,):
        raise QuadratureError(f"Densities must have shape ({M},), got {u.shape} and {v.shape}")
    return complex(u @ metric.gram @ np.conj(v))


def calderon_residual(metric: HStarMetric, np_adjoint: BoundaryOperator) -> float:
    """||S~ K* - K S~|| / ||S~|| in the spectral norm."""
    s = metric.s_tilde.matrix
    k_static = assemble_np(np_adjoint).matrix
    lhs = s @ np_adjoint.matrix - k_static @ s
    return float(np.linalg.norm(lhs, 2) / np.linalg.norm(s, 2))


def assemble_s_hat(mesh: BoundaryMesh, k) -> BoundaryOperator:
    """Small-k model S_D^0 + eta_k * integral, diagnostic only."""
    k = check_wavenumber(k)
    S0 = assemble_single_layer(mesh, 0).matrix
    matrix = S0 + euler_gamma_eta(k) * np.outer(np.ones(mesh.n), mesh.weights)
    return BoundaryOperator(_freeze(matrix), mesh, "s-hat-k")


def single_layer_matrix_offboundary(mesh: BoundaryMesh, k, points) -> np.ndarray:
    """P x M matrix mapping a density to S_D^k values at off-boundary points."""
    k = check_wavenumber(k)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[-1] != 2:
        raise QuadratureError("Evaluation points must have a trailing dimension of size 2")
    diff = pts[:, None, :] - mesh.nodes[None, :, :]
    r = np.hypot(diff[..., 0], diff[..., 1])
    nearest = r.argmin(axis=1)
    dist = r[np.arange(len(pts)), nearest]
    if np.any(dist == 0):
        raise QuadratureError("Evaluation point coincides with a boundary node")
    close = dist < OFFBOUNDARY_GUARD * mesh.spacing[nearest]
    if np.any(close):
        warnings.warn(
            f"{int(close.sum())} evaluation point(s) within {OFFBOUNDARY_GUARD:g} node spacings "
            "of the boundary; single-layer accuracy is degraded",
            AccuracyWarning, stacklevel=2,
        )
    return gamma_r(k, r) * mesh.weights[None, :]


def eval_single_layer_offboundary(mesh: BoundaryMesh, k, phi, x) -> np.ndarray:
    """S_D^k[phi](x) by the trapezoid rule; x of shape (2,) or (P, 2)."""
    phi = np.asarray(phi)
    if phi.shape != (mesh.n,):
        raise QuadratureError(f"Density must have shape ({mesh.n},), got {phi.shape}")
    x = np.asarray(x, dtype=float)
    values = single_layer_matrix_offboundary(mesh, k, x.reshape(-1, 2)) @ phi
    return values.reshape(x.shape[:-1])


def single_layer_on_curve(mesh: BoundaryMesh, k, t) -> np.ndarray:
    """T x M matrix mapping a nodal density to S_D^k at boundary points zeta(t).

    Uses the same log-splitting as assemble_single_layer with the Fourier
    weights evaluated at arbitrary parameters, so the result is the
    trigonometric interpolant of the Nystrom solution between nodes. The
    parameters must avoid the nodes themselves.
    """
    k = check_wavenumber(k)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    dt = t[:, None] - mesh.theta[None, :]
    sin2 = 4 * np.sin(dt / 2) ** 2
    if np.any(sin2 < 1e-24):
        raise QuadratureError("Curve parameters must not coincide with mesh nodes")
    z = mesh.curve.position(t)
    diff = z[:, None] - mesh.z[None, :]
    r = np.abs(diff)

    n = mesh.n // 2
    series = np.zeros_like(dt)
    for m in range(1, n):
        series += np.cos(m * dt) / m
    weights = -(2 * np.pi / n) * series - (np.pi / n ** 2) * np.cos(n * dt)

    speed = mesh.speed[None, :]
    j0 = np.ones_like(r, dtype=complex) if k == 0 else bessel_j(0, k * r) + 0j
    L = j0 * speed / (4 * np.pi)
    N = gamma_r(k, r) * speed - L * np.log(sin2)
    return weights * L + mesh.h * N
