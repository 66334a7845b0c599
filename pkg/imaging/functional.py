"""Back-propagation imaging functional and its point-spread kernel.

    I(z) = sum_s conj(grad_z Gamma^{k_m}(x_s - z)) u(x_s) w_s

over the uniform sensors x_s on the measurement circle (trapezoid weights
w_s). The sensor-to-grid map is precomputed once per (sensors, grid, k_m)
and reused for data images, PSF columns and mode images.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from core.errors import ImagingError
from core.forward import FarFieldData, sensor_angles
from core.geometry import ParametricCurve, distance_to_boundary, point_inside
from core.kernels import check_wavenumber, grad_gamma
from core.potentials import single_layer_matrix_offboundary


@dataclass(frozen=True)
class ImagingGrid:
    """Rectangular grid of candidate points (meters), rows along y."""
    xs: np.ndarray
    ys: np.ndarray
    mask: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ys.size, self.xs.size)

    @property
    def points(self) -> np.ndarray:
        X, Y = np.meshgrid(self.xs, self.ys)
        return np.stack([X.ravel(), Y.ravel()], axis=-1)

    @property
    def spacing(self) -> float:
        return float(self.xs[1] - self.xs[0]) if self.xs.size > 1 else 0.0

    @property
    def cell_area(self) -> float:
        dx = self.xs[1] - self.xs[0] if self.xs.size > 1 else 1.0
        dy = self.ys[1] - self.ys[0] if self.ys.size > 1 else 1.0
        return float(dx * dy)

    @property
    def valid(self) -> np.ndarray:
        """Flat boolean mask of points used by the fit residual."""
        if self.mask is None:
            return np.ones(self.xs.size * self.ys.size, dtype=bool)
        return self.mask.ravel()

    def key(self) -> dict:
        return {
            "x": [float(self.xs[0]), float(self.xs[-1]), int(self.xs.size)],
            "y": [float(self.ys[0]), float(self.ys[-1]), int(self.ys.size)],
            "masked": int((~self.valid).sum()),
        }


def make_grid(center, half_width: float, n: int, curve: ParametricCurve | None = None,
              guard: float = 0.0) -> ImagingGrid:
    """n x n grid over the square center +- half_width.

    With a ``curve``, points inside the particle or within ``guard`` meters of
    its boundary are masked out of the residual.
    """
    if n < 2 or half_width <= 0:
        raise ImagingError(f"Grid needs n >= 2 and a positive half width, got n={n}, {half_width}")
    cx, cy = (float(c) for c in center)
    xs = np.linspace(cx - half_width, cx + half_width, int(n))
    ys = np.linspace(cy - half_width, cy + half_width, int(n))
    grid = ImagingGrid(xs=xs, ys=ys)
    if curve is None:
        return grid
    pts = grid.points
    bad = point_inside(curve, pts) | (distance_to_boundary(curve, pts) <= guard)
    return ImagingGrid(xs=xs, ys=ys, mask=(~bad).reshape(grid.shape))


@dataclass(frozen=True)
class ImageGrid:
    """Complex 2-vector image I(z) on an ImagingGrid; ``values`` is (P, 2)."""
    grid: ImagingGrid
    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def magnitude(self) -> np.ndarray:
        """|I(z)| (Euclidean norm of the complex 2-vector) as an (ny, nx) array."""
        return np.linalg.norm(self.values, axis=-1).reshape(self.grid.shape)

    def peak(self) -> np.ndarray:
        mag = np.where(self.grid.valid.reshape(self.grid.shape), self.magnitude, -np.inf)
        iy, ix = np.unravel_index(int(np.argmax(mag)), mag.shape)
        return np.array([self.grid.xs[ix], self.grid.ys[iy]])

    def flat(self) -> np.ndarray:
        """Stacked (2P,) vector [I_x; I_y] as used by the least-squares fits."""
        return np.concatenate([self.values[:, 0], self.values[:, 1]])


class BackProjector:
    """Precomputed sensor-to-grid map of the imaging functional."""

    def __init__(self, sensors: np.ndarray, weights: np.ndarray, k_m, grid: ImagingGrid):
        self.k_m = check_wavenumber(k_m)
        self.sensors = np.asarray(sensors, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.grid = grid
        if self.sensors.ndim != 2 or self.sensors.shape[0] == 0:
            raise ImagingError("Back-projection needs a nonempty sensor set")
        pts = grid.points
        diff = self.sensors[None, :, :] - pts[:, None, :]
        # grad_z Gamma(x - z) = -grad Gamma(x - z)
        grad_z = -grad_gamma(self.k_m, diff)
        op = np.conj(grad_z) * self.weights[None, :, None]
        self.operator = np.ascontiguousarray(np.transpose(op, (0, 2, 1)))  # (P, 2, S)

    @classmethod
    def for_data(cls, data: FarFieldData, grid: ImagingGrid) -> "BackProjector":
        return cls(data.positions, data.weights, data.k_m, grid)

    @classmethod
    def for_circle(cls, k_m, radius: float, n_sensors: int, grid: ImagingGrid) -> "BackProjector":
        angles = sensor_angles(n_sensors)
        sensors = radius * np.stack([np.cos(angles), np.sin(angles)], axis=-1)
        weights = np.full(n_sensors, 2 * np.pi * radius / n_sensors)
        return cls(sensors, weights, k_m, grid)

    @property
    def n_sensors(self) -> int:
        return self.sensors.shape[0]

    def apply(self, samples) -> np.ndarray:
        samples = np.asarray(samples)
        if samples.shape[0] != self.n_sensors:
            raise ImagingError(f"Expected {self.n_sensors} sensor samples, got {samples.shape[0]}")
        return np.tensordot(self.operator, samples, axes=([2], [0]))

    def image(self, samples, provenance: dict | None = None) -> ImageGrid:
        return ImageGrid(self.grid, self.apply(samples), provenance or {})

    def dipole_columns(self, y) -> np.ndarray:
        """Images of the unit dipoles e_1, e_2 at y, stacked as (2P, 2).

        Column c is the image of grad Gamma(x - y) . e_c, i.e. -R(y, .) e_c.
        """
        fields = grad_gamma(self.k_m, self.sensors - np.asarray(y, dtype=float))  # (S, 2)
        img = self.apply(fields)  # (P, 2, 2): grid, image component, dipole component
        return np.concatenate([img[:, 0, :], img[:, 1, :]], axis=0)


def backpropagate(data: FarFieldData, grid: ImagingGrid, projector: BackProjector | None = None) -> ImageGrid:
    """Image of far-field data on ``grid``."""
    if data.n_sensors == 0 or data.values.size == 0:
        raise ImagingError("Cannot image empty far-field data")
    projector = projector or BackProjector.for_data(data, grid)
    return projector.image(data.values, {"omega": data.omega, "radius": data.radius,
                                         "n_sensors": data.n_sensors, "sigma0": data.sigma0})


def psf_kernel(y, z, k_m, radius: float, mode: str = "quadrature", n_sensors: int = 256) -> np.ndarray:
    """R(y, z): 2x2 image at z of unit dipoles at y (sign convention: R(z, z) -> (k_m/8) I).

    ``quadrature`` sums conj(grad_z Gamma(x - z)) grad_y Gamma(x - y)^T over
    the sensors; ``closed-form`` evaluates the Helmholtz-Kirchhoff limit

        (1/4) [k J0(kr) dd^T/r^2 - 2 J1(kr)/r dd^T/r^2 + J1(kr)/r I],  d = y - z.
    """
    k = check_wavenumber(k_m)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if mode == "quadrature":
        angles = sensor_angles(n_sensors)
        x = radius * np.stack([np.cos(angles), np.sin(angles)], axis=-1)
        w = 2 * np.pi * radius / n_sensors
        gz = -grad_gamma(k, x - z)
        gy = -grad_gamma(k, x - y)
        return np.einsum("sc,sd->cd", np.conj(gz), gy) * w
    if mode == "closed-form":
        if k.imag != 0:
            raise ImagingError("Closed-form PSF requires a real wavenumber")
        k = k.real
        d = y - z
        r = float(np.hypot(*d))
        if r == 0:
            return (k / 8) * np.eye(2) + 0j
        dd = np.outer(d, d) / r ** 2
        j0 = special.j0(k * r)
        j1r = special.j1(k * r) / r
        return 0.25 * (k * j0 * dd - 2 * j1r * dd + j1r * np.eye(2)) + 0j
    raise ImagingError(f"Unknown PSF mode '{mode}' (quadrature | closed-form)")


def mode_images(spectrum, mesh, k_m, radius: float, n_sensors: int, grid: ImagingGrid, n_modes: int,
                projector: BackProjector | None = None) -> list[ImageGrid]:
    """Images I_{e_n} of the radiating modes e_n = S^{k_m}[phi_n], n = 1..N."""
    if n_modes < 0 or n_modes >= spectrum.count:
        raise ImagingError(f"Need 0 <= N < {spectrum.count} modes, got {n_modes}")
    if n_modes == 0:
        return []
    projector = projector or BackProjector.for_circle(k_m, radius, n_sensors, grid)
    modes = list(range(1, n_modes + 1))
    on_sensors = single_layer_matrix_offboundary(mesh, k_m, projector.sensors) @ spectrum.densities[:, modes]
    images = projector.apply(on_sensors)  # (P, 2, N)
    return [ImageGrid(grid, images[:, :, i], {"mode": n}) for i, n in enumerate(modes)]


def write_image_csv(stem, image: ImageGrid) -> list[Path]:
    """Write each component's real and imaginary planes plus |I| as CSV matrices.

    Files are ``<stem>_{x,y}_{re,im}.csv`` and ``<stem>_abs.csv``; the header
    row holds x coordinates (nm), the first column y coordinates (nm).
    """
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    ny, nx = image.grid.shape
    planes = {}
    for c, name in enumerate("xy"):
        comp = image.values[:, c].reshape(ny, nx)
        planes[f"{name}_re"] = comp.real
        planes[f"{name}_im"] = comp.imag
    planes["abs"] = image.magnitude
    written = []
    for suffix, plane in planes.items():
        path = stem.with_name(f"{stem.name}_{suffix}.csv")
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["y_nm\\x_nm"] + [f"{x * 1e9:.6f}" for x in image.grid.xs])
            for y, row in zip(image.grid.ys, plane):
                writer.writerow([f"{y * 1e9:.6f}"] + [repr(float(v)) for v in row])
        written.append(path)
    return written
