"""Dipole localization from an image, with optional mode correction.

The fit residual

    || I - R(., z) p - sum_n alpha_n I_{e_n} ||_{L2(grid)}

is linear in the unknown amplitudes, so for every candidate z those are
eliminated by one complex least-squares solve (variable projection). Only z
is searched, with bounded Nelder-Mead started from the strongest local maxima
of |I|.

Two amplitude models are supported. With a ModalCoupler attached the mode
amplitudes follow the dipole, alpha_n = alpha_n(z, p), so the design has two
columns R(., z) e_j + sum_n alpha_n(z, e_j) I_{e_n} and only p is free.
Without one every alpha_n is a free coefficient next to p. Design columns
are scaled to unit norm before each solve.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, optimize
from scipy.ndimage import maximum_filter

from core.errors import LocalizationError, RegularizationNotice
from core.forward import DipoleSource, FarFieldData, ModalCoupler
from core.geometry import point_inside
from imaging.functional import BackProjector, ImageGrid


NM = 1e-9
# Relative singular-value floor of the design matrix.
RCOND = 1e-10


@dataclass(frozen=True)
class LocalizationProblem:
    """Data image, PSF model and optional mode images.

    ``window`` is (xmin, xmax, ymin, ymax) in meters and defaults to the grid
    extent. ``xatol_nm`` and ``max_evaluations`` apply to every start. A
    ``coupler`` ties the mode amplitudes to the dipole; its modes must be
    those of ``mode_images``, in order.
    """
    image: ImageGrid
    projector: BackProjector
    mode_images: tuple[ImageGrid, ...] = ()
    window: tuple[float, float, float, float] | None = None
    xatol_nm: float = 1e-3
    max_evaluations: int = 500
    multistart: int = 5
    coupler: ModalCoupler | None = None

    def __post_init__(self):
        if self.projector.grid is not self.image.grid:
            raise LocalizationError("Image and PSF model use different grids")
        for img in self.mode_images:
            if img.grid is not self.image.grid:
                raise LocalizationError("Mode image lives on a different grid")
        if self.multistart < 1 or self.max_evaluations < 1:
            raise LocalizationError("multistart and max_evaluations must be >= 1")
        if self.coupler is not None:
            labels = tuple(img.provenance.get("mode") for img in self.mode_images)
            if labels != self.coupler.modes:
                raise LocalizationError(
                    f"Coupler modes {list(self.coupler.modes)} do not match mode images {list(labels)}"
                )
            if abs(self.coupler.k_m - self.projector.k_m) > 1e-9 * abs(self.coupler.k_m):
                raise LocalizationError("Coupler and PSF model use different wavenumbers")

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        if self.window is not None:
            return self.window
        g = self.image.grid
        return (float(g.xs[0]), float(g.xs[-1]), float(g.ys[0]), float(g.ys[-1]))

    @property
    def n_modes(self) -> int:
        return len(self.mode_images)

    @property
    def coupled(self) -> bool:
        return self.coupler is not None and bool(self.mode_images)


@dataclass(frozen=True)
class LocalizationResult:
    z: np.ndarray
    p: np.ndarray
    amplitude: complex
    alphas: np.ndarray
    residual: float
    evaluations: int
    converged: bool
    starts: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "z_nm": [float(c / NM) for c in self.z],
            "p": [float(c) for c in self.p],
            "angle_deg": float(np.degrees(np.arctan2(self.p[1], self.p[0]))),
            "amplitude": [self.amplitude.real, self.amplitude.imag],
            "alphas": [[complex(a).real, complex(a).imag] for a in self.alphas],
            "residual": self.residual,
            "evaluations": self.evaluations,
            "converged": self.converged,
        }


class _Model:
    """Design matrices and the normalized variable-projection objective."""

    def __init__(self, problem: LocalizationProblem):
        self.problem = problem
        self.rows = np.concatenate([problem.image.grid.valid, problem.image.grid.valid])
        self.b = problem.image.flat()[self.rows]
        self.b_norm2 = float(np.vdot(self.b, self.b).real)
        if self.b_norm2 == 0:
            raise LocalizationError("Data image is identically zero")
        if problem.mode_images:
            self.modes = np.stack([img.flat() for img in problem.mode_images], axis=1)[self.rows]
        else:
            self.modes = np.zeros((self.b.size, 0), dtype=complex)
        self.evaluations = 0
        self.rank_deficient = False

    def design(self, z) -> np.ndarray:
        psf = self.problem.projector.dipole_columns(z)[self.rows]
        if self.problem.coupled:
            return psf + self.modes @ self.problem.coupler.unit_couplings(z)
        return np.concatenate([psf, self.modes], axis=1)

    def admissible(self, z) -> bool:
        """The coupled model is only defined outside the particle."""
        if not self.problem.coupled:
            return True
        return not bool(point_inside(self.problem.coupler.mesh.curve, z))

    def solve(self, z) -> tuple[np.ndarray, float]:
        """Least-squares coefficients at z and the squared residual."""
        A = self.design(z)
        norms = np.linalg.norm(A, axis=0)
        norms[norms == 0] = 1.0
        scaled, _, rank, _ = linalg.lstsq(A / norms, self.b, cond=RCOND, lapack_driver="gelsd")
        if rank < A.shape[1]:
            self.rank_deficient = True
        coef = scaled / norms
        r = self.b - A @ coef
        return coef, float(np.vdot(r, r).real)

    def objective(self, z_nm) -> float:
        self.evaluations += 1
        z = np.asarray(z_nm) * NM
        if not self.admissible(z):
            # zero amplitudes already reach this value
            return 1.0
        _, r2 = self.solve(z)
        return r2 / self.b_norm2

    def amplitudes(self, z, coef) -> tuple[np.ndarray, np.ndarray]:
        """Complex dipole vector and mode amplitudes from the solved coefficients."""
        if self.problem.coupled:
            return coef, self.problem.coupler.unit_couplings(z) @ coef
        return coef[:2], coef[2:]


def initial_guesses(image: ImageGrid, count: int) -> list[np.ndarray]:
    """Grid points of the ``count`` strongest local maxima of |I| (meters)."""
    mag = np.where(image.grid.valid.reshape(image.grid.shape), image.magnitude, 0.0)
    peaks = (mag == maximum_filter(mag, size=3, mode="nearest")) & (mag > 0)
    iy, ix = np.nonzero(peaks)
    order = np.argsort(-mag[iy, ix], kind="stable")[:count]
    guesses = [np.array([image.grid.xs[ix[i]], image.grid.ys[iy[i]]]) for i in order]
    return guesses or [image.peak()]


def dominant_direction(c: np.ndarray) -> tuple[np.ndarray, complex]:
    """Real unit direction best representing the complex 2-vector c, and c . p."""
    stacked = np.vstack([c.real, c.imag])
    _, _, vt = np.linalg.svd(stacked)
    p = vt[0]
    if p[np.argmax(np.abs(p))] < 0:
        p = -p
    return p, complex(c @ p)


def _fit(problem: LocalizationProblem) -> LocalizationResult:
    model = _Model(problem)
    xmin, xmax, ymin, ymax = (b / NM for b in problem.bounds)
    step = max(problem.image.grid.spacing / NM, 10 * problem.xatol_nm)
    best = None
    starts = []
    for guess in initial_guesses(problem.image, problem.multistart):
        x0 = np.clip(guess / NM, [xmin, ymin], [xmax, ymax])
        sx = step if x0[0] + step <= xmax else -step
        sy = step if x0[1] + step <= ymax else -step
        simplex = np.array([x0, x0 + [sx, 0.0], x0 + [0.0, sy]])
        res = optimize.minimize(
            model.objective, x0, method="Nelder-Mead",
            bounds=[(xmin, xmax), (ymin, ymax)],
            options={"xatol": problem.xatol_nm, "fatol": 1e-14,
                     "maxfev": problem.max_evaluations, "initial_simplex": simplex},
        )
        starts.append({"start_nm": [float(v) for v in x0], "z_nm": [float(v) for v in res.x],
                       "objective": float(res.fun), "success": bool(res.success)})
        if best is None or res.fun < best.fun:
            best = res

    z = np.asarray(best.x) * NM
    coef, r2 = model.solve(z)
    if model.rank_deficient:
        warnings.warn(
            "Design matrix is rank deficient; mode images are nearly collinear with the PSF, "
            f"solved with relative cutoff {RCOND:g}",
            RegularizationNotice, stacklevel=3,
        )
    vector, alphas = model.amplitudes(z, coef)
    p, amplitude = dominant_direction(vector)
    return LocalizationResult(
        z=z, p=p, amplitude=amplitude, alphas=alphas,
        residual=float(np.sqrt(r2 * problem.image.grid.cell_area)),
        evaluations=model.evaluations, converged=bool(best.success), starts=starts,
    )


def fit_uncorrected(problem: LocalizationProblem) -> LocalizationResult:
    """Fit a single focal spot R(., z) p to the image."""
    if problem.mode_images:
        raise LocalizationError("fit_uncorrected takes a problem without mode images")
    return _fit(problem)


def fit_corrected(problem: LocalizationProblem) -> LocalizationResult:
    """Fit focal spot plus sum_n alpha_n I_{e_n} over the attached mode images.

    The alphas are coupled to p when the problem carries a coupler and free
    otherwise.
    """
    return _fit(problem)


def evaluate_fit(problem: LocalizationProblem, z) -> tuple[np.ndarray, float]:
    """Solved linear coefficients at a fixed z and the L2 residual.

    These are (p, alpha) for free amplitudes and the complex p alone for a
    coupled problem.
    """
    model = _Model(problem)
    coef, r2 = model.solve(np.asarray(z, dtype=float))
    return coef, float(np.sqrt(r2 * problem.image.grid.cell_area))


def residual_for(problem: LocalizationProblem, z, coef) -> float:
    """L2 residual at z for coefficients laid out as in evaluate_fit."""
    model = _Model(problem)
    r = model.b - model.design(np.asarray(z, dtype=float)) @ np.asarray(coef)
    return float(np.sqrt(np.vdot(r, r).real * problem.image.grid.cell_area))


def with_modes(problem: LocalizationProblem, mode_images, coupler: ModalCoupler | None = None) -> LocalizationProblem:
    return replace(problem, mode_images=tuple(mode_images), coupler=coupler)


def add_noise(data: FarFieldData, sigma0: float, seed: int) -> FarFieldData:
    """Add complex Gaussian noise of level sigma0 ||u||_F / sqrt(N) per sensor."""
    if sigma0 < 0:
        raise LocalizationError(f"Noise level must be >= 0, got {sigma0}")
    if sigma0 == 0:
        return data
    n = data.values.size
    sigma = sigma0 * np.linalg.norm(data.values) / np.sqrt(n)
    rng = np.random.default_rng(seed)
    noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * (sigma / np.sqrt(2))
    return data.with_values(data.values + noise, sigma0=float(sigma0))


def error_metrics(result: LocalizationResult, truth: DipoleSource) -> tuple[float, float]:
    """(position error in nm, orientation error in degrees, sign-invariant)."""
    position = float(np.linalg.norm(result.z - truth.z) / NM)
    cosine = np.clip(abs(float(result.p @ truth.p)), 0.0, 1.0)
    return position, float(np.degrees(np.arccos(cosine)))
