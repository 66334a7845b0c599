"""Smooth closed curves and their uniform periodic discretizations.

Every supported shape is a finite complex Fourier sum

    zeta(theta) = z_D + delta * sum_m c_m exp(i m theta),

so positions and derivatives are evaluated analytically. The flower, rounded
diamond, ellipse and disk are exact special cases; the ``fourier`` kind takes
the coefficients directly.
"""

from dataclasses import dataclass, field

import numpy as np

from core.errors import GeometryError


CURVE_KINDS = ("flower", "diamond", "ellipse", "disk", "fourier")

# Shape parameters and their defaults per kind.
SHAPE_DEFAULTS = {
    "flower": {"base": 2.0, "amplitude": 0.6, "petals": 5},
    "diamond": {"scale": 2.0, "coefficient": 0.066, "order": 3},
    "ellipse": {"a": 1.0, "b": 5.0},
    "disk": {"radius": 1.0},
    "fourier": {"coefficients": [[1, 1.0, 0.0]]},
}

MIN_NODES = 16

# Dense sampling used for validity checks, winding numbers and distances.
_DENSE = 4096
# Query points processed per batch by the dense tests.
_CHUNK = 512


def _fourier_coefficients(kind: str, params: dict) -> dict[int, complex]:
    """Map a shape kind and its parameters to {m: c_m} (dimensionless)."""
    if kind == "disk":
        return {1: complex(params["radius"])}
    if kind == "flower":
        base, amp, p = params["base"], params["amplitude"], int(params["petals"])
        coeffs = {1: complex(base)}
        coeffs[p + 1] = coeffs.get(p + 1, 0) + amp / 2
        coeffs[1 - p] = coeffs.get(1 - p, 0) + amp / 2
        return coeffs
    if kind == "diamond":
        s, c, order = params["scale"], params["coefficient"], int(params["order"])
        return {1: complex(s), -order: complex(s * c)}
    if kind == "ellipse":
        a, b = params["a"], params["b"]
        return {1: complex((a + b) / 2), -1: complex((a - b) / 2)}
    # fourier: list of [m, re, im] or {m: value}
    raw = params["coefficients"]
    coeffs: dict[int, complex] = {}
    items = raw.items() if isinstance(raw, dict) else raw
    for entry in items:
        if isinstance(raw, dict):
            m, value = entry
            value = complex(value)
        else:
            if len(entry) == 2:
                m, value = entry[0], complex(entry[1])
            else:
                m, value = entry[0], complex(entry[1], entry[2])
        coeffs[int(m)] = coeffs.get(int(m), 0) + value
    return coeffs


@dataclass(frozen=True)
class ParametricCurve:
    """A closed curve D of characteristic size ``delta`` (meters) centred at ``center``."""
    kind: str
    delta: float
    params: dict = field(default_factory=dict)
    center: tuple[float, float] = (0.0, 0.0)

    @property
    def shape_params(self) -> dict:
        merged = dict(SHAPE_DEFAULTS.get(self.kind, {}))
        merged.update(self.params)
        return merged

    @property
    def coefficients(self) -> dict[int, complex]:
        return _fourier_coefficients(self.kind, self.shape_params)

    def _eval(self, theta, order: int) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(theta.shape, dtype=complex)
        for m, c in self.coefficients.items():
            out += c * (1j * m) ** order * np.exp(1j * m * theta)
        return self.delta * out

    def position(self, theta) -> np.ndarray:
        """zeta(theta) as complex numbers (meters)."""
        return complex(*self.center) + self._eval(theta, 0)

    def derivative(self, theta) -> np.ndarray:
        return self._eval(theta, 1)

    def second_derivative(self, theta) -> np.ndarray:
        return self._eval(theta, 2)

    def normal(self, theta) -> np.ndarray:
        """Outward unit normal as complex numbers (curve is counter-clockwise)."""
        dz = self.derivative(theta)
        return -1j * dz / np.abs(dz)

    def curvature(self, theta) -> np.ndarray:
        dz = self.derivative(theta)
        ddz = self.second_derivative(theta)
        return np.imag(np.conj(dz) * ddz) / np.abs(dz) ** 3

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "delta": self.delta,
            "params": self.shape_params,
            "center": list(self.center),
        }


def build_curve(curve: ParametricCurve) -> ParametricCurve:
    """Validate a curve description and return it ready for evaluation.

    Raises GeometryError for non-positive delta, unknown kinds, parameters
    outside the simplicity bounds, degenerate tangents or clockwise
    orientation.
    """
    if curve.kind not in CURVE_KINDS:
        raise GeometryError(f"Unknown curve kind '{curve.kind}'. Available: {', '.join(CURVE_KINDS)}")
    if not np.isfinite(curve.delta) or curve.delta <= 0:
        raise GeometryError(f"Curve scale delta must be positive, got {curve.delta}")
    unknown = set(curve.params) - set(SHAPE_DEFAULTS[curve.kind])
    if unknown:
        raise GeometryError(f"Unknown parameters for {curve.kind}: {', '.join(sorted(unknown))}")

    p = curve.shape_params
    if curve.kind == "disk" and p["radius"] <= 0:
        raise GeometryError("Disk radius must be positive")
    if curve.kind == "ellipse" and (p["a"] <= 0 or p["b"] <= 0):
        raise GeometryError("Ellipse semi-axes must be positive")
    if curve.kind == "flower":
        if p["base"] <= 0 or abs(p["amplitude"]) >= p["base"] or int(p["petals"]) < 1:
            raise GeometryError("Flower needs base > |amplitude| and at least one petal")
    if curve.kind == "diamond":
        if p["scale"] <= 0 or abs(p["coefficient"]) * int(p["order"]) >= 1:
            raise GeometryError("Diamond needs scale > 0 and |coefficient| * order < 1")

    theta = np.linspace(0.0, 2 * np.pi, _DENSE, endpoint=False)
    speed = np.abs(curve.derivative(theta))
    if not np.all(np.isfinite(speed)) or speed.min() <= 1e-8 * max(speed.max(), 1e-300):
        raise GeometryError("Degenerate tangent: |zeta'| vanishes on the curve")
    z = curve.position(theta) - complex(*curve.center)
    area = 0.5 * np.sum(np.imag(np.conj(z) * curve.derivative(theta))) * (2 * np.pi / _DENSE)
    if area <= 0:
        raise GeometryError("Curve must be counter-clockwise (positive signed area)")
    return curve


def curve_from_config(block: dict) -> ParametricCurve:
    """Build a curve from a ``[shape]`` config table."""
    block = dict(block)
    kind = block.pop("kind", None)
    delta = float(block.pop("delta", 1e-8))
    center = tuple(float(c) for c in block.pop("center", (0.0, 0.0)))
    if len(center) != 2:
        raise GeometryError("Curve center must have two coordinates")
    return build_curve(ParametricCurve(kind=kind, delta=delta, params=block, center=center))


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class BoundaryMesh:
    """Uniform periodic discretization of a ParametricCurve.

    Nodes sit at theta_j = 2 pi j / M. Complex arrays ``z``, ``dz``, ``ddz``
    hold position and parametric derivatives; the real views below are what
    the operators consume.
    """
    curve: ParametricCurve
    theta: np.ndarray
    z: np.ndarray
    dz: np.ndarray
    ddz: np.ndarray

    @property
    def n(self) -> int:
        return self.theta.size

    @property
    def h(self) -> float:
        return 2 * np.pi / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.stack([self.z.real, self.z.imag], axis=-1)

    @property
    def speed(self) -> np.ndarray:
        return np.abs(self.dz)

    @property
    def tangents(self) -> np.ndarray:
        t = self.dz / self.speed
        return np.stack([t.real, t.imag], axis=-1)

    @property
    def normal_c(self) -> np.ndarray:
        return -1j * self.dz / self.speed

    @property
    def normals(self) -> np.ndarray:
        nu = self.normal_c
        return np.stack([nu.real, nu.imag], axis=-1)

    @property
    def curvature(self) -> np.ndarray:
        return np.imag(np.conj(self.dz) * self.ddz) / self.speed ** 3

    @property
    def weights(self) -> np.ndarray:
        return self.h * self.speed

    @property
    def perimeter(self) -> float:
        return float(np.sum(self.weights))

    @property
    def area(self) -> float:
        zc = self.z - complex(*self.curve.center)
        return float(0.5 * self.h * np.sum(np.imag(np.conj(zc) * self.dz)))

    @property
    def spacing(self) -> np.ndarray:
        """Local node spacing (arclength between neighbours)."""
        return self.weights


def discretize(curve: ParametricCurve, M: int) -> BoundaryMesh:
    """Sample ``curve`` at M uniformly spaced parameter values."""
    if int(M) != M or M < MIN_NODES or M % 2:
        raise GeometryError(f"Node count must be an even integer >= {MIN_NODES}, got {M}")
    M = int(M)
    theta = 2 * np.pi * np.arange(M) / M
    return BoundaryMesh(
        curve=curve,
        theta=_readonly(theta),
        z=_readonly(curve.position(theta)),
        dz=_readonly(curve.derivative(theta)),
        ddz=_readonly(curve.second_derivative(theta)),
    )


def _as_complex_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise GeometryError("Points must have a trailing dimension of size 2")
    return x[..., 0] + 1j * x[..., 1]


def _ring(curve: ParametricCurve) -> np.ndarray:
    return curve.position(np.linspace(0.0, 2 * np.pi, _DENSE, endpoint=False))


def _chunked(zc: np.ndarray, func) -> np.ndarray:
    flat = zc.ravel()
    out = [func(flat[i:i + _CHUNK]) for i in range(0, flat.size, _CHUNK)]
    return np.concatenate(out).reshape(zc.shape) if out else np.zeros(zc.shape)


def point_inside(curve: ParametricCurve, x) -> np.ndarray:
    """Winding-number test: True where x lies inside the closed curve."""
    ring = _ring(curve)

    def winding(pts):
        diff = ring[None, :] - pts[:, None]
        return np.angle(np.roll(diff, -1, axis=-1) / diff).sum(axis=-1) / (2 * np.pi)

    return np.abs(_chunked(_as_complex_points(x), winding)) > 0.5


def distance_to_boundary(curve: ParametricCurve, x) -> np.ndarray:
    """Euclidean distance from x to the curve, by dense resampling."""
    ring = _ring(curve)
    return _chunked(_as_complex_points(x), lambda pts: np.abs(ring[None, :] - pts[:, None]).min(axis=-1))
