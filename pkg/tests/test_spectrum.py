"""Tests for the NP eigensolve, Drude dispersion and resonance search.

Run with: python -m pytest tests/test_spectrum.py -v
"""

import functools
import os
import sys
import warnings

import numpy as np
import pytest

# Add parent to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.errors import ResonanceNotice, SpectrumError
from core.geometry import ParametricCurve, build_curve, discretize
from core.potentials import assemble_np_adjoint, eval_single_layer_offboundary, hstar_metric
from core.spectrum import (
    EPS0,
    PAIR_TOL,
    DrudeMedium,
    compute_spectrum,
    contrast_lambda,
    drude_epsilon,
    eig_np,
    find_resonances,
    mode_field,
    spectrum_report,
    tau_n,
    wavenumbers,
)


DELTA = 1e-8
OMEGA_P = 2e15
DIAMOND_OMEGA = 1.505e15


@functools.lru_cache(maxsize=None)
def mesh_for(kind, M):
    return discretize(build_curve(ParametricCurve(kind=kind, delta=DELTA)), M)


@functools.lru_cache(maxsize=None)
def spectrum_for(kind, M, n_eig=16):
    return compute_spectrum(mesh_for(kind, M), n_eig)


def quiet_resonances(spectrum, medium, omega_range=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResonanceNotice)
        return find_resonances(spectrum, medium, omega_range)


# ============================================================
# Drude model
# ============================================================

def test_drude_epsilon_at_half_plasma_frequency_squared():
    medium = DrudeMedium()
    omega = OMEGA_P / np.sqrt(2)
    expected = EPS0 * (1 - 2 / (1 + 1j / (omega * medium.tau)))
    assert drude_epsilon(medium, omega) == pytest.approx(expected, rel=1e-12)
    assert drude_epsilon(medium, omega) / EPS0 == pytest.approx(-1.0 + 0.1414j, abs=0.02)


def test_drude_epsilon_tends_to_vacuum_at_high_frequency():
    assert drude_epsilon(DrudeMedium(), 1e22) / EPS0 == pytest.approx(1.0, abs=1e-10)


def test_drude_epsilon_has_positive_loss():
    medium = DrudeMedium()
    for omega in np.logspace(14, 16, 25):
        assert drude_epsilon(medium, omega).imag > 0


def test_nonpositive_frequency_rejected():
    with pytest.raises(SpectrumError):
        drude_epsilon(DrudeMedium(), 0.0)
    with pytest.raises(SpectrumError):
        drude_epsilon(DrudeMedium(), -1e15)


def test_contrast_real_part_is_quadratic_in_frequency():
    # with eps_m = eps0, Re lambda(omega) = omega^2 / omega_p^2 - 1/2
    medium = DrudeMedium()
    for omega in (0.5e15, 1.2e15, 1.9e15):
        assert contrast_lambda(medium, omega).real == pytest.approx(omega ** 2 / OMEGA_P ** 2 - 0.5, abs=1e-12)


def test_contrast_undefined_without_contrast():
    with pytest.raises(SpectrumError):
        contrast_lambda(DrudeMedium(omega_p=0.0), 1e15)


def test_wavenumbers():
    medium = DrudeMedium()
    k_m, k_d = wavenumbers(medium, DIAMOND_OMEGA)
    assert k_m == pytest.approx(DIAMOND_OMEGA / medium.light_speed, rel=1e-12)
    assert k_d.imag > 0
    assert k_d ** 2 == pytest.approx(DIAMOND_OMEGA ** 2 * drude_epsilon(medium, DIAMOND_OMEGA) * medium.mu_m, rel=1e-10)


def test_medium_from_config_defaults_background_to_vacuum():
    medium = DrudeMedium.from_config({"omega_p": 3e15, "tau": 2e-14})
    assert medium.omega_p == 3e15
    assert medium.eps_m == medium.eps0
    assert medium.to_dict()["tau"] == 2e-14


# ============================================================
# Eigensolve
# ============================================================

def test_disk_spectrum_is_half_then_zero():
    spectrum = spectrum_for("disk", 64)
    assert spectrum.eigenvalues[0] == pytest.approx(0.5, abs=1e-6)
    assert np.abs(spectrum.eigenvalues[1:11]).max() < 1e-8


def test_ellipse_spectrum_matches_closed_form():
    ratio = (1.0 - 5.0) / (1.0 + 5.0)
    expected = [0.5]
    for n in range(1, 5):
        expected += [-0.5 * abs(ratio) ** n, 0.5 * abs(ratio) ** n]
    spectrum = spectrum_for("ellipse", 256)
    np.testing.assert_allclose(spectrum.eigenvalues[:9], expected, atol=1e-6)


def test_ellipse_spectrum_converged_between_resolutions():
    coarse = spectrum_for("ellipse", 128).eigenvalues[:9]
    fine = spectrum_for("ellipse", 256).eigenvalues[:9]
    np.testing.assert_allclose(coarse, fine, atol=1e-8)


def test_eigenvalues_inside_spectral_interval_and_ordered():
    values = spectrum_for("diamond", 128).eigenvalues
    assert np.all(np.abs(values[1:]) < 0.5)
    assert np.all(np.diff(np.abs(values[1:])) <= PAIR_TOL)


def test_pairs_listed_negative_first():
    values = spectrum_for("diamond", 256).eigenvalues
    for n in range(1, 7, 2):
        assert values[n] < 0 < values[n + 1]
        assert values[n] == pytest.approx(-values[n + 1], abs=1e-6)


def test_diamond_dipolar_pair_sits_at_four_and_six():
    values = spectrum_for("diamond", 256).eigenvalues
    assert abs(values[2]) > abs(values[4]) + 1e-3
    assert values[4] == pytest.approx(values[6], abs=1e-6)
    assert values[3] == pytest.approx(values[5], abs=1e-6)
    assert values[3] == pytest.approx(-values[4], abs=1e-6)
    assert values[4] > 0


def test_densities_are_hstar_orthonormal():
    for kind in ("diamond", "flower"):
        spectrum = spectrum_for(kind, 256)
        np.testing.assert_allclose(spectrum.gram(), np.eye(spectrum.count), atol=1e-6)


def test_densities_are_eigenvectors():
    spectrum = spectrum_for("diamond", 256)
    K = assemble_np_adjoint(spectrum.mesh, 0).matrix.real
    for n in range(spectrum.count):
        phi = spectrum.density(n)
        residual = K @ phi - spectrum.eigenvalues[n] * phi
        assert np.linalg.norm(residual) < 1e-7 * np.linalg.norm(phi)


def test_nonzero_modes_are_mean_free():
    spectrum = spectrum_for("diamond", 256)
    w = spectrum.mesh.weights
    for n in range(1, spectrum.count):
        phi = spectrum.density(n)
        assert abs(w @ phi) < 1e-8 * (w @ np.abs(phi))


def test_discrete_np_is_hstar_self_adjoint():
    spectrum = spectrum_for("diamond", 256)
    G = spectrum.metric.gram
    K = assemble_np_adjoint(spectrum.mesh, 0).matrix.real
    assert np.linalg.norm(G @ K - K.T @ G) <= 1e-7 * np.linalg.norm(G)


def test_eigensolve_is_deterministic():
    a = compute_spectrum(mesh_for("diamond", 64), 8)
    b = compute_spectrum(mesh_for("diamond", 64), 8)
    np.testing.assert_array_equal(a.eigenvalues, b.eigenvalues)
    np.testing.assert_array_equal(a.densities, b.densities)


def test_retained_count_is_capped():
    spectrum = spectrum_for("disk", 32, 100)
    assert spectrum.count == 32


def test_spectrum_arrays_are_read_only():
    spectrum = spectrum_for("diamond", 64, 8)
    with pytest.raises(ValueError):
        spectrum.eigenvalues[0] = 0.0


def test_operator_and_metric_on_different_meshes_rejected():
    np_adjoint = assemble_np_adjoint(mesh_for("disk", 32), 0)
    metric = hstar_metric(mesh_for("disk", 64))
    with pytest.raises(SpectrumError, match="different meshes"):
        eig_np(np_adjoint, metric)


def test_bad_mode_index_rejected():
    spectrum = spectrum_for("diamond", 64, 8)
    with pytest.raises(SpectrumError):
        spectrum.density(8)
    with pytest.raises(SpectrumError):
        tau_n(spectrum, DrudeMedium(), DIAMOND_OMEGA, -1)


# ============================================================
# Spectral denominators
# ============================================================

def test_tau_vanishes_at_lossless_resonance():
    spectrum = spectrum_for("diamond", 128)
    medium = DrudeMedium(tau=1e6)
    table = quiet_resonances(spectrum, medium)
    for entry in table.entries:
        eps_d = drude_epsilon(medium, entry.omega)
        scale = abs(1 / eps_d - 1 / medium.eps_m)
        assert abs(tau_n(spectrum, medium, entry.omega, entry.mode)) <= 1e-9 * scale


def test_tau_leading_term_vanishes_without_contrast():
    spectrum = spectrum_for("diamond", 64, 8)
    assert tau_n(spectrum, DrudeMedium(omega_p=0.0), 1e15, 3) == 0


def test_tau_correction_is_added():
    spectrum = spectrum_for("diamond", 64, 8)
    medium = DrudeMedium()
    base = tau_n(spectrum, medium, DIAMOND_OMEGA, 2)
    corrected = tau_n(spectrum, medium, DIAMOND_OMEGA, 2, correction=lambda n, omega: 1.0)
    x = DIAMOND_OMEGA * DELTA / medium.light_speed
    assert corrected - base == pytest.approx(x ** 2 * np.log(x), rel=1e-3)


def test_tau_is_locally_minimal_at_resonances():
    spectrum = spectrum_for("diamond", 128)
    medium = DrudeMedium()
    for entry in quiet_resonances(spectrum, medium).entries:
        at = abs(tau_n(spectrum, medium, entry.omega, entry.mode))
        assert at < abs(tau_n(spectrum, medium, 0.95 * entry.omega, entry.mode))
        assert at < abs(tau_n(spectrum, medium, 1.05 * entry.omega, entry.mode))


def test_diamond_dipole_frequency_minimizes_tau_on_scan():
    spectrum = spectrum_for("diamond", 256)
    medium = DrudeMedium()
    table = quiet_resonances(spectrum, medium)
    entry = min(table.entries, key=lambda e: abs(e.omega - DIAMOND_OMEGA))
    scan = np.linspace(0.95, 1.05, 201) * DIAMOND_OMEGA
    values = [abs(tau_n(spectrum, medium, omega, entry.mode)) for omega in scan]
    best = int(np.argmin(values))
    assert 0 < best < len(scan) - 1


# ============================================================
# Resonances
# ============================================================

def test_diamond_has_resonance_near_published_frequency():
    table = quiet_resonances(spectrum_for("diamond", 256), DrudeMedium())
    assert any(abs(e.omega - DIAMOND_OMEGA) <= 0.02 * DIAMOND_OMEGA for e in table.entries)


def test_resonances_satisfy_leading_order_condition():
    medium = DrudeMedium()
    table = quiet_resonances(spectrum_for("flower", 256), medium)
    assert table.entries
    for entry in table.entries:
        assert abs(contrast_lambda(medium, entry.omega).real - entry.eigenvalue) <= 1e-6
    assert [e.mode for e in table.entries] == sorted(e.mode for e in table.entries)


def test_disk_resonances_coincide():
    table = quiet_resonances(spectrum_for("disk", 64, 6), DrudeMedium())
    assert [e.mode for e in table.entries] == [1, 2, 3, 4, 5]
    for entry in table.entries:
        assert entry.omega == pytest.approx(OMEGA_P / np.sqrt(2), rel=1e-8)


def test_mode_zero_never_tabulated():
    table = quiet_resonances(spectrum_for("diamond", 64, 8), DrudeMedium(), (1e13, 1e17))
    assert 0 not in [e.mode for e in table.entries]
    with pytest.raises(SpectrumError):
        table.omega_for(0)


def test_out_of_range_modes_omitted_with_notice():
    spectrum = spectrum_for("ellipse", 128, 5)
    # mode 2 (lambda = +1/3) resonates at omega_p sqrt(5/6), outside this range
    with pytest.warns(ResonanceNotice):
        table = find_resonances(spectrum, DrudeMedium(), (0.2 * OMEGA_P, 0.6 * OMEGA_P))
    assert 2 in table.omitted
    assert table.omega_for(1) == pytest.approx(OMEGA_P / np.sqrt(6), rel=1e-6)
    with pytest.raises(SpectrumError, match="no resonance"):
        table.omega_for(2)


def test_empty_range_rejected():
    with pytest.raises(SpectrumError):
        find_resonances(spectrum_for("disk", 32, 4), DrudeMedium(), (1e15, 1e15))


def test_spectrum_report_is_json_ready():
    spectrum = spectrum_for("diamond", 64, 8)
    report = spectrum_report(spectrum, quiet_resonances(spectrum, DrudeMedium()))
    assert [r["mode"] for r in report["eigenvalues"]] == list(range(8))
    assert all(isinstance(r["omega"], float) for r in report["resonances"])


# ============================================================
# Radiating modes
# ============================================================

def test_mode_field_is_single_layer_of_density():
    spectrum = spectrum_for("diamond", 128)
    k_m = DIAMOND_OMEGA / DrudeMedium().light_speed
    x = np.array([[5 * DELTA, 1 * DELTA], [-3 * DELTA, 4 * DELTA]])
    field = mode_field(spectrum, spectrum.mesh, k_m, 2, x)
    twice = eval_single_layer_offboundary(spectrum.mesh, k_m, 2 * spectrum.density(2), x)
    np.testing.assert_allclose(twice, 2 * field, rtol=1e-12)


def test_mode_field_decays_like_inverse_root_distance():
    spectrum = spectrum_for("diamond", 128)
    k_m = DIAMOND_OMEGA / DrudeMedium().light_speed
    direction = np.array([0.6, 0.8])
    radii = np.array([400.0, 2000.0, 8000.0]) * DELTA
    scaled = np.abs(mode_field(spectrum, spectrum.mesh, k_m, 1, radii[:, None] * direction)) * np.sqrt(radii)
    assert scaled.max() / scaled.min() < 1.2


def test_higher_modes_are_weaker_away_from_particle():
    spectrum = spectrum_for("diamond", 256)
    k_m = DIAMOND_OMEGA / DrudeMedium().light_speed
    theta = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    ring = 10 * DELTA * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    peaks = [np.abs(mode_field(spectrum, spectrum.mesh, k_m, n, ring)).max() for n in range(1, 13)]
    assert np.mean(peaks[:4]) > np.mean(peaks[-4:])


def test_mode_field_requires_spectrum_mesh():
    spectrum = spectrum_for("diamond", 64, 8)
    with pytest.raises(SpectrumError):
        mode_field(spectrum, mesh_for("diamond", 128), 1.0, 1, [5 * DELTA, 0.0])
