"""Tests for the dipole source, the transmission solve and the far-field data.

Run with: python -m pytest tests/test_forward.py -v
"""

import functools
import os
import sys
import tempfile
import warnings

import numpy as np
import pytest

# Add parent to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.errors import ForwardSolveError, ResonanceNotice
from core.forward import (
    BiePair,
    DipoleSource,
    boundary_mismatch,
    compute_coupling,
    compute_couplings,
    free_dipole_data,
    incident_field,
    incident_normal_derivative,
    measure,
    modal_coupler,
    modal_field,
    modal_mismatch,
    modal_scattered_field,
    read_far_field,
    scattered_field,
    sensor_angles,
    solve_transmission,
    write_far_field,
)
from core.geometry import ParametricCurve, build_curve, discretize
from core.kernels import gamma
from core.potentials import assemble_np_adjoint, assemble_single_layer, single_layer_matrix_offboundary
from core.spectrum import (
    DrudeMedium,
    compute_spectrum,
    drude_epsilon,
    find_resonances,
    tau_n,
    wavenumbers,
)


DELTA = 1e-8
OMEGA = 1.505e15
RADIUS = 3000 * DELTA
MOMENT = (-1 / np.sqrt(2), 1 / np.sqrt(2))


def make_source(position_nm=(18.65, 16.65), moment=MOMENT, omega=OMEGA):
    return DipoleSource(position=(position_nm[0] * 1e-9, position_nm[1] * 1e-9),
                        moment=tuple(moment), omega=omega)


@functools.lru_cache(maxsize=None)
def mesh_for(kind, M):
    return discretize(build_curve(ParametricCurve(kind=kind, delta=DELTA)), M)


@functools.lru_cache(maxsize=None)
def spectrum_for(kind, M, n_eig=16):
    return compute_spectrum(mesh_for(kind, M), n_eig)


def k_m():
    return wavenumbers(DrudeMedium(), OMEGA)[0]


# ============================================================
# Source
# ============================================================

def test_source_requires_unit_moment():
    with pytest.raises(ForwardSolveError):
        make_source(moment=(1.0, 1.0))
    with pytest.raises(ForwardSolveError):
        make_source(moment=(1.0, 0.0, 0.0))


def test_source_requires_positive_frequency():
    with pytest.raises(ForwardSolveError):
        make_source(omega=0.0)


def test_source_to_dict():
    d = make_source().to_dict()
    assert d["omega"] == OMEGA
    assert d["position"] == pytest.approx([18.65e-9, 16.65e-9])


def test_incident_field_is_directional_derivative():
    source = make_source()
    x = np.array([60e-9, -20e-9])
    p = source.p
    exact = incident_field(source, k_m(), x)

    def central(h):
        return (gamma(k_m(), x - source.z + h * p) - gamma(k_m(), x - source.z - h * p)) / (2 * h)

    e1 = abs(central(2e-9) - exact)
    e2 = abs(central(1e-9) - exact)
    assert e1 < 1e-2 * abs(exact)
    assert np.log2(e1 / e2) >= 1.9


def test_incident_field_is_linear_in_moment():
    source = make_source()
    x = np.array([[80e-9, 10e-9], [-40e-9, 55e-9]])
    a = incident_field(source, k_m(), x, moment=(1.0, 0.0))
    b = incident_field(source, k_m(), x, moment=(0.0, 1.0))
    np.testing.assert_allclose(incident_field(source, k_m(), x), MOMENT[0] * a + MOMENT[1] * b, rtol=1e-12)


def test_incident_field_decays_cylindrically():
    source = make_source()
    direction = np.array([0.8, -0.6])
    radii = np.array([1000.0, 4000.0]) * DELTA
    values = np.abs(incident_field(source, k_m(), radii[:, None] * direction)) * np.sqrt(radii)
    assert values[1] == pytest.approx(values[0], rel=0.05)


def test_incident_field_at_source_rejected():
    source = make_source()
    with pytest.raises(ForwardSolveError):
        incident_field(source, k_m(), source.z)


# ============================================================
# Transmission problem
# ============================================================

def test_source_inside_particle_rejected():
    with pytest.raises(ForwardSolveError, match="inside"):
        solve_transmission(mesh_for("diamond", 64), DrudeMedium(), make_source(position_nm=(1.0, 2.0)))


def test_transmission_residual_is_small():
    pair = solve_transmission(mesh_for("diamond", 128), DrudeMedium(), make_source())
    assert pair.residual < 1e-8
    assert pair.condition < 1e12
    assert pair.psi.shape == pair.phi.shape == (128,)


def test_no_contrast_means_no_scattering():
    mesh = mesh_for("diamond", 128)
    medium = DrudeMedium(omega_p=0.0)
    source = make_source(position_nm=(40.0, 30.0))
    pair = solve_transmission(mesh, medium, source)
    data = measure(mesh, medium, source, pair, RADIUS, 64)
    incident = incident_field(source, data.k_m, data.positions)
    scattered = scattered_field(mesh, medium, source, pair, data.positions)
    assert np.linalg.norm(scattered) <= 1e-8 * np.linalg.norm(incident)


def test_far_field_converges_with_mesh():
    medium = DrudeMedium()
    source = make_source()
    coarse = measure(mesh_for("diamond", 128), medium, source,
                     solve_transmission(mesh_for("diamond", 128), medium, source), RADIUS, 64)
    fine = measure(mesh_for("diamond", 256), medium, source,
                   solve_transmission(mesh_for("diamond", 256), medium, source), RADIUS, 64)
    assert np.linalg.norm(coarse.values - fine.values) < 1e-4 * np.linalg.norm(fine.values)


def test_resonant_enhancement_of_scattered_field():
    mesh = mesh_for("diamond", 128)
    medium = DrudeMedium()
    energies = []
    for omega in (OMEGA, 1.1 * OMEGA):
        source = make_source(omega=omega)
        pair = solve_transmission(mesh, medium, source)
        data = measure(mesh, medium, source, None, RADIUS, 64)
        energies.append(np.sum(np.abs(scattered_field(mesh, medium, source, pair, data.positions)) ** 2))
    assert energies[0] > 5 * energies[1]


# ============================================================
# Measurements
# ============================================================

def test_sensors_are_uniform_on_circle():
    data = free_dipole_data(make_source(), k_m(), RADIUS, 16)
    np.testing.assert_allclose(np.hypot(*data.positions.T), RADIUS, rtol=1e-14)
    np.testing.assert_allclose(np.diff(data.angles), 2 * np.pi / 16, rtol=1e-12)
    assert data.weights.sum() == pytest.approx(2 * np.pi * RADIUS)


def test_no_sensors_rejected():
    with pytest.raises(ForwardSolveError):
        sensor_angles(0)


def test_measure_without_density_is_incident_field():
    mesh = mesh_for("diamond", 64)
    source = make_source()
    data = measure(mesh, DrudeMedium(), source, None, RADIUS, 32)
    free = free_dipole_data(source, k_m(), RADIUS, 32)
    np.testing.assert_array_equal(data.values, free.values)
    assert data.metadata["M"] == 64


def test_measured_field_decays_cylindrically():
    mesh = mesh_for("diamond", 128)
    medium = DrudeMedium()
    source = make_source()
    pair = solve_transmission(mesh, medium, source)
    near = measure(mesh, medium, source, pair, RADIUS, 64)
    far = measure(mesh, medium, source, pair, 2 * RADIUS, 64)
    ratio = np.linalg.norm(far.values) / np.linalg.norm(near.values)
    assert ratio == pytest.approx(1 / np.sqrt(2), rel=0.05)


# ============================================================
# Modal expansion
# ============================================================

def test_modal_field_without_modes_is_incident():
    spectrum = spectrum_for("diamond", 64, 8)
    source = make_source()
    x = np.array([[100e-9, 0.0], [0.0, -70e-9]])
    np.testing.assert_array_equal(
        modal_field(spectrum, spectrum.mesh, DrudeMedium(), source, 0, x),
        incident_field(source, k_m(), x),
    )


def test_modal_mismatch_on_sensor_circle_decreases_with_modes():
    spectrum = spectrum_for("diamond", 256)
    medium = DrudeMedium()
    source = make_source()
    pair = solve_transmission(spectrum.mesh, medium, source)
    sensors = measure(spectrum.mesh, medium, source, None, RADIUS, 256).positions
    mismatch = [modal_mismatch(spectrum, spectrum.mesh, medium, source, pair, n, sensors)
                for n in (0, 2, 4, 6)]
    assert mismatch[0] == pytest.approx(1.0)
    assert all(b <= a + 1e-9 for a, b in zip(mismatch, mismatch[1:]))
    assert mismatch[-1] < 0.2


def test_boundary_mismatch_between_nodes_is_small():
    mesh = mesh_for("diamond", 256)
    medium = DrudeMedium()
    source = make_source()
    pair = solve_transmission(mesh, medium, source)
    assert boundary_mismatch(mesh, medium, source, pair) < 1e-4
    damaged = BiePair(psi=pair.psi, phi=1.01 * pair.phi)
    assert boundary_mismatch(mesh, medium, source, damaged) > 1e-3


def test_too_many_modes_rejected():
    spectrum = spectrum_for("diamond", 64, 8)
    with pytest.raises(ForwardSolveError):
        modal_scattered_field(spectrum, spectrum.mesh, DrudeMedium(), make_source(), 8, [RADIUS, 0.0])


def test_couplings_are_linear_in_moment():
    spectrum = spectrum_for("diamond", 64, 8)
    medium = DrudeMedium()
    a = compute_couplings(spectrum, spectrum.mesh, medium, make_source(), range(1, 8))
    b = compute_couplings(spectrum, spectrum.mesh, medium, make_source(moment=(-MOMENT[0], -MOMENT[1])), range(1, 8))
    np.testing.assert_allclose(b, -a, rtol=1e-10)


def test_single_coupling_matches_batch():
    spectrum = spectrum_for("diamond", 64, 8)
    medium = DrudeMedium()
    batch = compute_couplings(spectrum, spectrum.mesh, medium, make_source(), [1, 3])
    assert compute_coupling(spectrum, spectrum.mesh, medium, make_source(), 3) == pytest.approx(batch[1])


def test_couplings_require_spectrum_mesh():
    spectrum = spectrum_for("diamond", 64, 8)
    with pytest.raises(ForwardSolveError):
        compute_couplings(spectrum, mesh_for("diamond", 128), DrudeMedium(), make_source(), [1])


def test_coupler_matches_direct_projection():
    spectrum = spectrum_for("diamond", 128)
    medium = DrudeMedium()
    source = make_source()
    k_m_, k_d = wavenumbers(medium, OMEGA)
    eps_d = drude_epsilon(medium, OMEGA)
    mesh = spectrum.mesh
    u_in = incident_field(source, k_m_, mesh.nodes)
    du_in = incident_normal_derivative(source, k_m_, mesh)
    density = np.linalg.solve(assemble_single_layer(mesh, k_d).matrix, u_in)
    F = -du_in / medium.eps_m - (0.5 * density - assemble_np_adjoint(mesh, k_d).matrix @ density) / eps_d
    direct = [F @ spectrum.metric.gram @ spectrum.density(n) / tau_n(spectrum, medium, OMEGA, n)
              for n in range(1, 7)]
    coupled = compute_couplings(spectrum, mesh, medium, source, range(1, 7))
    np.testing.assert_allclose(coupled, direct, rtol=1e-8)


def test_coupler_columns_combine_into_moment():
    spectrum = spectrum_for("diamond", 64, 8)
    coupler = modal_coupler(spectrum, DrudeMedium(), OMEGA, [2, 4, 6])
    source = make_source()
    unit = coupler.unit_couplings(source.z)
    assert unit.shape == (3, 2)
    np.testing.assert_allclose(coupler.couplings(source.z, source.p), unit @ source.p, rtol=1e-12)
    assert coupler.modes == (2, 4, 6)


# ============================================================
# CSV + sidecar
# ============================================================

def test_far_field_file_round_trip():
    mesh = mesh_for("diamond", 64)
    source = make_source()
    data = measure(mesh, DrudeMedium(), source, None, RADIUS, 32)
    path = os.path.join(tempfile.mkdtemp(prefix="demirage_test_"), "far_field.csv")
    csv_path, sidecar = write_far_field(path, data)
    assert sidecar.suffix == ".json"
    back = read_far_field(csv_path)
    np.testing.assert_array_equal(back.values, data.values)
    np.testing.assert_array_equal(back.angles, data.angles)
    assert back.radius == data.radius
    assert back.k_m == data.k_m
    assert back.metadata["source"]["omega"] == OMEGA


def test_far_field_requires_sidecar():
    directory = tempfile.mkdtemp(prefix="demirage_test_")
    path = os.path.join(directory, "far_field.csv")
    with open(path, "w") as f:
        f.write("angle,re_u,im_u\n0.0,1.0,0.0\n")
    with pytest.raises(ForwardSolveError, match="sidecar"):
        read_far_field(path)


# ============================================================
# Diamond at its dipolar resonance
# ============================================================

@pytest.mark.slow
def test_dipolar_pair_dominates_far_field():
    spectrum = spectrum_for("diamond", 256)
    medium = DrudeMedium()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResonanceNotice)
        omega = find_resonances(spectrum, medium, (0.2 * medium.omega_p, 0.99 * medium.omega_p)).omega_for(4)
    assert omega == pytest.approx(OMEGA, rel=0.02)
    source = make_source(omega=omega)
    modes = list(range(1, 9))
    alphas = compute_couplings(spectrum, spectrum.mesh, medium, source, modes)
    sensors = measure(spectrum.mesh, medium, source, None, RADIUS, 256).positions
    fields = single_layer_matrix_offboundary(spectrum.mesh, wavenumbers(medium, omega)[0], sensors)
    contributions = np.linalg.norm(fields @ spectrum.densities[:, modes], axis=0) * np.abs(alphas)
    top = sorted(np.argsort(-contributions)[:2] + 1)
    assert top == [4, 6]
