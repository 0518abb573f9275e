import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from feprnn.constitutive import MatrixState, consistent_tangent, fiber_stress, matrix_model, matrix_stress
from feprnn.errors import DomainError
from feprnn.kinematics import in_plane_rotation
from feprnn.micromodel import Rve, RveMesh, VoigtMixture, generate_dataset, rve_solve_step, voigt_evaluate
from feprnn.pathgen import LoadPath, PathSpec, sample_paths
from oracles import reuss_voigt

I3 = np.eye(3)


@pytest.fixture(scope="module")
def mesh():
    return RveMesh.build(4, 0.4)


@pytest.fixture(scope="module")
def path():
    return sample_paths(PathSpec(count=1, steps=12, seed=3))[0]


def test_single_constituent_mixture(shipped, path):
    _, mp = shipped
    out = voigt_evaluate(VoigtMixture([(mp, 1.0)]), path)
    state = MatrixState.fresh(mp)
    for k in range(path.n_steps):
        s, state = matrix_stress(path.U[k + 1], path.dt[k], state, mp)
        assert np.array_equal(out[k + 1], s)
    assert out.shape == (path.n_steps + 1, 3, 3)


def test_identical_constituents(shipped, path):
    _, mp = shipped
    a = voigt_evaluate(VoigtMixture([(mp, 0.25), (mp, 0.75)]), path)
    b = voigt_evaluate(VoigtMixture([(mp, 1.0)]), path)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-12)


def test_fiber_matrix_hand_sum(shipped):
    fp, mp = shipped
    F = np.diag([1.0, 1.004, 1.0])
    mix = VoigtMixture([(fp, 0.4), (mp, 0.6)])
    s, _ = mix.evaluate(F, 2.0, mix.fresh_state())
    sm, _ = matrix_stress(F, 2.0, MatrixState.fresh(mp), mp)
    assert np.allclose(s, 0.4 * fiber_stress(F, fp) + 0.6 * sm, rtol=1e-14)


@pytest.mark.parametrize("w", [[0.5, 0.6], [0.0, 1.0], [1.2, -0.2]])
def test_bad_weights(shipped, w):
    fp, mp = shipped
    with pytest.raises(DomainError):
        VoigtMixture([(fp, w[0]), (mp, w[1])])


@given(st.floats(-180, 180))
def test_voigt_objective(shipped, angle):
    fp, mp = shipped
    mix = VoigtMixture([(fp, 0.4), (mp, 0.6)])
    F = np.array([[1.01, 0.02, 0.0], [0.01, 0.99, 0.005], [0.0, -0.01, 1.0]])
    Q = in_plane_rotation(angle)
    a, _ = mix.evaluate(F, 1.0, mix.fresh_state())
    b, _ = mix.evaluate(Q @ F, 1.0, mix.fresh_state())
    assert np.max(np.abs(Q @ a @ Q.T - b)) < 1e-8


def test_mesh_fraction_and_periodicity(mesh):
    assert abs(mesh.fiber_fraction - 0.4) < 0.02
    assert mesh.volume == pytest.approx(1.0, abs=1e-12)
    n, m = mesh.n, mesh.n + 1
    P = mesh.periodic.reshape(m, m, m)
    assert np.array_equal(P[0], P[n]) and np.array_equal(P[:, 0], P[:, n]) and np.array_equal(P[:, :, 0], P[:, :, n])
    assert set(mesh.periodic) == set(range(n**3))


def test_uniform_stress_homogenizes_exactly(mesh):
    w = mesh.weights
    s = np.array([[3.0, 1.0, 0.0], [1.0, -2.0, 0.5], [0.0, 0.5, 4.0]])
    avg = np.einsum("eq,ij->ij", w, s) / w.sum()
    assert np.allclose(avg, s, rtol=1e-14)


def test_rve_identity_zero_iterations(shipped, mesh):
    rve = Rve(mesh, *shipped)
    s, _ = rve_solve_step(rve, I3, 1.0, rve.fresh_state())
    assert np.max(np.abs(s)) == 0.0 and rve.last_iterations == 0


def test_rve_patch_all_matrix(shipped, mesh, rng):
    fp, mp = shipped
    homo = dataclasses.replace(mesh, fiber=np.zeros_like(mesh.fiber))
    rve = Rve(homo, fp, mp)
    F = I3 + 0.03 * rng.uniform(-1, 1, (3, 3))
    s, _ = rve.solve_step(F, 1.0, rve.fresh_state())
    ref, _ = matrix_stress(F, 1.0, MatrixState.fresh(mp), mp)
    assert np.max(np.abs(s - ref)) < 1e-8


def test_rve_transverse_modulus_between_bounds(shipped, mesh):
    fp, mp = shipped
    rve = Rve(mesh, fp, mp)
    s, _ = rve.solve_step(np.diag([1.0, 1.001, 1.0]), 1.0, rve.fresh_state())
    E = s[1, 1] / 1e-3
    Cm = consistent_tangent(matrix_model(mp), I3, 1.0, MatrixState.fresh(mp))
    lo, hi = reuss_voigt(fp.small_strain_stiffness(), Cm, mesh.fiber_fraction)
    assert lo < E < hi


def test_rve_shift_invariance(shipped, mesh, rng):
    rve = Rve(mesh, *shipped)
    shifted = Rve(RveMesh.build(4, 0.4, shift=(1, 2)), *shipped)
    F = I3 + 0.02 * rng.uniform(-1, 1, (3, 3))
    a, _ = rve.solve_step(F, 1.0, rve.fresh_state())
    b, _ = shifted.solve_step(F, 1.0, shifted.fresh_state())
    assert np.max(np.abs(a - b)) < 1e-6


def test_generate_dataset_counts_and_skips(shipped):
    fp, mp = shipped
    mix = VoigtMixture([(fp, 0.4), (mp, 0.6)])
    paths = sample_paths(PathSpec(count=6, steps=8, seed=5))
    bad = LoadPath(np.stack([I3, np.diag([1.0, 1.0, -1.0])]), np.array([1.0]))
    empty = LoadPath(I3[None], np.zeros(0))
    ds = generate_dataset(mix, paths + [bad, empty], seed=5)
    assert len(ds) == 7 and ds.skipped == 1
    assert ds.stress[-1].shape == (1, 6) and np.all(ds.stress[-1] == 0.0)
    for p, s in zip(ds.paths, ds.stress):
        assert s.shape == (p.n_steps + 1, 6) and np.all(s[0] == 0.0)
    assert ds.level == 0 and ds.seed == 5 and len(ds.properties_hash) == 64
    with pytest.raises(DomainError):
        generate_dataset(mix, [])


def test_rve_dataset_level(shipped):
    rve = Rve(RveMesh.build(4, 0.4), *shipped)
    ds = generate_dataset(rve, sample_paths(PathSpec(count=1, steps=2, seed=0, amplitude=0.01)))
    assert ds.level == 1 and len(ds) == 1
