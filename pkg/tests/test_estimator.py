import numpy as np
import pytest
from hypothesis import given, strategies as st

from dtnmaxwell.dtn import ConfigurationError, WaveParams, dtn_factors
from dtnmaxwell.estimator import compute_indicators, face_topology, mark_elements
from dtnmaxwell.fem import FieldSolution, assemble, build_dof_map, interpolate, solve
from dtnmaxwell.mesh import Mesh
from dtnmaxwell.oracle import point_source_sampler

W = WaveParams(2.0, 0.5, 0.1)


@pytest.fixture(scope="module")
def dipole(shell_coarse):
    dofs = build_dof_map(shell_coarse)
    F = dtn_factors(W, 3)
    sys = assemble(shell_coarse, dofs, W, F, dirichlet=point_source_sampler(2.0))
    sol = solve(sys)
    return sol, F, sys


def _report(sol, F, sys, **kw):
    return compute_indicators(sol, W, F, None, _fq(sol, F), sys.coupling, **kw)


def _fq(sol, F):
    from dtnmaxwell.fem import sphere_face_quadrature
    return sphere_face_quadrature(sol.mesh, W.R, max(4, 2 * F.N + 2), N=F.N)


def _two_tets():
    v = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]])
    t = np.array([[0, 1, 2, 3], [1, 2, 3, 4]])
    p = v[t]
    if np.linalg.det(p[1, 1:] - p[1, 0]) < 0:
        t[1, [0, 1]] = t[1, [1, 0]]
    return Mesh(v, t, np.zeros((0, 3), int), np.zeros(0, int))


class TestIndicators:
    def test_zero_solution(self, dipole):
        sol, F, sys = dipole
        z = FieldSolution(sol.mesh, sol.dofs, np.zeros_like(sol.coeffs))
        rep = _report(z, F, sys)
        assert rep.eps_h == 0 and np.all(rep.eta == 0)

    def test_constant_field_no_interior_jumps(self):
        m = _two_tets()
        E0 = np.array([0.2, -0.4, 1.0])
        f = lambda x: (np.broadcast_to(E0, x.shape).astype(complex), np.zeros(x.shape, complex))
        sol = interpolate(m, build_dof_map(m), f)
        rep = compute_indicators(sol, W, None)
        assert rep.interior_jump.max() < 1e-24
        # kappa^2 E is the only element residual left
        vol = m.volumes()
        h = m.diameters()
        np.testing.assert_allclose(rep.element, h ** 2 * W.kappa ** 4 * (E0 @ E0) * vol, rtol=1e-12)

    def test_sum_of_squares(self, dipole):
        rep = _report(*dipole)
        np.testing.assert_allclose(rep.eps_h ** 2, np.sum(rep.eta ** 2), rtol=1e-13)
        np.testing.assert_allclose(rep.eta ** 2, rep.element + rep.interior_jump + rep.boundary_jump,
                                   rtol=1e-13)

    def test_boundary_terms_only_on_sphere_tets(self, dipole):
        sol, F, sys = dipole
        rep = _report(*dipole)
        fq = _fq(sol, F)
        on = np.zeros(sol.mesh.n_tets, bool)
        on[fq.face_tet] = True
        assert np.all(rep.boundary_jump[~on] == 0)
        assert np.all(rep.boundary_jump[on] > 0)

    @given(st.complex_numbers(min_magnitude=0.1, max_magnitude=10, allow_nan=False, allow_infinity=False))
    def test_scaling_homogeneity(self, dipole, s):
        sol, F, sys = dipole
        rep = _report(sol, F, sys)
        rs = _report(FieldSolution(sol.mesh, sol.dofs, s * sol.coeffs), F, sys)
        np.testing.assert_allclose(rs.eta, abs(s) * rep.eta, rtol=1e-10, atol=1e-14)

    def test_locality(self, dipole):
        sol, F, sys = dipole
        rep = _report(sol, F, sys)
        c = sol.coeffs.copy()
        e = 7
        c[e] += 1.0
        rp = _report(FieldSolution(sol.mesh, sol.dofs, c), F, sys)
        changed = np.nonzero(np.abs(rp.eta - rep.eta) > 1e-12 * rep.eta.max())[0]
        # only tets that share the edge or a face with a tet that does
        touch = np.nonzero(np.any(sol.dofs.tet_edges == e, axis=1))[0]
        topo = face_topology(sol.mesh.tets)
        nb = set(touch)
        for a, b in zip(topo.tet1, topo.tet2):
            if a in touch or b in touch:
                nb |= {a, b}
        assert set(changed) <= nb and set(touch) <= set(changed)

    def test_truncation_indicator_present(self, dipole):
        sol, F, sys = dipole
        rep = _report(sol, F, sys, f_norm=1.0)
        assert 0 < rep.eps_N < 1e-1
        assert rep.total >= rep.eps_h

    def test_needs_quadrature_for_boundary(self, dipole):
        sol, F, _ = dipole
        with pytest.raises(ConfigurationError):
            compute_indicators(sol, W, F)

    def test_face_topology_counts(self, shell_coarse):
        topo = face_topology(shell_coarse.tets)
        n_faces_total = 4 * shell_coarse.n_tets
        assert 2 * topo.tet1.size + shell_coarse.bfaces.shape[0] == n_faces_total
        assert np.all(topo.tet1 != topo.tet2)


class TestMarking:
    def test_example(self):
        r = mark_elements([1.0, 0.6, 0.4, 0.1], 0.5)
        assert sorted(r) == [0, 1] and not r.converged

    def test_strict_threshold(self):
        assert list(mark_elements([1.0, 0.5], 0.5)) == [0]

    def test_small_theta_marks_all_positive(self):
        assert sorted(mark_elements([1.0, 1e-6, 0.3, 0.0], 1e-9)) == [0, 1, 2]

    def test_all_zero_converged(self):
        r = mark_elements(np.zeros(5), 0.5)
        assert r.converged and len(r) == 0

    @pytest.mark.parametrize("theta", [0.0, 1.0, -0.1, 1.5])
    def test_invalid_theta(self, theta):
        with pytest.raises(ValueError):
            mark_elements([1.0, 2.0], theta)

    def test_empty(self):
        with pytest.raises(ValueError):
            mark_elements([], 0.5)

    @given(st.lists(st.floats(0, 1e3), min_size=1, max_size=50), st.floats(0.01, 0.99))
    def test_max_always_marked(self, eta, theta):
        r = mark_elements(eta, theta)
        if max(eta) > 0:
            assert int(np.argmax(eta)) in set(r)
            assert all(eta[i] > theta * max(eta) for i in r)
