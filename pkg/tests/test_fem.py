import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from dtnmaxwell.bisection import refine_uniform
from dtnmaxwell.dtn import ConfigurationError, WaveParams, dtn_factors
from dtnmaxwell.fem import (assemble, build_dof_map, check_resolution, dtn_coupling_block,
                            element_matrices, edge_integrals, face_degrees, FieldSolution,
                            hcurl_error, interpolate, solve, sphere_face_quadrature, tet_geometry,
                            whitney_values)
from dtnmaxwell.mesh import GeometryDescriptor, Mesh
from dtnmaxwell.meshgen import generate_shell_mesh
from dtnmaxwell.oracle import point_source_sampler
from dtnmaxwell.quadrature import tet_rule

W = WaveParams(2.0, 0.5, 0.1)
GEOM = GeometryDescriptor(0.5, 0.1)
REF_TET = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])


def _zero(x):
    z = np.zeros((len(x), 3), dtype=complex)
    return z, z


def _random_tet(rng):
    while True:
        p = rng.normal(size=(4, 3))
        J = p[1:] - p[0]
        if np.linalg.det(J) > 0.05:
            return p


@pytest.fixture(scope="module")
def shell_system(shell60):
    dofs = build_dof_map(shell60)
    F = dtn_factors(W, 3)
    sys = assemble(shell60, dofs, W, F, dirichlet="zero")
    return shell60, dofs, F, sys


class TestDofs:
    def test_single_tet(self):
        m = Mesh(REF_TET, np.array([[0, 1, 2, 3]]), np.zeros((0, 3), int), np.zeros(0, int))
        d = build_dof_map(m)
        assert d.n_dofs == 6
        np.testing.assert_array_equal(d.tet_signs, 1)

    def test_edge_count_matches_set(self, shell60):
        d = build_dof_map(shell60)
        ref = {tuple(sorted(e)) for t in shell60.tets for e in itertools.combinations(t, 2)}
        assert d.n_dofs == len(ref)
        assert {tuple(e) for e in d.edges} == ref

    def test_orientation_consistent(self, shell_coarse):
        d = build_dof_map(shell_coarse)
        from dtnmaxwell.mesh import LOCAL_EDGES
        loc = shell_coarse.tets[:, LOCAL_EDGES]
        g = d.edges[d.tet_edges]
        fwd = (loc[..., 0] == g[..., 0]) & (loc[..., 1] == g[..., 1])
        bwd = (loc[..., 0] == g[..., 1]) & (loc[..., 1] == g[..., 0])
        assert np.all(fwd | bwd)
        np.testing.assert_array_equal(d.tet_signs, np.where(fwd, 1, -1))

    def test_boundary_sets(self, shell60):
        d = build_dof_map(shell60)
        r = np.linalg.norm(shell60.vertices[d.edges], axis=2)
        np.testing.assert_allclose(r[d.sphere], 0.5)
        np.testing.assert_allclose(r[d.dirichlet], 0.1)

    def test_edge_index(self, shell60):
        d = build_dof_map(shell60)
        e = d.edges[[3, 17]]
        np.testing.assert_array_equal(d.edge_index(e[:, 1], e[:, 0]), [3, 17])
        with pytest.raises(KeyError):
            d.edge_index(0, 0)


class TestElement:
    def test_whitney_dofs_are_kronecker(self, rng):
        p = _random_tet(rng)
        grads, _ = tet_geometry(p, np.array([[0, 1, 2, 3]]))
        from dtnmaxwell.mesh import LOCAL_EDGES
        x, wq = np.polynomial.legendre.leggauss(3)
        s = 0.5 * (x + 1)
        for i, (a, b) in enumerate(LOCAL_EDGES):
            bary = np.zeros((s.size, 4))
            bary[:, a], bary[:, b] = 1 - s, s
            vals = whitney_values(grads, bary)[0]                  # (q, 6, 3)
            integ = 0.5 * np.einsum("q,qec,c->e", wq, vals, p[b] - p[a])
            np.testing.assert_allclose(integ, np.eye(6)[i], atol=1e-13)

    def test_against_quadrature(self, rng):
        p = _random_tet(rng)
        K, M = element_matrices(p)
        grads, vol = tet_geometry(p, np.array([[0, 1, 2, 3]]))
        bary, wq = tet_rule(4)
        Wv = whitney_values(grads, bary)[0]
        Mq = vol[0] * np.einsum("q,qic,qjc->ij", wq, Wv, Wv)
        np.testing.assert_allclose(M, Mq, rtol=1e-12, atol=1e-14)
        # curls by differencing the barycentric field
        from dtnmaxwell.mesh import LOCAL_EDGES
        curls = 2 * np.cross(grads[0, LOCAL_EDGES[:, 0]], grads[0, LOCAL_EDGES[:, 1]])
        np.testing.assert_allclose(K, vol[0] * curls @ curls.T, rtol=1e-12)

    def test_mass_spd_stiffness_psd(self, rng):
        K, M = element_matrices(np.stack([_random_tet(rng) for _ in range(5)]))
        for k, m in zip(K, M):
            np.testing.assert_allclose(m, m.T, atol=1e-14)
            assert np.linalg.eigvalsh(m).min() > 0
            ev = np.linalg.eigvalsh(k)
            assert ev.min() > -1e-12 * ev.max()
            assert np.sum(ev > 1e-10 * ev.max()) == 3      # curl image is 3-dimensional

    def test_gradient_in_kernel(self, rng):
        p = _random_tet(rng)
        K, _ = element_matrices(p)
        from dtnmaxwell.mesh import LOCAL_EDGES
        phi = rng.normal(size=4)
        g = phi[LOCAL_EDGES[:, 1]] - phi[LOCAL_EDGES[:, 0]]
        assert np.abs(K @ g).max() < 1e-12 * np.abs(K).max()

    @given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
    def test_constant_field_reproduced(self, a, b, c):
        E0 = np.array([a, b, c])
        p = REF_TET * 0.7 + 0.1
        from dtnmaxwell.mesh import LOCAL_EDGES
        coef = (p[LOCAL_EDGES[:, 1]] - p[LOCAL_EDGES[:, 0]]) @ E0
        grads, _ = tet_geometry(p, np.array([[0, 1, 2, 3]]))
        bary, _ = tet_rule(4)
        vals = np.einsum("e,qec->qc", coef, whitney_values(grads, bary)[0])
        np.testing.assert_allclose(vals, np.broadcast_to(E0, vals.shape), atol=1e-12)

    def test_inverted_tet_rejected(self):
        with pytest.raises(ValueError, match="inverted"):
            element_matrices(REF_TET[[1, 0, 2, 3]])


class TestBoundaryQuadrature:
    def test_weights_integrate_sphere_area(self, shell60):
        # the projection Jacobian is smooth, not polynomial: spectral convergence
        errs = [abs(sphere_face_quadrature(shell60, 0.5, d).weights.sum() / np.pi - 1)
                for d in (4, 8, 16, 24)]
        assert all(b < 1e-2 * a for a, b in zip(errs[:2], errs[1:3]))
        assert errs[-1] < 1e-13
        fq = sphere_face_quadrature(shell60, 0.5, 8)
        np.testing.assert_allclose(np.linalg.norm(fq.points, axis=1), 0.5)

    def test_face_degrees_monotone_in_N(self, shell_coarse):
        fq = sphere_face_quadrature(shell_coarse, 0.5, 60)
        faces = shell_coarse.faces_with_tag(2)
        fp = shell_coarse.vertices[faces[:1]]
        d = [int(face_degrees(fp, 0.5, N, 60)[0]) for N in (1, 4, 8, 16)]
        assert d == sorted(d) and d[0] >= 4

    def test_adaptive_matches_uniform(self, shell_coarse):
        m = refine_uniform(refine_uniform(shell_coarse, GEOM), GEOM)
        dofs = build_dof_map(m)
        N = 11
        F = dtn_factors(W, N)
        fq = sphere_face_quadrature(m, 0.5, 2 * N + 2, N=N)
        assert fq.face_degree.min() < 2 * N + 2
        a = dtn_coupling_block(m, dofs, F, W, fq).P
        b = dtn_coupling_block(m, dofs, F, W, degree=2 * N + 2).P
        assert np.abs(a - b).max() <= 1e-12 * np.abs(b).max()

    def test_underresolved_rule_rejected(self, shell60):
        fq = sphere_face_quadrature(shell60, 0.5, 6)
        with pytest.raises(ConfigurationError):
            check_resolution(fq, 3)
        fq = sphere_face_quadrature(shell60, 0.5, 20, N=2)
        with pytest.raises(ConfigurationError):
            check_resolution(fq, 5)


class TestCoupling:
    def test_zero_factors_zero_block(self, shell60):
        dofs = build_dof_map(shell60)
        F = dtn_factors(W, 2)
        F0 = type(F)(**{k: (np.zeros_like(v) if isinstance(v, np.ndarray) else v)
                        for k, v in vars(F).items()})
        B = dtn_coupling_block(shell60, dofs, F0, W).dense()
        assert np.abs(B).max() == 0

    def test_complex_symmetric(self, shell_system):
        _, _, _, sys = shell_system
        B = sys.coupling.dense()
        assert np.abs(B - B.T).max() <= 1e-12 * np.abs(B).max()

    def test_apply_matches_full_matrix(self, shell_system, rng):
        _, dofs, _, sys = shell_system
        x = rng.normal(size=dofs.n_dofs) + 1j * rng.normal(size=dofs.n_dofs)
        np.testing.assert_allclose(sys.apply(x), sys.full_matrix() @ x, rtol=1e-12, atol=1e-12)


class TestSystem:
    def test_homogeneous(self, shell_system):
        _, dofs, _, sys = shell_system
        assert np.abs(sys.rhs).max() == 0
        sol = solve(sys)
        assert np.abs(sol.coeffs).max() == 0

    def test_full_matrix_symmetric(self, shell_system):
        A = shell_system[3].full_matrix()
        assert abs(A - A.T).max() <= 1e-10 * abs(A).max()

    def test_gradient_kernel(self, shell_system, rng):
        m, dofs, _, sys = shell_system
        phi = rng.normal(size=m.n_vertices)
        g = phi[dofs.edges[:, 1]] - phi[dofs.edges[:, 0]]
        A = sys.A
        K = (A + W.kappa ** 2 * _global_mass(m, dofs)).real
        assert np.abs(K @ g).max() <= 1e-12 * abs(K).max() * np.abs(g).max()

    def test_missing_dirichlet_is_error(self, shell60):
        dofs = build_dof_map(shell60)
        with pytest.raises(ConfigurationError):
            assemble(shell60, dofs, W, dtn_factors(W, 2))

    def test_dirichlet_shape_checked(self, shell60):
        dofs = build_dof_map(shell60)
        with pytest.raises(ConfigurationError):
            assemble(shell60, dofs, W, dtn_factors(W, 2), dirichlet=np.zeros(3))

    def test_residual_small(self, shell60):
        dofs = build_dof_map(shell60)
        sys = assemble(shell60, dofs, W, dtn_factors(W, 3), dirichlet=point_source_sampler(2.0))
        sol = solve(sys)
        assert sol.residual < 1e-10
        np.testing.assert_allclose(sol.coeffs[dofs.dirichlet], sys.dirichlet_values)

    def test_lowrank_path_agrees(self, shell60):
        dofs = build_dof_map(shell60)
        F = dtn_factors(W, 3)
        a = solve(assemble(shell60, dofs, W, F, dirichlet=point_source_sampler(2.0)))
        b = solve(assemble(shell60, dofs, W, F, dirichlet=point_source_sampler(2.0), lowrank_threshold=0))
        assert b.info["lowrank"] and not a.info["lowrank"]
        np.testing.assert_allclose(a.coeffs, b.coeffs, rtol=1e-9, atol=1e-12)

    def test_permutation_invariance(self, shell60, rng):
        perm = rng.permutation(shell60.n_vertices)
        inv = np.argsort(perm)
        m2 = Mesh(shell60.vertices[perm], inv[shell60.tets], inv[shell60.bfaces], shell60.btags)
        e1 = _dipole_error(shell60)
        e2 = _dipole_error(m2)
        assert abs(e1 - e2) <= 1e-8 * e1


def _global_mass(m, dofs):
    from dtnmaxwell.fem import _mass_closed_form
    grads, vol = tet_geometry(m.vertices, m.tets)
    s = dofs.tet_signs.astype(float)
    Me = _mass_closed_form(grads, vol) * s[:, :, None] * s[:, None, :]
    rows = np.repeat(dofs.tet_edges, 6, axis=1).ravel()
    cols = np.tile(dofs.tet_edges, (1, 6)).ravel()
    return sp.csr_matrix((Me.ravel(), (rows, cols)), shape=(dofs.n_dofs,) * 2)


def _dipole_error(m, N=2):
    dofs = build_dof_map(m)
    ex = point_source_sampler(2.0)
    sol = solve(assemble(m, dofs, W, dtn_factors(W, N), dirichlet=ex))
    return hcurl_error(sol, ex)


class TestErrors:
    def test_zero_field_zero_error(self, shell60):
        dofs = build_dof_map(shell60)
        assert hcurl_error(FieldSolution(shell60, dofs, np.zeros(dofs.n_dofs, complex)), _zero) == 0.0

    def test_self_error_zero(self, shell60):
        E0 = np.array([1.0, 2.0, -0.5])
        f = lambda x: (np.broadcast_to(E0, x.shape).astype(complex), np.zeros(x.shape, complex))
        dofs = build_dof_map(shell60)
        a = interpolate(shell60, dofs, f)
        d = FieldSolution(shell60, dofs, a.coeffs - interpolate(shell60, dofs, f).coeffs)
        assert hcurl_error(d, _zero) == 0.0

    def test_constant_interpolant_exact(self, shell60):
        E0 = np.array([0.3, -1.0, 2.0])
        f = lambda x: (np.broadcast_to(E0, x.shape).astype(complex), np.zeros(x.shape, complex))
        sol = interpolate(shell60, build_dof_map(shell60), f)
        assert hcurl_error(sol, f) < 1e-12

    def test_linear_edge_integrals_exact(self, shell60):
        d = build_dof_map(shell60)
        f = lambda x: np.stack([x[:, 1], x[:, 2] ** 2, x[:, 0]], axis=1)
        v = shell60.vertices
        c2 = edge_integrals(v, d.edges, f, 2)
        c5 = edge_integrals(v, d.edges, f, 5)
        np.testing.assert_allclose(c2, c5, rtol=1e-13, atol=1e-15)

    def test_low_degree_rejected(self, shell60):
        d = build_dof_map(shell60)
        with pytest.raises(ValueError):
            hcurl_error(FieldSolution(shell60, d, np.zeros(d.n_dofs, complex)), _zero, degree=2)

    def test_uniform_refinement_converges(self):
        m = generate_shell_mesh(0.1, 0.5, 1, 1)
        errs, ndof = [], []
        for _ in range(2):
            errs.append(_dipole_error(m))
            ndof.append(build_dof_map(m).n_dofs)
            m = refine_uniform(m, GEOM)
        errs.append(_dipole_error(m))
        ndof.append(build_dof_map(m).n_dofs)
        assert errs[0] > errs[1] > errs[2]
        # error ~ h^rate with h ~ ndof^(-1/3)
        rate = -3 * np.polyfit(np.log(ndof), np.log(errs), 1)[0]
        assert rate >= 0.8
