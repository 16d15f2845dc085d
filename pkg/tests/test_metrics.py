import numpy as np
import pytest

from vesselpath.errors import (
    ConstructionError,
    DegenerateFeatureRangeError,
    DomainError,
    ParameterError,
)
from vesselpath.fields import GridSpec, ScalarField2D, SymMat2Field, VectorField2D
from vesselpath.metrics import (
    LiftedGrid,
    MetricParams,
    ResolvedMetricParams,
    baseline_tensor,
    coherence_scale,
    floor_potential,
    lifted_tensor_field,
    path_energy,
    potential,
    spatial_tensor,
)
from vesselpath.oof import OofParams, eigen2x2, oof_multiscale
from vesselpath.paths import LiftedPolyline, Polyline
from vesselpath.phantoms import straight_tube_case


def const_field(shape, value):
    return ScalarField2D.from_array(np.full(shape, float(value)))


def axis_frame(shape):
    q1 = np.zeros(shape + (2,))
    q1[..., 0] = 1.0
    q2 = np.zeros(shape + (2,))
    q2[..., 1] = 1.0
    spec = GridSpec(shape[1], shape[0])
    return VectorField2D(spec, q1), VectorField2D(spec, q2)


class TestPotential:
    def test_zero_vesselness(self):
        w = potential(const_field((4, 4), 0.0), alpha=3.0)
        assert np.all(w.values == 1.0)

    def test_zero_alpha(self):
        w = potential(const_field((4, 4), 5.0), alpha=0.0)
        assert np.all(w.values == 1.0)

    def test_log_two(self):
        w = potential(const_field((4, 4), 1.0), alpha=np.log(2.0))
        assert np.allclose(w.values, 0.5)

    def test_monotone_decreasing(self):
        p = ScalarField2D.from_array(np.linspace(0, 2, 16).reshape(4, 4))
        w = potential(p, alpha=1.5).values
        assert np.all(np.diff(w.ravel()) <= 0)
        assert np.all((w > 0) & (w <= 1))


class TestSpatialTensor:
    def test_unit_potential_gives_identity(self):
        q1, q2 = axis_frame((5, 5))
        m = spatial_tensor(const_field((5, 5), 1.0), q1, q2)
        assert np.allclose(m.m11, 1.0) and np.allclose(m.m22, 1.0)
        assert np.allclose(m.m12, 0.0)

    def test_axis_aligned(self):
        q1, q2 = axis_frame((3, 3))
        m = spatial_tensor(const_field((3, 3), 0.25), q1, q2)
        assert np.allclose(m.m11, 0.25)
        assert np.allclose(m.m22, 1.0)
        assert np.allclose(m.m12, 0.0)

    def test_random_frames_roundtrip(self):
        rng = np.random.default_rng(20)
        shape = (6, 7)
        ang = rng.uniform(0, 2 * np.pi, size=shape)
        q1v = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        q2v = np.stack([-np.sin(ang), np.cos(ang)], axis=-1)
        spec = GridSpec(shape[1], shape[0])
        w = rng.uniform(0.05, 1.0, size=shape)
        m = spatial_tensor(
            ScalarField2D(spec, w), VectorField2D(spec, q1v), VectorField2D(spec, q2v)
        )
        for iy in range(shape[0]):
            for ix in range(shape[1]):
                xi1, xi2, v1, v2 = eigen2x2(m.matrix_at(ix, iy))
                assert xi1 == pytest.approx(w[iy, ix], abs=1e-10)
                assert xi2 == pytest.approx(1.0, abs=1e-10)
                assert abs(abs(np.dot(v1, q1v[iy, ix])) - 1) <= 1e-10

    def test_rejects_bad_frame(self):
        q1, _ = axis_frame((3, 3))
        with pytest.raises(ConstructionError):
            spatial_tensor(const_field((3, 3), 0.5), q1, q1)


class TestCoherenceScale:
    def test_equal_inputs(self):
        assert coherence_scale(0.7, 0.7, lam=25.0) == 1.0

    def test_zero_lambda(self):
        assert coherence_scale(0.1, 0.9, lam=0.0) == 1.0

    def test_e_at_unit_exponent(self):
        assert coherence_scale(0.3, 0.4, lam=10.0, p=1.0) == pytest.approx(np.e, rel=1e-12)

    def test_symmetric_monotone(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            a, b = rng.uniform(0, 1, 2)
            s = coherence_scale(a, b, 4.0)
            assert s == coherence_scale(b, a, 4.0)
            assert s >= 1.0
        gaps = np.linspace(0, 1, 11)
        vals = [coherence_scale(0.0, g, 3.0) for g in gaps]
        assert np.all(np.diff(vals) > 0)


class TestLiftedTensorField:
    def test_flat_everything_gives_identity(self):
        shape = (4, 5)
        spec = GridSpec(shape[1], shape[0])
        q1, q2 = axis_frame(shape)
        m = spatial_tensor(const_field(shape, 1.0), q1, q2)
        grid = LiftedGrid.build(spec, theta_max=1.0, levels=4)
        feature = ScalarField2D(spec, np.linspace(0, 1, 20).reshape(shape))
        params = ResolvedMetricParams(alpha=0.0, beta=1.0, lam=0.0, levels=4)
        field = lifted_tensor_field(m, const_field(shape, 1.0), feature, grid, params)
        for il in range(4):
            t = field.tensor_at(2, 1, il)
            assert np.allclose(t, np.eye(3))

    def test_on_graph_node_unscaled(self):
        shape = (4, 4)
        spec = GridSpec(4, 4)
        q1, q2 = axis_frame(shape)
        omega = const_field(shape, 0.5)
        m = spatial_tensor(omega, q1, q2)
        feature_vals = np.full(shape, 0.25)
        feature_vals[0, 0] = 1.0  # pins the range
        grid = LiftedGrid.build(spec, theta_max=1.0, levels=5)
        params = ResolvedMetricParams(alpha=0.0, beta=2.0, lam=7.0, levels=5)
        field = lifted_tensor_field(m, omega, ScalarField2D(spec, feature_vals), grid, params)
        # level 1 has theta = 0.25 = feature at (2, 2): scale is exactly 1
        t = field.tensor_at(2, 2, 1)
        assert np.allclose(t[:2, :2], [[0.5, 0.0], [0.0, 1.0]])
        assert t[2, 2] == pytest.approx(2.0 * 0.5)

    def test_random_instance_is_psd(self):
        rng = np.random.default_rng(22)
        shape = (8, 8)
        spec = GridSpec(8, 8)
        ang = rng.uniform(0, 2 * np.pi, size=shape)
        q1 = VectorField2D(spec, np.stack([np.cos(ang), np.sin(ang)], axis=-1))
        q2 = VectorField2D(spec, np.stack([-np.sin(ang), np.cos(ang)], axis=-1))
        omega = ScalarField2D(spec, rng.uniform(0.001, 1.0, size=shape))
        m = spatial_tensor(omega, q1, q2)
        feature_vals = rng.uniform(0, 1, size=shape)
        feature_vals[0, 0] = 1.0
        grid = LiftedGrid.build(spec, theta_max=1.0, levels=5)
        params = ResolvedMetricParams(alpha=1.0, beta=0.5, lam=3.0, levels=5)
        field = lifted_tensor_field(m, omega, ScalarField2D(spec, feature_vals), grid, params)
        for il in range(5):
            for iy in range(8):
                for ix in range(8):
                    eigs = np.linalg.eigvalsh(field.tensor_at(ix, iy, il))
                    assert eigs.min() > 0
        dense = field.materialize()
        assert dense.min_eigenvalue() > 0
        assert dense.shape == (5, 8, 8)

    def test_beta_zero_gets_floor(self):
        shape = (3, 3)
        spec = GridSpec(3, 3)
        q1, q2 = axis_frame(shape)
        omega = const_field(shape, 1.0)
        m = spatial_tensor(omega, q1, q2)
        feature = ScalarField2D(spec, np.array([[0, 0, 0], [0, 0.5, 0], [0, 0, 1.0]]))
        grid = LiftedGrid.build(spec, theta_max=1.0, levels=3)
        params = ResolvedMetricParams(alpha=0.0, beta=0.0, lam=0.0, levels=3)
        field = lifted_tensor_field(m, omega, feature, grid, params)
        assert field.tensor_at(1, 1, 0)[2, 2] == pytest.approx(1e-6)

    def test_degenerate_feature_range(self):
        with pytest.raises(DegenerateFeatureRangeError):
            LiftedGrid.build(GridSpec(4, 4), theta_max=0.0, levels=5)

    def test_feature_range_mismatch(self):
        shape = (3, 3)
        spec = GridSpec(3, 3)
        q1, q2 = axis_frame(shape)
        omega = const_field(shape, 1.0)
        m = spatial_tensor(omega, q1, q2)
        grid = LiftedGrid.build(spec, theta_max=2.0, levels=3)
        params = ResolvedMetricParams(alpha=0.0, beta=1.0, lam=0.0, levels=3)
        with pytest.raises(ParameterError):
            lifted_tensor_field(m, omega, const_field(shape, 1.0), grid, params)


class TestMetricParamsResolve:
    def test_auto_alpha_spans_omega(self):
        vals = np.zeros((10, 10))
        vals[5, 5] = 2.0
        p = ScalarField2D.from_array(vals)
        params = MetricParams().resolve(p, theta_max=1.0)
        p99 = np.percentile(vals, 99)
        assert params.alpha == pytest.approx(-np.log(0.01) / p99)

    def test_auto_lambda_reaches_e_at_tenth(self):
        p = const_field((4, 4), 0.0)
        params = MetricParams().resolve(p, theta_max=0.5)
        assert coherence_scale(0.0, 0.05, params.lam) == pytest.approx(np.e, rel=1e-12)

    def test_beta_normalization(self):
        p = const_field((4, 4), 0.0)
        params = MetricParams(beta=2.0).resolve(p, theta_max=0.5)
        assert params.beta == pytest.approx(2.0 / 0.25)

    def test_explicit_values_pass_through(self):
        p = const_field((4, 4), 1.0)
        params = MetricParams(alpha=3.0, lam=7.0).resolve(p, theta_max=1.0)
        assert params.alpha == 3.0
        assert params.lam == 7.0

    def test_validation(self):
        with pytest.raises(ParameterError):
            MetricParams(levels=1)
        with pytest.raises(ParameterError):
            MetricParams(alpha=-1.0)
        with pytest.raises(ParameterError):
            MetricParams(p_exponent=0.0)


class TestBaselines:
    def test_ir_unit_potential(self):
        image, _ = straight_tube_case(width=24, height=20)
        res = oof_multiscale(image, OofParams(radii=(1.0, 2.0)))
        params = ResolvedMetricParams(alpha=0.0, beta=0.0, lam=0.0)
        m = baseline_tensor("IR", res, params)
        assert isinstance(m, SymMat2Field)
        assert np.allclose(m.m11, 1.0) and np.allclose(m.m22, 1.0)
        assert np.allclose(m.m12, 0.0)

    def test_ir_quarter(self):
        image, _ = straight_tube_case(width=24, height=20)
        res = oof_multiscale(image, OofParams(radii=(1.0, 2.0)))
        # alpha tuned so the strongest node has omega = 0.25
        pmax = res.vesselness.values.max()
        params = ResolvedMetricParams(alpha=float(np.log(4.0) / pmax), beta=0.0, lam=0.0)
        m = baseline_tensor("IR", res, params)
        iy, ix = np.unravel_index(np.argmax(res.vesselness.values), res.vesselness.values.shape)
        assert m.m11[iy, ix] == pytest.approx(0.25, rel=1e-9)
        assert m.m22[iy, ix] == pytest.approx(0.25, rel=1e-9)

    def test_arr_is_psd_and_shaped(self):
        image, _ = straight_tube_case(width=24, height=20)
        res = oof_multiscale(image, OofParams(radii=(1.0, 1.5, 2.0, 2.5)))
        params = ResolvedMetricParams(alpha=2.0, beta=0.0, lam=0.0)
        t = baseline_tensor("ArR", res, params)
        assert t.shape == (4, 20, 24)
        assert t.min_eigenvalue() > 0
        assert t.axis_spacing == pytest.approx(0.5)
        assert t.axis_origin == pytest.approx(1.0)

    def test_unknown_kind(self):
        image, _ = straight_tube_case(width=24, height=20)
        res = oof_multiscale(image, OofParams(radii=(1.0, 2.0)))
        params = ResolvedMetricParams(alpha=1.0, beta=0.0, lam=0.0)
        with pytest.raises(ParameterError):
            baseline_tensor("IoR", res, params)


class TestPathEnergy:
    def identity_metric(self, w=32, h=32):
        spec = GridSpec(w, h)
        one = np.ones((h, w))
        return SymMat2Field(spec, one, np.zeros((h, w)), one.copy())

    def test_straight_segment(self):
        m = self.identity_metric()
        path = Polyline(np.array([[2.0, 3.0], [12.0, 3.0]]))
        assert path_energy(path, m) == pytest.approx(10.0, abs=1e-12)

    def test_single_point(self):
        m = self.identity_metric()
        assert path_energy(Polyline(np.array([[2.0, 3.0]])), m) == 0.0

    def test_circle_arc(self):
        m = self.identity_metric(64, 64)
        t = np.linspace(0, np.pi / 2, 1001)
        radius = 20.0
        pts = np.stack([30 + radius * np.cos(t), 30 + radius * np.sin(t)], axis=1)
        arc = path_energy(Polyline(pts), m)
        assert arc == pytest.approx(radius * np.pi / 2, rel=1e-4)

    def test_reparameterization_invariance(self):
        m = self.identity_metric()
        pts = np.array([[1.0, 1.0], [11.0, 6.0]])
        base = path_energy(Polyline(pts), m)
        dense = np.linspace(0, 1, 17)[:, None] * (pts[1] - pts[0]) + pts[0]
        assert abs(path_energy(Polyline(dense), m) - base) <= 1e-10

    def test_domain_error(self):
        m = self.identity_metric(8, 8)
        with pytest.raises(DomainError):
            path_energy(Polyline(np.array([[0.0, 0.0], [9.5, 0.0]])), m)

    def test_lifted_energy_constant_metric(self):
        shape = (6, 6)
        spec = GridSpec(6, 6)
        q1, q2 = axis_frame(shape)
        omega = const_field(shape, 1.0)
        m = spatial_tensor(omega, q1, q2)
        feature_vals = np.zeros(shape)
        feature_vals[0, 0] = 1.0
        grid = LiftedGrid.build(spec, theta_max=1.0, levels=5)
        params = ResolvedMetricParams(alpha=0.0, beta=4.0, lam=0.0, levels=5)
        field = lifted_tensor_field(m, omega, ScalarField2D(spec, feature_vals), grid, params)
        # segment moving only along the feature axis: length = sqrt(beta) * dtheta
        path = LiftedPolyline(np.array([[2.0, 2.0, 0.0], [2.0, 2.0, 0.75]]))
        assert path_energy(path, field) == pytest.approx(2.0 * 0.75, rel=1e-9)

    def test_feature_velocity_matches_gradient_chain_rule(self):
        # A lifted path that tracks the feature map: the discrete
        # feature-velocity term converges to the directional-derivative
        # form as the sampling step shrinks.
        w = h = 32
        xs, ys = np.meshgrid(np.arange(float(w)), np.arange(float(h)))
        feature = 0.5 + 0.3 * np.sin(xs / 6.0) * np.cos(ys / 7.0)

        def feat(x, y):
            return 0.5 + 0.3 * np.sin(x / 6.0) * np.cos(y / 7.0)

        def grad(x, y):
            return np.array(
                [0.3 * np.cos(x / 6.0) * np.cos(y / 7.0) / 6.0,
                 -0.3 * np.sin(x / 6.0) * np.sin(y / 7.0) / 7.0]
            )

        errs = []
        for n in (32, 64, 128):
            t = np.linspace(0.0, 1.0, n)
            eta = np.stack([4 + 24 * t, 16 + 6 * np.sin(2 * np.pi * t)], axis=1)
            tau = np.array([feat(x, y) for x, y in eta])
            dt = 1.0 / (n - 1)
            tau_dot = np.diff(tau) / dt
            eta_dot = np.diff(eta, axis=0) / dt
            mids = 0.5 * (eta[:-1] + eta[1:])
            chain = np.array([np.dot(grad(x, y), v) for (x, y), v in zip(mids, eta_dot)])
            errs.append(np.max(np.abs(tau_dot**2 - chain**2)))
        # first-order convergence in the sampling step
        assert errs[2] < errs[0] / 2
