import numpy as np
import pytest

from vesselpath.eikonal import SolverOptions, solve
from vesselpath.errors import ParameterError, TraceDivergedError
from vesselpath.fields import GridSpec, ScalarField2D, SymMat2Field, bilinear_sample
from vesselpath.metrics import (
    LiftedGrid,
    MetricParams,
    baseline_tensor,
    floor_potential,
    lifted_tensor_field,
    path_energy,
    potential,
    spatial_tensor,
)
from vesselpath.oof import OofParams, feature_map, oof_multiscale
from vesselpath.paths import LiftedPolyline, Polyline
from vesselpath.phantoms import Tube, render_tubes, sine_centerline, straight_tube_case
from vesselpath.tracer import TracerOptions, backtrack, project, refine_path


def identity_metric(w, h):
    one = np.ones((h, w))
    return SymMat2Field(GridSpec(w, h), one, np.zeros((h, w)), one.copy())


def centerline_distance(points_xy, centerline):
    from scipy.spatial import cKDTree

    d, _ = cKDTree(centerline).query(points_xy)
    return d


class TestBacktrack2D:
    def test_straight_geodesic(self):
        m = identity_metric(64, 32)
        am = solve(m, [(0, 0)])
        path = backtrack(am, m, end=(50, 0), seed=(0, 0))
        assert np.max(np.abs(path.points[:, 1])) <= 0.5
        assert tuple(path.points[0]) == (0.0, 0.0)
        assert tuple(path.points[-1]) == (50.0, 0.0)

    def test_adjacent_end(self):
        m = identity_metric(16, 16)
        am = solve(m, [(5, 5)])
        path = backtrack(am, m, end=(6, 5), seed=(5, 5))
        assert len(path) == 2
        assert np.allclose(path.points, [[5, 5], [6, 5]])

    def test_energy_certificate_and_descent(self):
        image, tube = straight_tube_case(width=64, height=48, half_width=2.0, contrast=0.5)
        res = oof_multiscale(image, OofParams(radii=(1.0, 1.5, 2.0, 2.5, 3.0)))
        params = MetricParams().resolve(res.vesselness, theta_max=1.0)
        omega = floor_potential(potential(res.vesselness, params.alpha), params.omega_min)
        m = spatial_tensor(omega, res.q1, res.q2)
        src, end = (4, 24), (59, 24)
        am = solve(m, [src], SolverOptions(stop_at=end))
        path = backtrack(am, m, end=end, seed=src)
        u_end = am.u[end[1], end[0]]
        assert path_energy(path, m) <= 1.05 * u_end
        # interpolated action strictly decreases along the backtrace
        u_field = ScalarField2D(m.spec, np.where(np.isfinite(am.u), am.u, 1e30))
        values = [bilinear_sample(u_field, p) for p in path.points[::-1]]
        diffs = np.diff(values)
        assert np.all(diffs <= 1e-6 * u_end)

    def test_step_halving_changes_energy_little(self):
        image, _ = straight_tube_case(width=64, height=48, half_width=2.0, contrast=0.5)
        res = oof_multiscale(image, OofParams(radii=(1.0, 1.5, 2.0, 2.5, 3.0)))
        params = MetricParams().resolve(res.vesselness, theta_max=1.0)
        omega = floor_potential(potential(res.vesselness, params.alpha), params.omega_min)
        m = spatial_tensor(omega, res.q1, res.q2)
        src, end = (4, 24), (59, 24)
        am = solve(m, [src], SolverOptions(stop_at=end))
        e = {}
        for step in (0.25, 0.125):
            path = backtrack(am, m, end=end, seed=src, opts=TracerOptions(step=step))
            e[step] = path_energy(path, m)
        assert abs(e[0.125] - e[0.25]) <= 0.01 * e[0.25]

    def test_max_steps_diverges(self):
        m = identity_metric(64, 64)
        am = solve(m, [(0, 0)])
        with pytest.raises(TraceDivergedError):
            backtrack(am, m, end=(63, 63), seed=(0, 0), opts=TracerOptions(max_steps=5))

    def test_unreached_end_rejected(self):
        m = identity_metric(32, 32)
        am = solve(m, [(0, 0)], SolverOptions(max_nodes=8))
        with pytest.raises(ParameterError):
            backtrack(am, m, end=(31, 31), seed=(0, 0))


class TestProject:
    def test_drops_coordinate(self):
        gamma = LiftedPolyline(np.array([[0.0, 0.0, 0.1], [1.0, 0.0, 0.2]]))
        eta = project(gamma)
        assert np.allclose(eta.points, [[0, 0], [1, 0]])

    def test_single_point(self):
        gamma = LiftedPolyline(np.array([[2.0, 3.0, 0.5]]))
        assert len(project(gamma)) == 1

    def test_lifted_geodesic_tracks_feature(self):
        # tau along the traced lifted geodesic should hug the feature map
        image, tube = straight_tube_case(width=48, height=32, half_width=2.0, contrast=0.5)
        res = oof_multiscale(image, OofParams(radii=(1.0, 1.5, 2.0, 2.5, 3.0)))
        feat = feature_map(res.vesselness, "mean", 2)
        theta_max = float(feat.values.max())
        params = MetricParams(levels=40).resolve(res.vesselness, theta_max)
        omega = floor_potential(potential(res.vesselness, params.alpha), params.omega_min)
        m = spatial_tensor(omega, res.q1, res.q2)
        grid = LiftedGrid.build(image.spec, theta_max, params.levels)
        lifted = lifted_tensor_field(m, omega, feat, grid, params)
        dense = lifted.materialize()
        src = (4, 16)
        end = (43, 16)
        src_l = grid.level_of(feat.values[src[1], src[0]])
        end_l = grid.level_of(feat.values[end[1], end[0]])
        am = solve(dense, [(src[0], src[1], src_l)], SolverOptions(stop_at=(end[0], end[1], end_l)))
        gamma = backtrack(
            am,
            lifted,
            end=(end[0], end[1], grid.theta_values[end_l]),
            seed=(src[0], src[1], grid.theta_values[src_l]),
        )
        taus = gamma.points[:, 2]
        feats = np.array(
            [bilinear_sample(feat, (p[0], p[1])) for p in gamma.points]
        )
        median_gap = np.median(np.abs(taus - feats))
        assert median_gap <= 2.0 * grid.delta


class TestRefine:
    def make_oof(self, image):
        return oof_multiscale(image, OofParams(radii=(1.0, 1.5, 2.0, 2.5, 3.0)))

    def test_fixed_point_on_centerline(self):
        image, tube = straight_tube_case(width=64, height=48, half_width=2.0, contrast=0.5)
        res = self.make_oof(image)
        params = MetricParams().resolve(res.vesselness, theta_max=1.0)
        xs = np.linspace(4, 59, 56)
        path = Polyline(np.stack([xs, np.full_like(xs, 24.0)], axis=1))
        out = refine_path(path, res, params, tube_radius=4.0)
        assert out.refined
        gap = np.abs(out.path.points[:, 1] - 24.0)
        assert gap.max() <= 0.5

    def test_recovers_centerline_from_offset(self):
        image, tube = straight_tube_case(width=64, height=48, half_width=2.0, contrast=0.5)
        res = self.make_oof(image)
        params = MetricParams().resolve(res.vesselness, theta_max=1.0)
        xs = np.linspace(4, 59, 56)
        path = Polyline(np.stack([xs, np.full_like(xs, 25.0)], axis=1))  # 1 px off
        out = refine_path(path, res, params, tube_radius=4.0)
        assert out.refined
        interior = out.path.points[(out.path.points[:, 0] > 8) & (out.path.points[:, 0] < 55)]
        assert np.mean(np.abs(interior[:, 1] - 24.0)) <= 0.5

    def test_energy_never_increases(self):
        image, _ = straight_tube_case(width=64, height=48, half_width=2.0, contrast=0.5)
        res = self.make_oof(image)
        params = MetricParams().resolve(res.vesselness, theta_max=1.0)
        omega = floor_potential(potential(res.vesselness, params.alpha), params.omega_min)
        m = spatial_tensor(omega, res.q1, res.q2)
        xs = np.linspace(4, 59, 56)
        wiggly = Polyline(
            np.stack([xs, 24.0 + 1.5 * np.sin(xs / 3.0)], axis=1)
        )
        out = refine_path(wiggly, res, params, tube_radius=5.0)
        assert path_energy(out.path, m) <= path_energy(wiggly, m) + 1e-6

    def test_too_thin_tube_surfaced(self):
        image, _ = straight_tube_case(width=64, height=48, half_width=2.0, contrast=0.5)
        res = self.make_oof(image)
        params = MetricParams().resolve(res.vesselness, theta_max=1.0)
        # a sub-pixel tube around a diagonal raster cannot carry the
        # descent; the failure must surface, returning the input path
        path = Polyline(np.array([[4.0, 4.0], [59.0, 44.0]]))
        out = refine_path(path, res, params, tube_radius=0.4)
        assert not out.refined
        assert out.message
        assert np.array_equal(out.path.points, path.points)


class TestArrBaselineGeodesic:
    def test_stays_on_tube_centerline(self):
        center = sine_centerline(64, 24.0, amplitude=3.0, cycles=1.0, phase=0.3)
        tube = Tube(center, half_width=2.0, contrast=0.5)
        image, _ = render_tubes(64, 48, [tube])
        radii = (1.0, 1.5, 2.0, 2.5, 3.0)
        res = oof_multiscale(image, OofParams(radii=radii))
        params = MetricParams().resolve(res.vesselness, theta_max=1.0)
        tens = baseline_tensor("ArR", res, params)

        def snap(xq):
            i = int(np.argmin(np.abs(center[:, 0] - xq)))
            x, y = center[i]
            return int(round(x)), int(round(y))

        src = snap(5.0)
        end = snap(58.0)
        r_idx = lambda xy: int(
            np.argmin(np.abs(np.asarray(radii) - res.scale_map.values[xy[1], xy[0]]))
        )
        am = solve(
            tens,
            [(src[0], src[1], r_idx(src))],
            SolverOptions(stop_at=(end[0], end[1], r_idx(end))),
        )
        gamma = backtrack(
            am,
            tens,
            end=(end[0], end[1], radii[r_idx(end)]),
            seed=(src[0], src[1], radii[r_idx(src)]),
        )
        eta = project(gamma)
        d = centerline_distance(eta.points, center)
        assert d.max() <= 1.0
