import numpy as np
import numpy.testing as npt
import pytest

import hardmax
from hardmax.dynamics import StepOutcome, TrajectoryRecord

from conftest import hardmax_spec, make_constant_trajectory


class TestDetectLeaders:
    def test_late_leader_detection_steps(self, late_leader_tokens):
        traj = hardmax.run(late_leader_tokens, hardmax_spec(2), hardmax.RunConfig())
        leaders = hardmax.detect_leaders(traj)
        by_token = {rec.token: rec.detected_at_step for rec in leaders}
        assert by_token == {2: 0, 0: 1}

    def test_limit_points_come_from_final_config(self, late_leader_tokens):
        traj = hardmax.run(late_leader_tokens, hardmax_spec(2), hardmax.RunConfig())
        for rec in hardmax.detect_leaders(traj):
            npt.assert_array_equal(rec.limit_point, traj.final.points[rec.token])

    def test_line_fixture_leaders(self, line_tokens):
        traj = hardmax.run(line_tokens, hardmax_spec(1), hardmax.RunConfig())
        leaders = hardmax.detect_leaders(traj)
        assert [(rec.token, rec.detected_at_step) for rec in leaders] == [
            (0, 0),
            (4, 0),
        ]

    def test_singleton_reopening_raises(self):
        spec = hardmax_spec(1, alpha=1.0)
        z = hardmax.TokenConfiguration(points=np.array([[1.0], [0.4]]))
        sets_single = (hardmax.AttentionSet(0, (0,)), hardmax.AttentionSet(1, (0,)))
        sets_open = (hardmax.AttentionSet(0, (0, 1)), hardmax.AttentionSet(1, (0,)))
        steps = tuple(
            StepOutcome(
                step=k,
                next=z,
                max_displacement=0.0,
                attention_sets=s,
                similarity=None,
                near_tie_rows=(),
            )
            for k, s in enumerate([sets_single, sets_open])
        )
        traj = TrajectoryRecord(
            initial=z,
            spec=spec,
            steps=steps,
            converged=True,
            stop_reason=hardmax.CONVERGED,
            merge_events=(),
            near_tie_steps=0,
        )
        with pytest.raises(hardmax.PersistenceViolationError):
            hardmax.detect_leaders(traj)


class TestExtractClusters:
    def test_line_fixture_groups(self, line_tokens):
        traj = hardmax.run(line_tokens, hardmax_spec(1), hardmax.RunConfig())
        found = hardmax.extract_clusters(traj, 1e-6)
        assert [c.members for c in found] == [(0, 1), (2,), (3, 4)]
        npt.assert_allclose(
            [c.position[0] for c in found], [-1.0, 0.0, 1.0], atol=1e-6
        )

    def test_requires_convergence(self, late_leader_tokens):
        cfg = hardmax.RunConfig(max_steps=2)
        traj = hardmax.run(late_leader_tokens, hardmax_spec(2), cfg)
        with pytest.raises(hardmax.NotConvergedError):
            hardmax.extract_clusters(traj, 1e-6)

    def test_coarse_radius_is_ambiguous(self, line_tokens):
        traj = hardmax.run(line_tokens, hardmax_spec(1), hardmax.RunConfig())
        with pytest.raises(hardmax.AmbiguousClusteringError):
            hardmax.extract_clusters(traj, 0.6)

    def test_leader_limit_anchors_cluster(self, late_leader_tokens):
        traj = hardmax.run(late_leader_tokens, hardmax_spec(2), hardmax.RunConfig())
        leaders = hardmax.detect_leaders(traj)
        found = hardmax.extract_clusters(traj, 1e-6, leaders=leaders)
        anchored = [c for c in found if c.leader is not None]
        for c in anchored:
            npt.assert_array_equal(
                c.position, traj.final.points[c.leader]
            )


class TestCheckProjection:
    def test_segment_midpoint_certificate(self):
        a = hardmax.SpdMatrix.identity(1)
        cert = hardmax.check_projection(
            np.array([0.0]), np.array([[-1.0], [1.0]]), a
        )
        npt.assert_allclose(cert.weights, [0.5, 0.5], atol=1e-14)
        assert cert.lam == pytest.approx(0.0, abs=1e-14)
        assert cert.residual <= 1e-12
        assert cert.satisfied(1e-6)

    def test_plane_face_certificate(self):
        a = hardmax.SpdMatrix.identity(2)
        cert = hardmax.check_projection(
            np.array([0.5, 0.5]), np.array([[1.0, 0.0], [0.0, 1.0]]), a
        )
        npt.assert_allclose(cert.weights, [0.5, 0.5], atol=1e-14)
        assert cert.lam == pytest.approx(-0.5, abs=1e-14)
        assert cert.satisfied(1e-6)

    def test_off_projection_point_fails(self):
        a = hardmax.SpdMatrix.identity(2)
        cert = hardmax.check_projection(
            np.array([0.8, 0.2]), np.array([[1.0, 0.0], [0.0, 1.0]]), a
        )
        assert cert.residual > 1e-3
        assert not cert.satisfied(1e-6)

    def test_vertex_weight_on_boundary_fails(self):
        # the projection onto this face is the vertex itself, so a strict
        # interior-weight certificate must not exist
        a = hardmax.SpdMatrix.identity(2)
        cert = hardmax.check_projection(
            np.array([1.0, 0.0]), np.array([[1.0, 0.0], [2.0, 3.0]]), a
        )
        assert not cert.satisfied(1e-6)

    def test_general_a_projection(self):
        m = np.array([[2.0, 0.0], [0.0, 1.0]])
        a = hardmax.factorize_spd(m)
        verts = np.array([[1.0, 1.0], [1.0, -1.0]])
        # minimizing <Ax, x> on the segment x = (1, t): t* = 0
        cert = hardmax.check_projection(np.array([1.0, 0.0]), verts, a)
        npt.assert_allclose(cert.weights, [0.5, 0.5], atol=1e-12)
        assert cert.satisfied(1e-6)

    def test_repeated_vertices_rejected(self):
        a = hardmax.SpdMatrix.identity(2)
        with pytest.raises(hardmax.SingularSystemError):
            hardmax.check_projection(
                np.array([1.0, 0.0]), np.array([[1.0, 0.0], [1.0, 0.0]]), a
            )

    def test_random_projections_verify(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            d = int(rng.integers(2, 5))
            b = rng.normal(size=(d, d))
            m = b.T @ b + np.eye(d)
            a = hardmax.factorize_spd(m)
            v0 = rng.normal(size=d) + 2.0
            v1 = rng.normal(size=d) - 2.0
            # direct 1-parameter minimization of <A(v0 + t(v1 - v0)), .>
            u = v1 - v0
            t = -(u @ m @ v0) / (u @ m @ u)
            if not 0.05 < t < 0.95:
                continue
            s = v0 + t * u
            cert = hardmax.check_projection(s, np.vstack([v0, v1]), a)
            assert cert.satisfied(1e-6)
            npt.assert_allclose(cert.weights, [1.0 - t, t], atol=1e-9)


class TestVerifyClustering:
    def test_line_fixture_verdicts(self, line_tokens):
        spec = hardmax_spec(1)
        traj = hardmax.run(line_tokens, spec, hardmax.RunConfig())
        leaders = hardmax.detect_leaders(traj)
        found = hardmax.extract_clusters(traj, 1e-6, leaders=leaders)
        report = hardmax.verify_clustering(
            traj, leaders, found, spec.a, cluster_radius=1e-6
        )
        assert report.verdicts.all_true
        mid = [c for c in found if c.members == (2,)]
        assert len(mid) == 1

    def test_middle_cluster_certificate_weights(self, line_tokens):
        spec = hardmax_spec(1)
        traj = hardmax.run(line_tokens, spec, hardmax.RunConfig())
        leaders = hardmax.detect_leaders(traj)
        found = hardmax.extract_clusters(traj, 1e-6, leaders=leaders)
        report = hardmax.verify_clustering(
            traj, leaders, found, spec.a, cluster_radius=1e-6
        )
        certs = [c.certificate for c in report.clusters if c.certificate]
        assert len(certs) == 1
        npt.assert_allclose(certs[0].weights, [0.5, 0.5], atol=1e-10)
        assert certs[0].lam == pytest.approx(0.0, abs=1e-10)

    def test_square_fixture_projects_onto_top_face(self, square_with_followers):
        spec = hardmax_spec(2)
        traj = hardmax.run(square_with_followers, spec, hardmax.RunConfig())
        leaders = hardmax.detect_leaders(traj)
        assert {rec.token for rec in leaders} == {0, 1}
        found = hardmax.extract_clusters(traj, 1e-6, leaders=leaders)
        report = hardmax.verify_clustering(
            traj, leaders, found, spec.a, cluster_radius=1e-6
        )
        assert report.verdicts.all_true
        projections = [
            c for c in report.clusters if c.kind == "face_projection"
        ]
        assert len(projections) == 1
        npt.assert_allclose(projections[0].position, [0.0, 1.2], atol=1e-9)
        cert = projections[0].certificate
        npt.assert_allclose(cert.weights, [0.5, 0.5], atol=1e-9)
        assert cert.lam == pytest.approx(-1.44, abs=1e-9)

    def test_uncertifiable_position_fails_third_verdict(self):
        spec = hardmax_spec(1, alpha=1.0)
        traj = make_constant_trajectory([[-1.0], [0.3], [1.0]], spec)
        leaders = hardmax.detect_leaders(traj)
        assert {rec.token for rec in leaders} == {0, 2}
        found = hardmax.extract_clusters(traj, 1e-6, leaders=leaders)
        report = hardmax.verify_clustering(
            traj, leaders, found, spec.a, cluster_radius=1e-6
        )
        assert report.verdicts.every_token_clustered
        assert report.verdicts.leaders_distinct_vertices
        assert not report.verdicts.non_vertices_are_projections
        assert not report.verdicts.all_true

    def test_zero_initial_tokens_flagged(self, line_tokens):
        spec = hardmax_spec(1)
        traj = hardmax.run(line_tokens, spec, hardmax.RunConfig())
        leaders = hardmax.detect_leaders(traj)
        found = hardmax.extract_clusters(traj, 1e-6, leaders=leaders)
        report = hardmax.verify_clustering(
            traj, leaders, found, spec.a, cluster_radius=1e-6
        )
        assert report.zero_initial_tokens == (2,)
