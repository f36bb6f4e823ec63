"""Limit-set analysis of converged hardmax trajectories.

A token is a leader once its tie set is its own singleton; from that step
on its value is frozen, so leaders mark vertices of the limiting convex
polytope K.  The remaining tokens accumulate either on those vertices or
on A-orthogonal projections of the origin onto faces of K.  This module
extracts the cluster points of a converged run, certifies non-vertex
clusters by solving the face-projection optimality system, and reports
three structural verdicts:

  every_token_clustered        each token belongs to exactly one cluster
  leaders_distinct_vertices    leader limits are pairwise separated and
                               each one anchors its own cluster
  non_vertices_are_projections every non-leader cluster point carries a
                               valid projection certificate

The verdicts are reported, never silently assumed; callers decide what a
False means for them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .dynamics import TrajectoryRecord
from .geometry import HARDMAX, SpdMatrix

AFFINE_HULL_TOL = 1e-8
CERTIFICATE_TOL = 1e-6
WEIGHT_SUM_TOL = 1e-10


class PersistenceViolationError(RuntimeError):
    """A singleton tie set re-opened later; usually a tie-window artifact."""


class AmbiguousClusteringError(RuntimeError):
    """Two cluster representatives are too close for the chosen radius."""


class NotConvergedError(RuntimeError):
    """Cluster extraction needs a converged trajectory."""


class SingularSystemError(RuntimeError):
    """The projection system is singular (affinely dependent vertices)."""


@dataclass(frozen=True, eq=False)
class LeaderRecord:
    token: int
    detected_at_step: int
    limit_point: np.ndarray


@dataclass(frozen=True, eq=False)
class ProjectionCertificate:
    """Certificate that a point is the A-projection of the origin onto a face.

    weights are the affine coefficients on the face vertices, lam the
    multiplier of the optimality system (equal to -<A s, s> at an exact
    solution), residual the reconstruction plus system defect.
    """

    vertex_indices: tuple[int, ...]
    weights: np.ndarray
    lam: float
    residual: float

    def satisfied(self, tol: float = CERTIFICATE_TOL) -> bool:
        w = np.asarray(self.weights)
        return (
            self.residual <= tol
            and bool(np.all(w > 0.0) and np.all(w < 1.0))
            and abs(float(w.sum()) - 1.0) <= WEIGHT_SUM_TOL
        )


VERTEX = "vertex"
FACE_PROJECTION = "face_projection"


@dataclass(frozen=True, eq=False)
class ClusterPoint:
    position: np.ndarray
    members: tuple[int, ...]
    leader: int | None = None
    certificate: ProjectionCertificate | None = None

    @property
    def kind(self) -> str:
        return VERTEX if self.leader is not None else FACE_PROJECTION


@dataclass(frozen=True)
class Verdicts:
    every_token_clustered: bool
    leaders_distinct_vertices: bool
    non_vertices_are_projections: bool

    @property
    def all_true(self) -> bool:
        return (
            self.every_token_clustered
            and self.leaders_distinct_vertices
            and self.non_vertices_are_projections
        )


@dataclass(frozen=True, eq=False)
class ClusterReport:
    leaders: tuple[LeaderRecord, ...]
    clusters: tuple[ClusterPoint, ...]
    verdicts: Verdicts
    cluster_radius: float
    zero_initial_tokens: tuple[int, ...] = field(default=())


def detect_leaders(traj: TrajectoryRecord) -> tuple[LeaderRecord, ...]:
    """Earliest recorded step at which each token's tie set is its singleton.

    With record_every > 1 the detection step is only resolved to the
    recording interval; at record_every = 1 it is exact.

    Raises PersistenceViolationError if a detected singleton re-opens at a
    later recorded step: that cannot happen in exact arithmetic, so it
    signals that the tie window swallowed a genuine score gap.
    """
    if traj.spec.mode != HARDMAX:
        raise ValueError("leader detection needs a hardmax trajectory")
    detected: dict[int, int] = {}
    for outcome in traj.steps:
        for i, tie_set in enumerate(outcome.attention_sets):
            singleton = tie_set.members == (i,)
            if singleton and i not in detected:
                detected[i] = outcome.step
            elif not singleton and i in detected:
                raise PersistenceViolationError(
                    f"token {i} was a leader at step {detected[i]} but its tie "
                    f"set at step {outcome.step} is {tie_set.members}"
                )
    final = traj.final.points
    return tuple(
        LeaderRecord(token=i, detected_at_step=k, limit_point=final[i].copy())
        for i, k in sorted(detected.items())
    )


def extract_clusters(
    traj: TrajectoryRecord,
    cluster_radius: float = 1e-6,
    leaders: tuple[LeaderRecord, ...] | None = None,
) -> tuple[ClusterPoint, ...]:
    """Group final token positions into clusters of diameter <= 2 * radius.

    Greedy in token order: a token joins the first group whose anchor
    (first member) lies within cluster_radius, else starts a new group.
    A group's representative is the final position of its leader when it
    contains one, otherwise the member centroid.  Raises
    AmbiguousClusteringError when two representatives are closer than
    4 * cluster_radius, and NotConvergedError on an unconverged run.
    """
    if not traj.converged:
        raise NotConvergedError("cannot cluster an unconverged trajectory")
    if not (cluster_radius > 0):
        raise ValueError("cluster_radius must be positive")
    if leaders is None:
        leaders = detect_leaders(traj)
    leader_by_token = {l.token: l for l in leaders}

    final = traj.final.points
    anchors: list[np.ndarray] = []
    groups: list[list[int]] = []
    for i in range(traj.n):
        for g, anchor in enumerate(anchors):
            if np.linalg.norm(final[i] - anchor) <= cluster_radius:
                groups[g].append(i)
                break
        else:
            anchors.append(final[i])
            groups.append([i])

    clusters = []
    for members in groups:
        group_leaders = [i for i in members if i in leader_by_token]
        if group_leaders:
            lead = group_leaders[0]
            position = leader_by_token[lead].limit_point
        else:
            lead = None
            position = final[members].mean(axis=0)
        clusters.append(
            ClusterPoint(position=position, members=tuple(members), leader=lead)
        )

    for a, b in itertools.combinations(clusters, 2):
        gap = float(np.linalg.norm(a.position - b.position))
        if gap < 4.0 * cluster_radius:
            raise AmbiguousClusteringError(
                f"representatives of clusters {a.members} and {b.members} are "
                f"{gap:.3e} apart; radius {cluster_radius:.3e} is too coarse"
            )
    return tuple(clusters)


def check_projection(
    point: np.ndarray,
    vertices: np.ndarray,
    a: SpdMatrix,
    vertex_indices: tuple[int, ...] | None = None,
) -> ProjectionCertificate:
    """Certify a point as the A-projection of the origin onto a face.

    For face vertices v_1..v_r, the projection s = sum_j beta_j v_j of the
    origin onto their affine hull satisfies

        M beta + lam * 1 = 0,   sum_j beta_j = 1,

    with M_ij = <A v_i, v_j> and lam = -<A s, s>.  The returned residual
    adds the reconstruction error ||sum_j beta_j v_j - point||_inf to the
    defect of that linear system; callers decide acceptance via
    ProjectionCertificate.satisfied.
    """
    v = np.atleast_2d(np.asarray(vertices, dtype=float))
    s = np.asarray(point, dtype=float)
    r = v.shape[0]
    if v.shape[1] != s.shape[0]:
        raise ValueError("point and vertices must share a dimension")
    if vertex_indices is None:
        vertex_indices = tuple(range(r))

    m = (v @ a.matrix) @ v.T
    system = np.zeros((r + 1, r + 1))
    system[:r, :r] = m
    system[:r, r] = 1.0
    system[r, :r] = 1.0
    rhs = np.zeros(r + 1)
    rhs[r] = 1.0
    try:
        sol = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError:
        raise SingularSystemError(
            "projection system is singular; face vertices are affinely dependent"
        ) from None
    beta, lam = sol[:r], float(sol[r])

    reconstruction = float(np.abs(beta @ v - s).max())
    defect = float(max(np.abs(m @ beta + lam).max(), abs(beta.sum() - 1.0)))
    return ProjectionCertificate(
        vertex_indices=tuple(vertex_indices),
        weights=beta,
        lam=lam,
        residual=reconstruction + defect,
    )


def _affine_hull_distance(point: np.ndarray, vertices: np.ndarray) -> float:
    base = vertices[0]
    if len(vertices) == 1:
        return float(np.linalg.norm(point - base))
    span = (vertices[1:] - base).T
    coef, *_ = np.linalg.lstsq(span, point - base, rcond=None)
    return float(np.linalg.norm(span @ coef - (point - base)))


def _search_face(
    point: np.ndarray,
    leaders: tuple[LeaderRecord, ...],
    a: SpdMatrix,
    dim: int,
) -> ProjectionCertificate | None:
    """First certified face among leader-limit subsets of size 2..min(m, d+1)."""
    max_size = min(len(leaders), dim + 1)
    for size in range(2, max_size + 1):
        for combo in itertools.combinations(leaders, size):
            verts = np.vstack([l.limit_point for l in combo])
            if _affine_hull_distance(point, verts) > AFFINE_HULL_TOL:
                continue
            try:
                cert = check_projection(
                    point, verts, a, vertex_indices=tuple(l.token for l in combo)
                )
            except SingularSystemError:
                continue
            if cert.satisfied(CERTIFICATE_TOL):
                return cert
    return None


def verify_clustering(
    traj: TrajectoryRecord,
    leaders: tuple[LeaderRecord, ...],
    clusters: tuple[ClusterPoint, ...],
    a: SpdMatrix,
    cluster_radius: float = 1e-6,
) -> ClusterReport:
    """Check the three structural verdicts and certify non-vertex clusters.

    Initially-zero tokens are flagged in the report: a zero token ties with
    everything, can never be a leader, and sits outside the leader-vertex
    statement, so it is listed rather than letting it muddy the verdicts.
    """
    n = traj.n
    assigned = sorted(i for c in clusters for i in c.members)
    every_token_clustered = assigned == list(range(n))

    leader_tokens = {l.token for l in leaders}
    distinct = True
    for la, lb in itertools.combinations(leaders, 2):
        if np.linalg.norm(la.limit_point - lb.limit_point) <= 2.0 * cluster_radius:
            distinct = False
    anchored = True
    for c in clusters:
        owners = leader_tokens.intersection(c.members)
        if len(owners) > 1:
            anchored = False
        if c.leader is not None and not np.array_equal(
            c.position, next(l.limit_point for l in leaders if l.token == c.leader)
        ):
            anchored = False
    leaders_distinct_vertices = distinct and anchored and len(leaders) > 0

    certified_clusters: list[ClusterPoint] = []
    non_vertices_ok = True
    for c in clusters:
        if c.leader is not None:
            certified_clusters.append(c)
            continue
        cert = _search_face(c.position, leaders, a, traj.dim)
        if cert is None:
            non_vertices_ok = False
            certified_clusters.append(c)
        else:
            certified_clusters.append(
                ClusterPoint(
                    position=c.position,
                    members=c.members,
                    leader=None,
                    certificate=cert,
                )
            )

    zero_initial = tuple(
        int(i)
        for i in range(n)
        if float(np.linalg.norm(traj.initial.points[i])) == 0.0
    )
    return ClusterReport(
        leaders=leaders,
        clusters=tuple(certified_clusters),
        verdicts=Verdicts(
            every_token_clustered=every_token_clustered,
            leaders_distinct_vertices=leaders_distinct_vertices,
            non_vertices_are_projections=non_vertices_ok,
        ),
        cluster_radius=cluster_radius,
        zero_initial_tokens=zero_initial,
    )
