"""Geometric primitives for hardmax attention dynamics.

Tokens are points z_1, ..., z_n in R^d.  A symmetric positive definite
matrix A defines the bilinear form <x, y>_A = <A x, y> used to score
token pairs.  The attention set of token i collects the indices that
maximise <A z_i, z_j> over j; ties are kept as a set, which is what
distinguishes the hardmax dynamics from a plain argmax.

Everything here is stateless: configurations are immutable snapshots and
all operations return fresh values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NotSymmetricError(ValueError):
    """Raised when a matrix expected to be symmetric is not."""


class NotPositiveDefiniteError(ValueError):
    """Raised when a symmetric matrix has a non-positive pivot."""


class SingularMatrixError(ValueError):
    """Raised when an invertible matrix is required but not supplied."""


def _as_readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class TokenConfiguration:
    """An ordered collection of n tokens in R^d, stored as an (n, d) array.

    Coordinates must be finite.  The wrapped array is a read-only copy so
    a configuration can never change behind a trajectory's back.
    """

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2:
            raise ValueError(f"token array must be 2-D, got shape {pts.shape}")
        if pts.shape[0] < 1:
            raise ValueError("a configuration needs at least one token")
        if not np.all(np.isfinite(pts)):
            raise ValueError("token coordinates must be finite")
        object.__setattr__(self, "points", _as_readonly(pts))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def row(self, i: int) -> np.ndarray:
        return self.points[i]


@dataclass(frozen=True, eq=False)
class SpdMatrix:
    """A symmetric positive definite matrix A together with a factor B.

    The factor satisfies A = B^T B to working precision, so the A-inner
    product of x and y equals the Euclidean inner product of Bx and By.
    Build instances through :func:`factorize_spd`.
    """

    matrix: np.ndarray
    factor: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "matrix", _as_readonly(self.matrix))
        object.__setattr__(self, "factor", _as_readonly(self.factor))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @staticmethod
    def identity(d: int) -> "SpdMatrix":
        eye = np.eye(d)
        return SpdMatrix(matrix=eye, factor=eye)


HARDMAX = "hardmax"
SOFTMAX = "softmax"

# Default size of the relative tie window in the hardmax rule.  The window
# must catch score ties that are exact up to rounding noise (a few ulp of
# the row maximum) while staying far below the score gaps that a converging
# run still exhibits at its stopping time; 1e-14 sits between the two.
DEFAULT_TIE_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class AttentionSpec:
    """Parameters of one attention map: the form A, step size, and mode.

    mode is either "hardmax" (tie-tolerant argmax averaging, parameter
    tie_tol) or "softmax" (temperature tau > 0).
    """

    a: SpdMatrix
    alpha: float
    mode: str = HARDMAX
    tie_tol: float = DEFAULT_TIE_TOL
    tau: float | None = None

    def __post_init__(self) -> None:
        if self.mode not in (HARDMAX, SOFTMAX):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not (self.alpha > 0):
            raise ValueError("alpha must be positive")
        if not (self.tie_tol > 0):
            raise ValueError("tie_tol must be positive")
        if self.mode == SOFTMAX:
            if self.tau is None or not (self.tau > 0):
                raise ValueError("softmax mode needs tau > 0")


@dataclass(frozen=True)
class AttentionSet:
    """The tie set of row i: indices attaining the row maximum score."""

    owner: int
    members: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("attention sets are never empty")
        if list(self.members) != sorted(set(self.members)):
            raise ValueError("members must be sorted and unique")


def a_inner(a: SpdMatrix, x: np.ndarray, y: np.ndarray) -> float:
    """<A x, y>, the bilinear form attached to a."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (a.dim,) or y.shape != (a.dim,):
        raise ValueError(
            f"expected vectors of shape ({a.dim},), got {x.shape} and {y.shape}"
        )
    return float(a.matrix @ x @ y)


def attention_scores(z: TokenConfiguration, spec: AttentionSpec) -> np.ndarray:
    """Score matrix S with S[i, j] = <A z_i, z_j>."""
    if z.dim != spec.a.dim:
        raise ValueError(f"tokens have dim {z.dim}, form has dim {spec.a.dim}")
    return (z.points @ spec.a.matrix) @ z.points.T


def _membership(scores: np.ndarray, tie_tol: float) -> np.ndarray:
    """Boolean matrix of tie-set membership, row by row.

    Row i keeps every j whose score reaches the row maximum m_i minus a
    relative window tie_tol * max(1, |m_i|).  A zero token scores 0 against
    everyone, so its row keeps all indices; that literal behaviour is
    intended and the analysis layer flags such tokens separately.
    """
    m = scores.max(axis=1, keepdims=True)
    window = tie_tol * np.maximum(1.0, np.abs(m))
    return scores >= m - window


def attention_sets(
    z: TokenConfiguration, spec: AttentionSpec
) -> tuple[AttentionSet, ...]:
    """Hardmax tie sets of every token in one pass."""
    if spec.mode != HARDMAX:
        raise ValueError("attention sets are defined for hardmax mode only")
    member = _membership(attention_scores(z, spec), spec.tie_tol)
    return tuple(
        AttentionSet(owner=i, members=tuple(np.flatnonzero(member[i]).tolist()))
        for i in range(z.n)
    )


def attention_set(z: TokenConfiguration, i: int, spec: AttentionSpec) -> AttentionSet:
    """Tie set of a single token (hardmax mode)."""
    if not 0 <= i < z.n:
        raise IndexError(f"token index {i} out of range for n={z.n}")
    return attention_sets(z, spec)[i]


def similarity_matrix(z: TokenConfiguration, spec: AttentionSpec) -> np.ndarray:
    """Row-stochastic attention weights Lambda.

    Hardmax: row i is uniform over its tie set.  Softmax: row i is the
    softmax of S[i, :] / tau, computed with the row maximum subtracted so
    small temperatures stay finite.
    """
    s = attention_scores(z, spec)
    if spec.mode == HARDMAX:
        member = _membership(s, spec.tie_tol)
        weights = member.astype(float)
        return weights / weights.sum(axis=1, keepdims=True)
    shifted = (s - s.max(axis=1, keepdims=True)) / spec.tau
    expw = np.exp(shifted)
    return expw / expw.sum(axis=1, keepdims=True)


def factorize_spd(a: np.ndarray) -> SpdMatrix:
    """Factor a symmetric positive definite A as B^T B.

    Uses an upper-triangular Cholesky-type elimination; a pivot at or
    below 1e-12 * trace(A) / d rejects the matrix as not positive
    definite.  Symmetry is checked to 1e-12 relative to the largest entry.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    scale = max(1.0, float(np.abs(a).max()))
    if np.abs(a - a.T).max() > 1e-12 * scale:
        raise NotSymmetricError("matrix is not symmetric")

    d = a.shape[0]
    pivot_floor = 1e-12 * float(np.trace(a)) / d
    lower = np.zeros((d, d))
    for j in range(d):
        pivot = a[j, j] - lower[j, :j] @ lower[j, :j]
        if pivot <= pivot_floor:
            raise NotPositiveDefiniteError(
                f"pivot {pivot:.3e} at column {j} is below the floor {pivot_floor:.3e}"
            )
        lower[j, j] = np.sqrt(pivot)
        for i in range(j + 1, d):
            lower[i, j] = (a[i, j] - lower[i, :j] @ lower[j, :j]) / lower[j, j]
    # lower @ lower.T reconstructs A, so B = lower.T gives A = B^T B.
    return SpdMatrix(matrix=a, factor=lower.T)


def transform_configuration(z: TokenConfiguration, b: np.ndarray) -> TokenConfiguration:
    """Apply an invertible change of variables z_i -> B z_i to every token."""
    b = np.asarray(b, dtype=float)
    if b.shape != (z.dim, z.dim):
        raise ValueError(f"expected a {z.dim}x{z.dim} matrix, got shape {b.shape}")
    try:
        np.linalg.inv(b)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("change of variables must be invertible") from None
    return TokenConfiguration(points=z.points @ b.T)


def convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Vertices of the convex hull of 2-D points, counter-clockwise.

    Monotone chain.  Collinear boundary points are dropped, so the result
    lists extreme points only.  Degenerate inputs give a single point (all
    coincident) or the two endpoints of a segment (all collinear).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected (n, 2) points, got shape {pts.shape}")
    uniq = np.unique(pts, axis=0)
    order = np.lexsort((uniq[:, 1], uniq[:, 0]))
    p = uniq[order]
    if len(p) == 1:
        return p
    if len(p) == 2:
        return p

    def cross(o, u, v):
        return (u[0] - o[0]) * (v[1] - o[1]) - (u[1] - o[1]) * (v[0] - o[0])

    lower: list[np.ndarray] = []
    for q in p:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], q) <= 0:
            lower.pop()
        lower.append(q)
    upper: list[np.ndarray] = []
    for q in p[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], q) <= 0:
            upper.pop()
        upper.append(q)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        # All points collinear: keep the two extremes.
        return np.vstack([p[0], p[-1]])
    return np.vstack(hull)


def hull_contains_2d(hull: np.ndarray, point: np.ndarray, slack: float = 0.0) -> bool:
    """Whether a point lies in the hull polygon, allowing an outward slack.

    The hull must be counter-clockwise as produced by convex_hull_2d;
    degenerate hulls (point, segment) are handled by distance checks.
    """
    hull = np.asarray(hull, dtype=float)
    q = np.asarray(point, dtype=float)
    if len(hull) == 1:
        return bool(np.linalg.norm(q - hull[0]) <= slack)
    if len(hull) == 2:
        a, b = hull
        ab = b - a
        t = np.clip(np.dot(q - a, ab) / np.dot(ab, ab), 0.0, 1.0)
        return bool(np.linalg.norm(q - (a + t * ab)) <= slack)
    for i in range(len(hull)):
        a = hull[i]
        b = hull[(i + 1) % len(hull)]
        cross = (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0])
        # cross / |b - a| is the signed distance of q from edge ab.
        if cross < -slack * np.linalg.norm(b - a):
            return False
    return True
