"""Discrete-time token dynamics driven by hardmax or softmax attention.

One hardmax step moves each token toward the average of its tie set,

    z_i <- z_i + (alpha / (1 + alpha)) * (mean_{j in C_i} z_j - z_i),

so a token whose tie set is its own singleton adds exactly zero and is
frozen from then on.  The softmax step is the smooth counterpart

    z_i <- (z_i + alpha * sum_j Lambda_ij z_j) / (1 + alpha)

with Lambda the row-softmax of the score matrix at temperature tau.  Both
maps keep every token inside the convex hull of the current configuration
and never shrink a token's norm.

A run iterates one of the maps, recording configurations and (hardmax)
tie sets, and stops once the largest per-token displacement has stayed at
or below a tolerance for a full window of consecutive steps with frozen
tie sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    HARDMAX,
    SOFTMAX,
    AttentionSet,
    AttentionSpec,
    TokenConfiguration,
    attention_scores,
    similarity_matrix,
    _membership,
)

# Pairs closer than this at a recorded step are reported as merge risks.
MERGE_GUARD = 1e-13

# Tie sets are re-checked with a window this many times wider to surface
# near-ties that almost changed the dynamics.
NEAR_TIE_FACTOR = 100.0


@dataclass(frozen=True, eq=False)
class StepOutcome:
    """Result of one update applied to the configuration at index `step`.

    `next` is the configuration at index step + 1.  `attention_sets` holds
    the tie sets of the source configuration (hardmax mode); `similarity`
    holds the attention weights used (softmax mode).
    """

    step: int
    next: TokenConfiguration
    max_displacement: float
    attention_sets: tuple[AttentionSet, ...] | None = None
    similarity: np.ndarray | None = None
    near_tie_rows: int = 0


@dataclass(frozen=True)
class RunConfig:
    max_steps: int = 10_000
    convergence_tol: float = 1e-10
    stability_window: int = 10
    record_every: int = 1

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if not (self.convergence_tol > 0):
            raise ValueError("convergence_tol must be positive")
        if self.stability_window < 1:
            raise ValueError("stability_window must be at least 1")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")


@dataclass(frozen=True)
class MergeEvent:
    """Two tokens came dangerously close at a recorded configuration."""

    config_index: int
    i: int
    j: int
    distance: float


CONVERGED = "converged"
MAX_STEPS = "max_steps"


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """A recorded run: initial configuration, recorded steps, stop status."""

    initial: TokenConfiguration
    spec: AttentionSpec
    steps: tuple[StepOutcome, ...]
    converged: bool
    stop_reason: str
    merge_events: tuple[MergeEvent, ...] = field(default=())
    near_tie_steps: int = 0

    @property
    def final(self) -> TokenConfiguration:
        return self.steps[-1].next if self.steps else self.initial

    @property
    def n(self) -> int:
        return self.initial.n

    @property
    def dim(self) -> int:
        return self.initial.dim

    def recorded_configurations(self) -> list[tuple[int, TokenConfiguration]]:
        """(configuration index, configuration) pairs, starting at index 0."""
        out = [(0, self.initial)]
        out.extend((s.step + 1, s.next) for s in self.steps)
        return out


def _members_tuple(sets: tuple[AttentionSet, ...]) -> tuple[tuple[int, ...], ...]:
    return tuple(s.members for s in sets)


def step_hardmax(
    z: TokenConfiguration, spec: AttentionSpec, step: int = 0
) -> StepOutcome:
    """One hardmax update of every token simultaneously.

    Tokens with singleton tie sets are reproduced exactly: their averaged
    target equals themselves bitwise, so the added displacement is zero.
    """
    if spec.mode != HARDMAX:
        raise ValueError("step_hardmax needs a hardmax spec")
    scores = attention_scores(z, spec)
    member = _membership(scores, spec.tie_tol)
    near = _membership(scores, NEAR_TIE_FACTOR * spec.tie_tol)
    near_tie_rows = int(np.sum(near.sum(axis=1) > member.sum(axis=1)))

    weights = member.astype(float)
    counts = weights.sum(axis=1, keepdims=True)
    targets = (weights @ z.points) / counts
    coef = spec.alpha / (1.0 + spec.alpha)
    moved = z.points + coef * (targets - z.points)

    sets = tuple(
        AttentionSet(owner=i, members=tuple(np.flatnonzero(member[i]).tolist()))
        for i in range(z.n)
    )
    disp = float(np.linalg.norm(moved - z.points, axis=1).max())
    return StepOutcome(
        step=step,
        next=TokenConfiguration(points=moved),
        max_displacement=disp,
        attention_sets=sets,
        near_tie_rows=near_tie_rows,
    )


def step_softmax(
    z: TokenConfiguration, spec: AttentionSpec, step: int = 0
) -> StepOutcome:
    """One softmax update of every token simultaneously."""
    if spec.mode != SOFTMAX:
        raise ValueError("step_softmax needs a softmax spec")
    lam = similarity_matrix(z, spec)
    moved = (z.points + spec.alpha * (lam @ z.points)) / (1.0 + spec.alpha)
    disp = float(np.linalg.norm(moved - z.points, axis=1).max())
    return StepOutcome(
        step=step,
        next=TokenConfiguration(points=moved),
        max_displacement=disp,
        similarity=lam,
    )


def _close_pairs(points: np.ndarray) -> list[tuple[int, int, float]]:
    diff = points[:, None, :] - points[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    iu = np.triu_indices(len(points), k=1)
    hits = []
    for i, j in zip(*iu):
        if dist[i, j] < MERGE_GUARD:
            hits.append((int(i), int(j), float(dist[i, j])))
    return hits


def run(
    z0: TokenConfiguration,
    spec: AttentionSpec,
    cfg: RunConfig = RunConfig(),
) -> TrajectoryRecord:
    """Iterate the dynamics from z0 until convergence or max_steps.

    Convergence requires cfg.stability_window consecutive steps whose
    largest displacement stays at or below cfg.convergence_tol; in hardmax
    mode the tie sets must also be identical across that window.  Recorded
    steps are thinned by cfg.record_every (the final step is always kept).
    """
    stepper = step_hardmax if spec.mode == HARDMAX else step_softmax
    recorded: list[StepOutcome] = []
    merge_events: list[MergeEvent] = []
    seen_pairs: set[tuple[int, int]] = set()
    near_tie_steps = 0
    window_disp: list[float] = []
    window_sets: list[tuple[tuple[int, ...], ...]] = []
    current = z0
    converged = False

    for k in range(cfg.max_steps):
        outcome = stepper(current, spec, step=k)
        if outcome.near_tie_rows > 0:
            near_tie_steps += 1

        window_disp.append(outcome.max_displacement)
        if spec.mode == HARDMAX:
            window_sets.append(_members_tuple(outcome.attention_sets))
        if len(window_disp) > cfg.stability_window:
            window_disp.pop(0)
            if window_sets:
                window_sets.pop(0)
        hit_window = len(window_disp) == cfg.stability_window and all(
            d <= cfg.convergence_tol for d in window_disp
        )
        if hit_window and spec.mode == HARDMAX:
            hit_window = all(s == window_sets[0] for s in window_sets[1:])
        last = hit_window or k == cfg.max_steps - 1

        if (k + 1) % cfg.record_every == 0 or last:
            recorded.append(outcome)
            for i, j, d in _close_pairs(outcome.next.points):
                if (i, j) not in seen_pairs:
                    seen_pairs.add((i, j))
                    merge_events.append(
                        MergeEvent(config_index=k + 1, i=i, j=j, distance=d)
                    )
        current = outcome.next
        if hit_window:
            converged = True
            break

    return TrajectoryRecord(
        initial=z0,
        spec=spec,
        steps=tuple(recorded),
        converged=converged,
        stop_reason=CONVERGED if converged else MAX_STEPS,
        merge_events=tuple(merge_events),
        near_tie_steps=near_tie_steps,
    )
