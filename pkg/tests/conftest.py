import numpy as np
import pytest

import hardmax
from hardmax import sentiment as sm

POSITIVE_MARKERS = ["superb", "excellent", "wonderful", "delightful", "gripping"]
NEGATIVE_MARKERS = ["terrible", "awful", "dreadful", "boring", "lifeless"]
FILLER_WORDS = [
    "the", "a", "movie", "film", "plot", "actor", "actress", "scene", "script",
    "camera", "director", "music", "sound", "ending", "beginning", "story",
    "character", "dialogue", "set", "costume", "light", "cut", "frame", "role",
    "cast", "crew", "studio", "screen", "ticket", "seat", "night", "weekend",
    "review", "critic", "audience", "theater", "sequel", "trailer", "poster",
    "genre",
]


def make_planted_corpus(n_reviews=200, length=16, seed=11):
    """Synthetic labelled reviews where 2..5 marker words decide the class."""
    rng = np.random.default_rng(seed)
    rows = []
    for r in range(n_reviews):
        label = int(r % 2)
        markers = POSITIVE_MARKERS if label == 1 else NEGATIVE_MARKERS
        k = int(rng.integers(2, 6))
        words = [str(rng.choice(markers)) for _ in range(k)]
        words += [str(rng.choice(FILLER_WORDS)) for _ in range(length - k)]
        rng.shuffle(words)
        rows.append((label, " ".join(words)))
    return rows


def encode_corpus(rows, vocab, length):
    return [
        sm.Review(word_indices=sm.encode_review(text, vocab, length), label=label)
        for label, text in rows
    ]


@pytest.fixture
def line_tokens():
    """Five tokens on the line whose clusters are known exactly."""
    return hardmax.TokenConfiguration(
        points=np.array([[-1.0], [-0.5], [0.0], [0.5], [1.0]])
    )


@pytest.fixture
def late_leader_tokens():
    """Three-token plane configuration with one leader emerging at step 1."""
    return hardmax.TokenConfiguration(
        points=np.array([[-1.0, 1.0], [0.0, 3.0], [12.0, 4.0]])
    )


@pytest.fixture
def square_with_followers():
    """Offset square whose top edge attracts two tokens to a non-vertex point."""
    return hardmax.TokenConfiguration(
        points=np.array(
            [
                [-1.0, 1.2],
                [1.0, 1.2],
                [-1.0, 0.2],
                [1.0, 0.2],
                [0.0, 0.18],
                [0.0, 0.15],
                [0.3, 0.2],
                [-0.3, 0.2],
            ]
        )
    )


def make_constant_trajectory(points, spec, copies=3):
    """Hand-built converged record whose configuration never moves."""
    from hardmax.dynamics import StepOutcome, TrajectoryRecord

    z = hardmax.TokenConfiguration(points=np.asarray(points, dtype=float))
    sets = hardmax.attention_sets(z, spec)
    steps = tuple(
        StepOutcome(
            step=k,
            next=z,
            max_displacement=0.0,
            attention_sets=sets,
            similarity=None,
            near_tie_rows=(),
        )
        for k in range(copies)
    )
    return TrajectoryRecord(
        initial=z,
        spec=spec,
        steps=steps,
        converged=True,
        stop_reason=hardmax.CONVERGED,
        merge_events=(),
        near_tie_steps=0,
    )


def hardmax_spec(dim, alpha=0.5, tie_tol=None):
    kwargs = {} if tie_tol is None else {"tie_tol": tie_tol}
    return hardmax.AttentionSpec(
        a=hardmax.SpdMatrix.identity(dim),
        alpha=alpha,
        mode=hardmax.HARDMAX,
        **kwargs,
    )


def softmax_spec(dim, alpha=0.5, tau=1e-4):
    return hardmax.AttentionSpec(
        a=hardmax.SpdMatrix.identity(dim),
        alpha=alpha,
        mode=hardmax.SOFTMAX,
        tau=tau,
    )
