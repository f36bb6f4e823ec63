"""Binary sentiment classification with an attention-dynamics encoder.

A review is a fixed-length sequence of vocabulary indices.  Row lookup in
an embedding matrix E places one token per word, the token configuration
evolves through a fixed number of attention steps (identity form A = I),
and a linear readout of the mean final token produces the positive-class
probability

    yhat = sigmoid(<mean_i z_i^K, w> + v).

Training uses the softmax relaxation of the dynamics at temperature tau,
exact reverse-mode gradients written out by hand (including the coupling
of the attention weights to the tokens), and Adam.  The step size alpha
is kept positive by optimising log alpha.  Inference can run either mode;
hardmax runs also expose leader statistics through the cluster module.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from . import clusters, dynamics
from .geometry import HARDMAX, SOFTMAX, AttentionSpec, DEFAULT_TIE_TOL, SpdMatrix, TokenConfiguration

PAD_TOKEN = "<PAD>"
PAD_INDEX = 0
PROB_CLAMP = 1e-12
INITIAL_ALPHA = 0.5

_WORD_RE = re.compile(r"[a-z0-9]+")


class EmptyCorpusError(ValueError):
    """No usable words were found while building a vocabulary."""


class NonFiniteLossError(RuntimeError):
    """Training produced a non-finite loss; carries epoch and batch index."""

    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(
            f"non-finite loss {value!r} at epoch {epoch}, batch {batch}"
        )
        self.epoch = epoch
        self.batch = batch


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric runs; whitespace and punctuation separate."""
    return _WORD_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocabulary:
    """Word list with the padding token pinned at index 0."""

    words: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.words or self.words[PAD_INDEX] != PAD_TOKEN:
            raise ValueError(f"words[0] must be {PAD_TOKEN!r}")
        if len(set(self.words)) != len(self.words):
            raise ValueError("vocabulary words must be unique")

    @property
    def size(self) -> int:
        return len(self.words)

    def index(self, word: str) -> int:
        """Index of a word; unknown words map to the padding index."""
        return self._lookup().get(word, PAD_INDEX)

    def _lookup(self) -> dict[str, int]:
        cache = getattr(self, "_cache", None)
        if cache is None:
            cache = {w: i for i, w in enumerate(self.words)}
            object.__setattr__(self, "_cache", cache)
        return cache


def build_vocabulary(texts: list[str]) -> Vocabulary:
    """Vocabulary in first-occurrence order over the tokenized corpus."""
    words: list[str] = [PAD_TOKEN]
    seen = {PAD_TOKEN}
    for text in texts:
        for word in tokenize(text):
            if word not in seen:
                seen.add(word)
                words.append(word)
    if len(words) == 1:
        raise EmptyCorpusError("corpus contains no words")
    return Vocabulary(words=tuple(words))


@dataclass(frozen=True)
class Review:
    word_indices: tuple[int, ...]
    label: int

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")


def encode_review(text: str, vocab: Vocabulary, length: int) -> tuple[int, ...]:
    """First `length` word indices, padded with the padding index."""
    idx = [vocab.index(w) for w in tokenize(text)][:length]
    idx.extend([PAD_INDEX] * (length - len(idx)))
    return tuple(idx)


@dataclass(frozen=True, eq=False)
class SentimentModel:
    """Embedding matrix, attention step size, readout, and shape constants."""

    e: np.ndarray
    log_alpha: float
    w: np.ndarray
    v: float
    depth: int
    tau: float
    review_length: int

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)

    @property
    def vocab_size(self) -> int:
        return self.e.shape[0]

    @property
    def dim(self) -> int:
        return self.e.shape[1]


def new_model(
    vocab_size: int,
    dim: int,
    depth: int,
    tau: float,
    review_length: int,
    seed: int = 0,
) -> SentimentModel:
    """Fresh model: E ~ U[-0.5, 0.5] / sqrt(d), zero readout, alpha = 0.5.

    The zero readout makes the initial loss exactly log 2 on any batch.
    """
    rng = np.random.default_rng(seed)
    e = rng.uniform(-0.5, 0.5, size=(vocab_size, dim)) / np.sqrt(dim)
    return SentimentModel(
        e=e,
        log_alpha=math.log(INITIAL_ALPHA),
        w=np.zeros(dim),
        v=0.0,
        depth=depth,
        tau=tau,
        review_length=review_length,
    )


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t, dtype=float)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    ex = np.exp(t[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _bce(yhat: np.ndarray, y: np.ndarray) -> np.ndarray:
    yc = np.clip(yhat, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return -(y * np.log(yc) + (1.0 - y) * np.log(1.0 - yc))


def _row_softmax(scores: np.ndarray, tau: float) -> np.ndarray:
    # Non-finite scores (overflowed parameters) are allowed to propagate as
    # NaN here; the training loop detects them and aborts with a clean error.
    with np.errstate(invalid="ignore"):
        shifted = (scores - scores.max(axis=-1, keepdims=True)) / tau
    expw = np.exp(shifted)
    return expw / expw.sum(axis=-1, keepdims=True)


def _forward_batched(
    e: np.ndarray,
    log_alpha: float,
    w: np.ndarray,
    v: float,
    x: np.ndarray,
    tau: float,
    depth: int,
) -> tuple[np.ndarray, dict]:
    """Softmax-mode probabilities for a batch of index matrices x (B, n)."""
    a = math.exp(log_alpha)
    z = e[x]
    zs = [z]
    ps = []
    ms = []
    for _ in range(depth):
        s = np.einsum("bnd,bmd->bnm", z, z)
        p = _row_softmax(s, tau)
        m = p @ z
        z = (z + a * m) / (1.0 + a)
        zs.append(z)
        ps.append(p)
        ms.append(m)
    zbar = z.mean(axis=1)
    t = zbar @ w + v
    yhat = _sigmoid(t)
    cache = {"zs": zs, "ps": ps, "ms": ms, "zbar": zbar, "a": a, "x": x}
    return yhat, cache


def _backward_batched(
    yhat: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    tau: float,
    cache: dict,
) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Gradients of the mean clamped BCE wrt (z0 rows, w, v, log alpha)."""
    a = cache["a"]
    zs, ps, ms = cache["zs"], cache["ps"], cache["ms"]
    batch = len(y)
    n = zs[0].shape[1]

    inside = (yhat > PROB_CLAMP) & (yhat < 1.0 - PROB_CLAMP)
    g_t = np.where(inside, yhat - y, 0.0) / batch
    dw = cache["zbar"].T @ g_t
    dv = float(g_t.sum())
    dz = np.repeat((g_t[:, None] * w[None, :])[:, None, :], n, axis=1) / n

    da = 0.0
    for k in range(len(ps) - 1, -1, -1):
        zk, p, m = zs[k], ps[k], ms[k]
        zk1 = zs[k + 1]
        da += float(np.sum(dz * (m - zk1)) / (1.0 + a))
        dm = (a / (1.0 + a)) * dz
        dz_prev = dz / (1.0 + a)
        dp = np.einsum("bid,bjd->bij", dm, zk)
        dz_prev = dz_prev + np.einsum("bij,bid->bjd", p, dm)
        ds = p * (dp - (dp * p).sum(axis=2, keepdims=True)) / tau
        dz_prev = dz_prev + np.einsum("bij,bjd->bid", ds, zk)
        dz_prev = dz_prev + np.einsum("bij,bid->bjd", ds, zk)
        dz = dz_prev
    dlog_alpha = a * da
    return dz, dw, dv, dlog_alpha


def _batch_arrays(reviews: list[Review], length: int) -> tuple[np.ndarray, np.ndarray]:
    if not reviews:
        raise ValueError("batch must be nonempty")
    x = np.array([r.word_indices for r in reviews], dtype=int)
    if x.shape[1] != length:
        raise ValueError(f"reviews must have length {length}, got {x.shape[1]}")
    y = np.array([r.label for r in reviews], dtype=float)
    return x, y


def forward(
    model: SentimentModel,
    word_indices: tuple[int, ...],
    mode: str = HARDMAX,
    tie_tol: float = DEFAULT_TIE_TOL,
) -> tuple[float, dynamics.TrajectoryRecord]:
    """Probability and recorded K-step trajectory for a single review."""
    if len(word_indices) != model.review_length:
        raise ValueError(
            f"expected {model.review_length} indices, got {len(word_indices)}"
        )
    spec = AttentionSpec(
        a=SpdMatrix.identity(model.dim),
        alpha=model.alpha,
        mode=mode,
        tie_tol=tie_tol,
        tau=model.tau if mode == SOFTMAX else None,
    )
    stepper = dynamics.step_hardmax if mode == HARDMAX else dynamics.step_softmax
    config = TokenConfiguration(points=model.e[np.array(word_indices, dtype=int)])
    steps = []
    for k in range(model.depth):
        outcome = stepper(config, spec, step=k)
        steps.append(outcome)
        config = outcome.next
    traj = dynamics.TrajectoryRecord(
        initial=TokenConfiguration(points=model.e[np.array(word_indices, dtype=int)]),
        spec=spec,
        steps=tuple(steps),
        converged=False,
        stop_reason=dynamics.MAX_STEPS,
    )
    zbar = config.points.mean(axis=0)
    yhat = float(_sigmoid(np.array([zbar @ model.w + model.v]))[0])
    return yhat, traj


def predicted_label(yhat: float) -> int:
    """Round half up: probabilities at or above one half are positive."""
    return 1 if yhat >= 0.5 else 0


def loss(model: SentimentModel, reviews: list[Review], mode: str = SOFTMAX) -> float:
    """Mean clamped binary cross-entropy over a batch."""
    x, y = _batch_arrays(reviews, model.review_length)
    if mode == SOFTMAX:
        yhat, _ = _forward_batched(
            model.e, model.log_alpha, model.w, model.v, x, model.tau, model.depth
        )
    else:
        yhat = np.array([forward(model, r.word_indices, mode=HARDMAX)[0] for r in reviews])
    return float(_bce(yhat, y).mean())


@dataclass(frozen=True, eq=False)
class Gradients:
    """Mean-loss gradients; embedding rows are sparse (touched rows only)."""

    e_rows: dict[int, np.ndarray]
    w: np.ndarray
    v: float
    log_alpha: float


def gradient(model: SentimentModel, reviews: list[Review]) -> Gradients:
    """Exact softmax-mode gradients of loss() for the given batch."""
    x, y = _batch_arrays(reviews, model.review_length)
    yhat, cache = _forward_batched(
        model.e, model.log_alpha, model.w, model.v, x, model.tau, model.depth
    )
    dz, dw, dv, dlog_alpha = _backward_batched(yhat, y, model.w, model.tau, cache)
    rows: dict[int, np.ndarray] = {}
    flat_idx = x.ravel()
    flat_dz = dz.reshape(-1, model.dim)
    for pos, row in enumerate(flat_idx):
        r = int(row)
        if r in rows:
            rows[r] = rows[r] + flat_dz[pos]
        else:
            rows[r] = flat_dz[pos].copy()
    return Gradients(e_rows=rows, w=dw, v=dv, log_alpha=dlog_alpha)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 100
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    accuracy: float


class _Adam:
    def __init__(self, shapes: dict[str, tuple[int, ...]], cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros(s) for k, s in shapes.items()}
        self.v = {k: np.zeros(s) for k, s in shapes.items()}
        self.t = 0

    def update(self, grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Bias-corrected Adam deltas to be subtracted from the parameters."""
        c = self.cfg
        self.t += 1
        deltas = {}
        for k, g in grads.items():
            self.m[k] = c.beta1 * self.m[k] + (1 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1 - c.beta2) * g * g
            mhat = self.m[k] / (1 - c.beta1**self.t)
            vhat = self.v[k] / (1 - c.beta2**self.t)
            deltas[k] = c.learning_rate * mhat / (np.sqrt(vhat) + c.eps)
        return deltas


def train(
    model: SentimentModel, reviews: list[Review], cfg: TrainConfig = TrainConfig()
) -> tuple[SentimentModel, list[EpochStats]]:
    """Adam on the softmax relaxation; returns the trained model and history.

    Batches are drawn from a seeded shuffle each epoch, so identical seeds
    and inputs reproduce the same model bit for bit.  Epoch statistics are
    running means over the batches as they were seen (before each update).
    """
    if not reviews:
        raise ValueError("training needs at least one review")
    x_all, y_all = _batch_arrays(reviews, model.review_length)
    rng = np.random.default_rng(cfg.seed)

    e = model.e.copy()
    w = model.w.copy()
    v = float(model.v)
    log_alpha = float(model.log_alpha)
    adam = _Adam(
        {"e": e.shape, "w": w.shape, "v": (), "log_alpha": ()}, cfg
    )

    history: list[EpochStats] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(reviews))
        loss_sum = 0.0
        correct = 0
        for b, start in enumerate(range(0, len(reviews), cfg.batch_size)):
            sel = order[start : start + cfg.batch_size]
            x, y = x_all[sel], y_all[sel]
            yhat, cache = _forward_batched(e, log_alpha, w, v, x, model.tau, model.depth)
            batch_loss = float(_bce(yhat, y).mean())
            if not math.isfinite(batch_loss):
                raise NonFiniteLossError(epoch=epoch, batch=b, value=batch_loss)
            loss_sum += batch_loss * len(sel)
            correct += int(((yhat >= 0.5).astype(int) == y.astype(int)).sum())

            dz, dw, dv, dla = _backward_batched(yhat, y, w, model.tau, cache)
            de = np.zeros_like(e)
            np.add.at(de, x.ravel(), dz.reshape(-1, e.shape[1]))
            deltas = adam.update(
                {"e": de, "w": dw, "v": np.asarray(dv), "log_alpha": np.asarray(dla)}
            )
            e -= deltas["e"]
            w -= deltas["w"]
            v -= float(deltas["v"])
            log_alpha -= float(deltas["log_alpha"])
        history.append(
            EpochStats(
                epoch=epoch,
                loss=loss_sum / len(reviews),
                accuracy=correct / len(reviews),
            )
        )
    trained = replace(model, e=e, w=w, v=v, log_alpha=log_alpha)
    return trained, history


@dataclass(frozen=True)
class LeaderStats:
    """Per-review leader counts from hardmax runs of the final model."""

    mean: float
    std: float
    min: int
    max: int
    fraction_detected_at_start: float
    tie_artifacts: int


@dataclass(frozen=True, eq=False)
class EvalReport:
    loss: float
    accuracy: float
    leader_stats: LeaderStats


def evaluate(
    model: SentimentModel, reviews: list[Review], mode: str = HARDMAX
) -> EvalReport:
    """Loss, accuracy, and leader statistics over a labelled dataset.

    Leader statistics always come from hardmax trajectories regardless of
    the scoring mode.  Reviews whose leader detection trips the tie window
    (persistence violation) are counted as tie artifacts and excluded from
    the leader statistics; reviews without any leader are excluded from
    the detected-at-start fraction only.
    """
    if not reviews:
        raise ValueError("evaluation needs at least one review")
    yhats = []
    counts: list[int] = []
    initial_fractions: list[float] = []
    tie_artifacts = 0
    for r in reviews:
        yhat, traj = forward(model, r.word_indices, mode=mode)
        yhats.append(yhat)
        if mode == HARDMAX:
            hard_traj = traj
        else:
            _, hard_traj = forward(model, r.word_indices, mode=HARDMAX)
        try:
            leaders = clusters.detect_leaders(hard_traj)
        except clusters.PersistenceViolationError:
            tie_artifacts += 1
            continue
        counts.append(len(leaders))
        if leaders:
            at_start = sum(1 for l in leaders if l.detected_at_step == 0)
            initial_fractions.append(at_start / len(leaders))

    y = np.array([r.label for r in reviews], dtype=float)
    yhat_arr = np.array(yhats)
    stats = LeaderStats(
        mean=float(np.mean(counts)) if counts else 0.0,
        std=float(np.std(counts)) if counts else 0.0,
        min=int(min(counts)) if counts else 0,
        max=int(max(counts)) if counts else 0,
        fraction_detected_at_start=(
            float(np.mean(initial_fractions)) if initial_fractions else 0.0
        ),
        tie_artifacts=tie_artifacts,
    )
    return EvalReport(
        loss=float(_bce(yhat_arr, y).mean()),
        accuracy=float(((yhat_arr >= 0.5).astype(int) == y.astype(int)).mean()),
        leader_stats=stats,
    )
