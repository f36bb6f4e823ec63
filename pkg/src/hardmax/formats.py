"""On-disk formats: trajectory CSV, attention JSON, reports, model files.

Numbers are written so that reading them back reproduces the exact float
(Python's shortest round-trip repr in text formats, raw little-endian
64-bit blocks in the model file).  The trajectory directory produced by a
simulation holds three files that together rebuild a TrajectoryRecord:

  trajectory.csv   step,token,coord0..coord{d-1},is_leader
  attention.json   [{"step": s, "sets": [[members...], ...]}, ...]
  run.json         parameters echo plus convergence status

The model file is the 8-byte magic "HMAXSENT", an 8-byte little-endian
header length, a JSON header {W, d, n, K, tau, alpha, v}, then row-major
float64 blocks for E and w.  Vocabulary files hold one word per line with
the padding token on line 0.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from . import dynamics, sentiment
from .clusters import ClusterReport
from .dynamics import MergeEvent, RunConfig, StepOutcome, TrajectoryRecord
from .geometry import (
    HARDMAX,
    AttentionSet,
    AttentionSpec,
    TokenConfiguration,
    attention_sets,
    factorize_spd,
)

MODEL_MAGIC = b"HMAXSENT"

TRAJECTORY_CSV = "trajectory.csv"
ATTENTION_JSON = "attention.json"
RUN_JSON = "run.json"


class FormatError(ValueError):
    """Malformed or inconsistent input file."""


def _leader_flags(config: TokenConfiguration, spec: AttentionSpec) -> list[int]:
    if spec.mode != HARDMAX:
        return [0] * config.n
    sets = attention_sets(config, spec)
    return [1 if s.members == (i,) else 0 for i, s in enumerate(sets)]


def write_trajectory_csv(traj: TrajectoryRecord, path: str | Path) -> None:
    """One row per recorded configuration and token, with a leader flag."""
    d = traj.dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["step", "token"] + [f"coord{k}" for k in range(d)] + ["is_leader"]
        )
        for s, config in traj.recorded_configurations():
            flags = _leader_flags(config, traj.spec)
            for i in range(config.n):
                writer.writerow(
                    [s, i] + [repr(float(x)) for x in config.points[i]] + [flags[i]]
                )


def write_attention_json(traj: TrajectoryRecord, path: str | Path) -> None:
    """Tie sets at every recorded configuration (hardmax runs only)."""
    if traj.spec.mode != HARDMAX:
        raise ValueError("attention sets exist for hardmax trajectories only")
    entries = []
    for s, config in traj.recorded_configurations():
        sets = attention_sets(config, traj.spec)
        entries.append({"step": s, "sets": [list(t.members) for t in sets]})
    with open(path, "w") as fh:
        json.dump(entries, fh)


def write_run_json(
    traj: TrajectoryRecord,
    cfg: RunConfig,
    path: str | Path,
    seed: int | None = None,
) -> None:
    spec = traj.spec
    payload = {
        "mode": spec.mode,
        "alpha": spec.alpha,
        "tie_tol": spec.tie_tol,
        "tau": spec.tau,
        "a": spec.a.matrix.tolist(),
        "n": traj.n,
        "dim": traj.dim,
        "converged": traj.converged,
        "stop_reason": traj.stop_reason,
        "steps_recorded": len(traj.steps),
        "last_step": traj.steps[-1].step + 1 if traj.steps else 0,
        "near_tie_steps": traj.near_tie_steps,
        "merge_events": [
            {"config_index": m.config_index, "i": m.i, "j": m.j, "distance": m.distance}
            for m in traj.merge_events
        ],
        "max_steps": cfg.max_steps,
        "convergence_tol": cfg.convergence_tol,
        "stability_window": cfg.stability_window,
        "record_every": cfg.record_every,
        "seed": seed,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def read_trajectory(directory: str | Path) -> tuple[TrajectoryRecord, dict]:
    """Rebuild a recorded trajectory from a simulation output directory.

    Displacements are recomputed between recorded configurations, so with
    record_every > 1 they are gap displacements, not per-step ones.
    Returns the trajectory and the parsed run.json payload.
    """
    directory = Path(directory)
    if not (directory / RUN_JSON).exists():
        raise FormatError(f"missing {RUN_JSON} in {directory}")
    with open(directory / RUN_JSON) as fh:
        run = json.load(fh)
    if run.get("mode") != HARDMAX:
        raise FormatError(
            "stored run is not a hardmax run; cluster analysis needs hardmax"
            " attention sets"
        )
    for name in (TRAJECTORY_CSV, ATTENTION_JSON):
        if not (directory / name).exists():
            raise FormatError(f"missing {name} in {directory}")
    spec = AttentionSpec(
        a=factorize_spd(np.array(run["a"], dtype=float)),
        alpha=float(run["alpha"]),
        mode=HARDMAX,
        tie_tol=float(run["tie_tol"]),
    )

    configs: dict[int, dict[int, list[float]]] = {}
    with open(directory / TRAJECTORY_CSV, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["step", "token"] or header[-1] != "is_leader":
            raise FormatError("unexpected trajectory.csv header")
        ncoord = len(header) - 3
        for row in reader:
            s, i = int(row[0]), int(row[1])
            configs.setdefault(s, {})[i] = [float(x) for x in row[2 : 2 + ncoord]]

    if not configs:
        raise FormatError("trajectory.csv holds no configurations")
    order = sorted(configs)
    if order[0] != 0:
        raise FormatError("trajectory.csv must include configuration 0")
    built: dict[int, TokenConfiguration] = {}
    n_tokens = len(configs[order[0]])
    for s in order:
        rows = configs[s]
        if sorted(rows) != list(range(n_tokens)):
            raise FormatError(f"configuration {s} has missing token rows")
        built[s] = TokenConfiguration(
            points=np.array([rows[i] for i in range(n_tokens)])
        )

    with open(directory / ATTENTION_JSON) as fh:
        entries = json.load(fh)
    sets_by_step: dict[int, tuple] = {}
    for entry in entries:
        members = tuple(
            AttentionSet(owner=i, members=tuple(m))
            for i, m in enumerate(entry["sets"])
        )
        sets_by_step[int(entry["step"])] = members

    steps: list[StepOutcome] = []
    for prev, nxt in zip(order, order[1:]):
        if prev not in sets_by_step:
            raise FormatError(f"attention.json lacks sets for step {prev}")
        gap = built[nxt].points - built[prev].points
        steps.append(
            StepOutcome(
                step=prev,
                next=built[nxt],
                max_displacement=float(np.linalg.norm(gap, axis=1).max()),
                attention_sets=sets_by_step[prev],
            )
        )

    traj = TrajectoryRecord(
        initial=built[0],
        spec=spec,
        steps=tuple(steps),
        converged=bool(run["converged"]),
        stop_reason=str(run["stop_reason"]),
        merge_events=tuple(
            MergeEvent(
                config_index=int(m["config_index"]),
                i=int(m["i"]),
                j=int(m["j"]),
                distance=float(m["distance"]),
            )
            for m in run.get("merge_events", [])
        ),
        near_tie_steps=int(run.get("near_tie_steps", 0)),
    )
    return traj, run


def report_payload(report: ClusterReport, spec: AttentionSpec) -> dict:
    def cluster_dict(c):
        payload = {
            "position": [float(x) for x in c.position],
            "kind": c.kind,
            "members": list(c.members),
            "leader": c.leader,
        }
        if c.certificate is not None:
            payload["certificate"] = {
                "vertex_indices": list(c.certificate.vertex_indices),
                "weights": [float(b) for b in c.certificate.weights],
                "lambda": c.certificate.lam,
                "residual": c.certificate.residual,
            }
        else:
            payload["certificate"] = None
        return payload

    return {
        "parameters": {
            "alpha": spec.alpha,
            "mode": spec.mode,
            "tie_tol": spec.tie_tol,
            "a": spec.a.matrix.tolist(),
            "cluster_radius": report.cluster_radius,
        },
        "leaders": [
            {
                "token": l.token,
                "detected_at_step": l.detected_at_step,
                "limit_point": [float(x) for x in l.limit_point],
            }
            for l in report.leaders
        ],
        "clusters": [cluster_dict(c) for c in report.clusters],
        "verdicts": {
            "every_token_clustered": report.verdicts.every_token_clustered,
            "leaders_distinct_vertices": report.verdicts.leaders_distinct_vertices,
            "non_vertices_are_projections": report.verdicts.non_vertices_are_projections,
        },
        "zero_initial_tokens": list(report.zero_initial_tokens),
    }


def write_report_json(
    report: ClusterReport, spec: AttentionSpec, path: str | Path
) -> None:
    with open(path, "w") as fh:
        json.dump(report_payload(report, spec), fh, indent=2)


def save_model(model: sentiment.SentimentModel, path: str | Path) -> None:
    header = json.dumps(
        {
            "W": model.vocab_size,
            "d": model.dim,
            "n": model.review_length,
            "K": model.depth,
            "tau": model.tau,
            "alpha": model.alpha,
            "v": model.v,
        }
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(model.e, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.w, dtype="<f8").tobytes())


def load_model(path: str | Path) -> sentiment.SentimentModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise FormatError("not a model file (bad magic)")
    offset = len(MODEL_MAGIC)
    (header_len,) = struct.unpack_from("<Q", blob, offset)
    offset += 8
    try:
        header = json.loads(blob[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad model header: {exc}") from None
    offset += header_len

    wsize, d = int(header["W"]), int(header["d"])
    e_bytes = wsize * d * 8
    w_bytes = d * 8
    if len(blob) != offset + e_bytes + w_bytes:
        raise FormatError("model file size does not match its header")
    e = np.frombuffer(blob, dtype="<f8", count=wsize * d, offset=offset)
    w = np.frombuffer(blob, dtype="<f8", count=d, offset=offset + e_bytes)
    alpha = float(header["alpha"])
    if not alpha > 0:
        raise FormatError("stored alpha must be positive")
    return sentiment.SentimentModel(
        e=e.reshape(wsize, d).astype(float),
        log_alpha=float(np.log(alpha)),
        w=w.astype(float),
        v=float(header["v"]),
        depth=int(header["K"]),
        tau=float(header["tau"]),
        review_length=int(header["n"]),
    )


def save_vocabulary(vocab: sentiment.Vocabulary, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(vocab.words))
        fh.write("\n")


def load_vocabulary(path: str | Path) -> sentiment.Vocabulary:
    with open(path, encoding="utf-8") as fh:
        words = [line.rstrip("\n") for line in fh if line.strip() != ""]
    if not words or words[0] != sentiment.PAD_TOKEN:
        raise FormatError(f"vocabulary must start with {sentiment.PAD_TOKEN!r}")
    return sentiment.Vocabulary(words=tuple(words))


def load_dataset_tsv(path: str | Path) -> list[tuple[int, str]]:
    """label<TAB>text pairs, one per line; labels must be 0 or 1."""
    rows: list[tuple[int, str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t", 1)
            if len(parts) != 2 or parts[0] not in ("0", "1"):
                raise FormatError(f"line {lineno}: expected 'label<TAB>text'")
            rows.append((int(parts[0]), parts[1]))
    if not rows:
        raise FormatError("dataset holds no rows")
    return rows


def write_history_csv(history: list[sentiment.EpochStats], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "accuracy"])
        for row in history:
            writer.writerow([row.epoch, repr(row.loss), repr(row.accuracy)])


def write_trace_csv(
    traj: TrajectoryRecord, words: list[str], path: str | Path
) -> None:
    """Trajectory CSV for one review, with the word behind each token."""
    d = traj.dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["step", "token", "word"]
            + [f"coord{k}" for k in range(d)]
            + ["is_leader"]
        )
        for s, config in traj.recorded_configurations():
            flags = _leader_flags(config, traj.spec)
            for i in range(config.n):
                writer.writerow(
                    [s, i, words[i]]
                    + [repr(float(x)) for x in config.points[i]]
                    + [flags[i]]
                )
