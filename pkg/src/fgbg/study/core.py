"""Human-recognition study sessions, storage and reporting.

Raters see masked images drawn from the fg or bg condition of a
coarse-label dataset and answer with up to five ordered category picks.
Ground truth is never exposed until the session completes. Every accepted
response is appended to a per-session event log and fsynced before the
acknowledgment, so a crash after the ack can never lose it; state is
rebuilt by replaying the logs on startup.
"""

from __future__ import annotations

import json
import os
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..errors import ConfigError, DataError
from ..evaluation import predict_scores, topk_accuracy
from ..loading import LoadedDataset, load_dataset
from ..manifest import read_manifest, resolve_image_path
from ..nn.checkpoint import load_checkpoint
from ..nn.network import eval_size_for
from ..rng import stream

__all__ = ["StudyError", "StudyDataset", "StudySession", "StudyReport", "StudyService"]

CONDITIONS = ("fg", "bg")


class StudyError(DataError):
    """Carries a machine-readable error code alongside the message."""

    def __init__(self, code: str, message: str, status: int = 400):
        super().__init__(message)
        self.code = code
        self.status = status


@dataclass
class StudyDataset:
    """One condition's test split, labels kept server-side only."""

    condition: str
    manifest_path: Path
    source_ids: list[str]
    labels: dict[str, str]  # source_id -> coarse label
    image_paths: dict[str, Path]
    roster: list[str]
    display: dict[str, str]

    @classmethod
    def open(cls, condition: str, manifest_path: Path,
             display: Optional[dict[str, str]] = None) -> "StudyDataset":
        records = sorted(read_manifest(manifest_path), key=lambda r: r.source_id)
        if not records:
            raise DataError(f"study manifest {manifest_path} is empty")
        roster = sorted({r.label for r in records})
        return cls(
            condition=condition,
            manifest_path=Path(manifest_path),
            source_ids=[r.source_id for r in records],
            labels={r.source_id: r.label for r in records},
            image_paths={
                r.source_id: resolve_image_path(manifest_path, r) for r in records
            },
            roster=roster,
            display=dict(display or {}),
        )


@dataclass
class Trial:
    trial_id: str
    source_id: str
    served: bool = False
    picks: Optional[list[str]] = None
    elapsed_ms: Optional[float] = None


@dataclass
class StudySession:
    session_id: str
    condition: str
    seed: int
    trials: list[Trial]

    @property
    def answered(self) -> int:
        return sum(1 for t in self.trials if t.picks is not None)

    @property
    def remaining(self) -> int:
        return len(self.trials) - self.answered

    @property
    def state(self) -> str:
        return "complete" if self.remaining == 0 else "open"

    def next_unanswered(self) -> Optional[Trial]:
        for trial in self.trials:
            if trial.picks is None:
                return trial
        return None

    def find(self, trial_id: str) -> Optional[Trial]:
        for trial in self.trials:
            if trial.trial_id == trial_id:
                return trial
        return None


@dataclass
class StudyReport:
    session_id: str
    condition: str
    answered: int
    human_top1: float
    human_top5: float
    network_id: Optional[str]
    network_top1: Optional[float]
    network_top5: Optional[float]
    per_category: list[dict]
    trials: list[dict]  # revealed ground truth, only emitted post-completion

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "condition": self.condition,
            "answered": self.answered,
            "human_top1": self.human_top1,
            "human_top5": self.human_top5,
            "network_id": self.network_id,
            "network_top1": self.network_top1,
            "network_top5": self.network_top5,
            "per_category": self.per_category,
            "trials": self.trials,
        }


def sample_trials(
    dataset: StudyDataset, trial_count: int, seed: int
) -> list[str]:
    """Deterministic trial sampling with full category coverage.

    One random sample per roster category first (when trial_count allows),
    the rest drawn without replacement; the combined list is shuffled.
    """
    roster = dataset.roster
    if trial_count < len(roster):
        raise StudyError(
            "trial_count_too_small",
            f"{trial_count} trials cannot cover all {len(roster)} categories",
            status=422,
        )
    if trial_count > len(dataset.source_ids):
        raise StudyError(
            "not_enough_samples",
            f"dataset has {len(dataset.source_ids)} samples, {trial_count} requested",
            status=422,
        )
    rng = stream(seed, "study", dataset.condition)
    by_label: dict[str, list[str]] = {lab: [] for lab in roster}
    for sid in dataset.source_ids:
        by_label[dataset.labels[sid]].append(sid)
    chosen = []
    for lab in roster:
        pool = by_label[lab]
        if not pool:
            raise DataError(f"category {lab} has no samples in the study dataset")
        chosen.append(pool[int(rng.integers(len(pool)))])
    rest = [sid for sid in dataset.source_ids if sid not in set(chosen)]
    extra = trial_count - len(chosen)
    if extra:
        order = rng.permutation(len(rest))
        chosen.extend(rest[int(i)] for i in order[:extra])
    final = rng.permutation(len(chosen))
    return [chosen[int(i)] for i in final]


class StudyService:
    """Session registry with append-only, replayable persistence."""

    def __init__(
        self,
        datasets: dict[str, StudyDataset],
        store_dir: Path,
        nets_dir: Optional[Path] = None,
    ):
        for condition in datasets:
            if condition not in CONDITIONS:
                raise ConfigError(f"unknown study condition {condition!r}")
        self.datasets = datasets
        self.store_dir = Path(store_dir)
        self.store_dir.mkdir(parents=True, exist_ok=True)
        self.nets_dir = Path(nets_dir) if nets_dir else None
        self.sessions: dict[str, StudySession] = {}
        self._replay()

    # -- persistence ------------------------------------------------------

    def _log_path(self, session_id: str) -> Path:
        return self.store_dir / f"{session_id}.log"

    def _append(self, session_id: str, event: dict) -> None:
        # open/write/fsync/close per event: an acknowledged response is on disk
        path = self._log_path(session_id)
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True))
            fh.write("\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _replay(self) -> None:
        for path in sorted(self.store_dir.glob("*.log")):
            session = None
            with open(path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        event = json.loads(line)
                    except json.JSONDecodeError:
                        continue  # torn tail write from a crash; acked events are intact
                    if event["type"] == "created":
                        session = StudySession(
                            session_id=event["session_id"],
                            condition=event["condition"],
                            seed=event["seed"],
                            trials=[
                                Trial(trial_id=t["trial_id"], source_id=t["source_id"])
                                for t in event["trials"]
                            ],
                        )
                    elif event["type"] == "served" and session is not None:
                        trial = session.find(event["trial_id"])
                        if trial:
                            trial.served = True
                    elif event["type"] == "response" and session is not None:
                        trial = session.find(event["trial_id"])
                        if trial:
                            trial.served = True
                            trial.picks = list(event["picks"])
                            trial.elapsed_ms = event.get("elapsed_ms")
            if session is not None:
                self.sessions[session.session_id] = session

    # -- operations ---------------------------------------------------------

    def roster(self, condition: str) -> list[dict]:
        ds = self._dataset(condition)
        return [
            {"label": lab, "display": ds.display.get(lab, lab)} for lab in ds.roster
        ]

    def _dataset(self, condition: str) -> StudyDataset:
        if condition not in self.datasets:
            raise StudyError(
                "unknown_condition", f"no dataset for condition {condition!r}", status=404
            )
        return self.datasets[condition]

    def create_session(self, condition: str, trial_count: int, seed: int) -> StudySession:
        dataset = self._dataset(condition)
        source_ids = sample_trials(dataset, trial_count, seed)
        session_id = uuid.uuid5(
            uuid.NAMESPACE_URL, f"fgbg-study/{condition}/{seed}/{trial_count}/{uuid.uuid4()}"
        ).hex[:12]
        trials = [
            Trial(trial_id=f"{session_id}.{i:04d}", source_id=sid)
            for i, sid in enumerate(source_ids)
        ]
        session = StudySession(
            session_id=session_id, condition=condition, seed=seed, trials=trials
        )
        self._append(
            session_id,
            {
                "type": "created",
                "session_id": session_id,
                "condition": condition,
                "seed": seed,
                "trial_count": trial_count,
                "trials": [
                    {"trial_id": t.trial_id, "source_id": t.source_id} for t in trials
                ],
            },
        )
        self.sessions[session_id] = session
        return session

    def get_session(self, session_id: str) -> StudySession:
        session = self.sessions.get(session_id)
        if session is None:
            raise StudyError(
                "unknown_session", f"no session {session_id!r}", status=404
            )
        return session

    def next_trial(self, session_id: str) -> Optional[Trial]:
        session = self.get_session(session_id)
        trial = session.next_unanswered()
        if trial is not None and not trial.served:
            trial.served = True
            self._append(
                session_id, {"type": "served", "trial_id": trial.trial_id}
            )
        return trial

    def image_for_trial(self, trial_id: str) -> Path:
        session_id = trial_id.split(".", 1)[0]
        session = self.sessions.get(session_id)
        if session is None:
            raise StudyError("unknown_trial", f"no trial {trial_id!r}", status=404)
        trial = session.find(trial_id)
        if trial is None:
            raise StudyError("unknown_trial", f"no trial {trial_id!r}", status=404)
        return self.datasets[session.condition].image_paths[trial.source_id]

    def submit_response(
        self,
        session_id: str,
        trial_id: str,
        picks: Sequence[str],
        elapsed_ms: Optional[float] = None,
    ) -> None:
        session = self.get_session(session_id)
        trial = session.find(trial_id)
        if trial is None:
            raise StudyError("unknown_trial", f"no trial {trial_id!r} in session", status=404)
        if not trial.served:
            raise StudyError(
                "trial_not_served", f"trial {trial_id} has not been served yet", status=409
            )
        if trial.picks is not None:
            raise StudyError(
                "duplicate_submission", f"trial {trial_id} was already answered", status=409
            )
        picks = list(picks)
        if not 1 <= len(picks) <= 5:
            raise StudyError(
                "invalid_picks", f"between 1 and 5 picks required, got {len(picks)}",
                status=422,
            )
        if len(set(picks)) != len(picks):
            raise StudyError("invalid_picks", "picks must be distinct", status=422)
        roster = set(self.datasets[session.condition].roster)
        outside = [p for p in picks if p not in roster]
        if outside:
            raise StudyError(
                "pick_outside_roster", f"unknown categories: {outside}", status=422
            )
        event = {
            "type": "response",
            "trial_id": trial_id,
            "picks": picks,
            "elapsed_ms": elapsed_ms,
            "ts": time.time(),
        }
        self._append(session_id, event)  # durable before the in-memory ack
        trial.picks = picks
        trial.elapsed_ms = elapsed_ms

    # -- reporting ----------------------------------------------------------

    def _network_report(self, session: StudySession, net_id: str,
                        source_ids: list[str]) -> tuple[str, float, float]:
        if self.nets_dir is None:
            raise StudyError("no_networks", "service started without a nets dir", status=404)
        ckpt = self.nets_dir / f"{net_id}.ckpt"
        if not ckpt.exists():
            raise StudyError("unknown_network", f"no checkpoint {ckpt.name}", status=404)
        net, _, _ = load_checkpoint(ckpt)
        dataset = self.datasets[session.condition]
        loaded = load_dataset(
            dataset.manifest_path, eval_size_for(net.input_size), class_names=dataset.roster
        )
        index = {sid: i for i, sid in enumerate(loaded.source_ids)}
        rows = [index[sid] for sid in source_ids]
        subset = LoadedDataset(
            kind=loaded.kind,
            split=loaded.split,
            manifest_path=loaded.manifest_path,
            images=loaded.images[rows],
            labels=loaded.labels[rows],
            class_names=loaded.class_names,
            source_ids=[loaded.source_ids[i] for i in rows],
            fg_ratios=loaded.fg_ratios[rows],
            frame_ratios=loaded.frame_ratios[rows],
        )
        scores = predict_scores(net, subset)
        k5 = min(5, len(loaded.class_names))
        return (
            net_id,
            topk_accuracy(scores, subset.labels, 1),
            topk_accuracy(scores, subset.labels, k5),
        )

    def report(self, session_id: str, net_id: Optional[str] = None) -> StudyReport:
        session = self.get_session(session_id)
        answered = [t for t in session.trials if t.picks is not None]
        if not answered:
            raise StudyError("no_responses", "no answered trials to report on", status=409)
        dataset = self.datasets[session.condition]
        labels = [dataset.labels[t.source_id] for t in answered]
        top1_hits = [t.picks[0] == lab for t, lab in zip(answered, labels)]
        top5_hits = [lab in t.picks for t, lab in zip(answered, labels)]

        per_category = []
        for lab in dataset.roster:
            rows = [i for i, l in enumerate(labels) if l == lab]
            if not rows:
                continue
            per_category.append(
                {
                    "label": lab,
                    "display": dataset.display.get(lab, lab),
                    "n": len(rows),
                    "human_top1": float(np.mean([top1_hits[i] for i in rows])),
                    "human_top5": float(np.mean([top5_hits[i] for i in rows])),
                }
            )

        network_id = network_top1 = network_top5 = None
        if net_id is not None:
            network_id, network_top1, network_top5 = self._network_report(
                session, net_id, [t.source_id for t in answered]
            )

        trials = []
        if session.state == "complete":
            trials = [
                {
                    "trial_id": t.trial_id,
                    "source_id": t.source_id,
                    "label": dataset.labels[t.source_id],
                    "picks": t.picks,
                }
                for t in session.trials
            ]
        return StudyReport(
            session_id=session_id,
            condition=session.condition,
            answered=len(answered),
            human_top1=float(np.mean(top1_hits)),
            human_top5=float(np.mean(top5_hits)),
            network_id=network_id,
            network_top1=network_top1,
            network_top5=network_top5,
            per_category=per_category,
            trials=trials,
        )
