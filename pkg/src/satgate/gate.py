"""The respond-vs-clarify gate and offline A/B replay of gating variants.

The dialogue manager asks a clarification question when the predicted
satisfaction falls below the threshold. Replayed offline, a clarification on
a truly unsatisfied turn resolves successfully with probability ``p_fix``
(post-clarification rating 1, else 0); one on an already satisfied turn
annoys the user with probability ``p_annoy`` (question rating 0, else 1).
Each variant's experience is the average contextual satisfaction across its
sessions.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .dialog import Session
from .metrics import cus

__all__ = [
    "Decision",
    "GateDecision",
    "ClarificationOutcome",
    "BehaviorModel",
    "Variant",
    "VariantReport",
    "gate",
    "resolve_clarification",
    "simulate_ab",
]


class Decision(Enum):
    RESPOND = "respond"
    CLARIFY = "clarify"


@dataclass(frozen=True)
class GateDecision:
    probability: float
    decision: Decision
    threshold: float

    def __post_init__(self):
        if not (0.0 < self.probability < 1.0):
            raise ValueError(f"probability must lie strictly in (0, 1), got {self.probability!r}")
        if not (0.0 < self.threshold < 1.0):
            raise ValueError(f"threshold must lie strictly in (0, 1), got {self.threshold!r}")
        expected = Decision.CLARIFY if self.probability < self.threshold else Decision.RESPOND
        if self.decision is not expected:
            raise ValueError("decision must be CLARIFY iff probability < threshold")


def gate(probability: float, threshold: float) -> GateDecision:
    """Clarify when predicted satisfaction is strictly below the threshold;
    ties respond."""
    p, t = float(probability), float(threshold)
    decision = Decision.CLARIFY if p < t else Decision.RESPOND
    return GateDecision(probability=p, decision=decision, threshold=t)


@dataclass(frozen=True)
class ClarificationOutcome:
    user_satisfied_with_question: int
    post_clarification_rating: float

    def __post_init__(self):
        if self.user_satisfied_with_question not in (0, 1):
            raise ValueError("user_satisfied_with_question must be 0 or 1")
        if not (0.0 <= self.post_clarification_rating <= 1.0):
            raise ValueError("post_clarification_rating must lie in [0, 1]")


@dataclass(frozen=True)
class BehaviorModel:
    p_fix: float = 0.8
    p_annoy: float = 0.5

    def __post_init__(self):
        for name in ("p_fix", "p_annoy"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")


def resolve_clarification(
    behavior: BehaviorModel, oracle_satisfied: bool, u: float
) -> ClarificationOutcome:
    """Outcome of asking a clarification question, driven by one uniform draw."""
    if oracle_satisfied:
        # The candidate response was already right; the question may annoy.
        return ClarificationOutcome(
            user_satisfied_with_question=0 if u < behavior.p_annoy else 1,
            post_clarification_rating=1.0,
        )
    return ClarificationOutcome(
        user_satisfied_with_question=1,
        post_clarification_rating=1.0 if u < behavior.p_fix else 0.0,
    )


@dataclass(frozen=True)
class Variant:
    """A gating policy: no predictor (always respond) or per-turn scores with
    a threshold. ``scores`` aligns with the corpus session order."""

    name: str
    scores: Optional[list[np.ndarray]]
    threshold: float = 0.7


@dataclass(frozen=True)
class VariantReport:
    name: str
    avg_cus: float
    clarification_rate: float
    n_sessions: int


def _session_bucket(session_id: str) -> float:
    digest = hashlib.sha256(session_id.encode("utf-8")).hexdigest()
    return int(digest[:12], 16) / float(1 << 48)


def _turn_ratings(session: Session, rating_source: str) -> list[float]:
    if rating_source == "oracle":
        if session.oracle_satisfaction is None:
            raise ValueError(f"session {session.session_id} has no oracle ratings")
        return [float(v) for v in session.oracle_satisfaction]
    if rating_source == "weak":
        if session.weak_labels is None:
            raise ValueError(f"session {session.session_id} has no weak labels")
        return [float(v) for v in session.weak_labels]
    raise ValueError(f"unknown rating source {rating_source!r}")


def _replay_session(
    session: Session,
    ratings: list[float],
    scores: Optional[np.ndarray],
    threshold: float,
    behavior: BehaviorModel,
    seed: int,
) -> tuple[float, int]:
    """Average per-turn experience and clarification count for one session."""
    sid_key = int(hashlib.sha256(session.session_id.encode("utf-8")).hexdigest()[:12], 16)
    draws = np.random.default_rng([seed, sid_key]).random(len(session.turns))
    contributions = []
    clarified = 0
    for t in range(len(session.turns)):
        if scores is not None and gate(scores[t], threshold).decision is Decision.CLARIFY:
            clarified += 1
            outcome = resolve_clarification(
                behavior, bool(session.oracle_satisfaction[t]), float(draws[t])
            )
            contributions.append(
                cus(
                    float(outcome.user_satisfied_with_question),
                    outcome.post_clarification_rating,
                ).contextual
            )
        else:
            contributions.append(ratings[t])
    return float(np.mean(contributions)), clarified


def simulate_ab(
    sessions: list[Session],
    variants: Sequence[Variant],
    behavior: BehaviorModel = BehaviorModel(),
    seed: int = 0,
    rating_source: str = "oracle",
    partition_weights: Optional[Sequence[float]] = None,
    paired: bool = False,
) -> list[VariantReport]:
    """Replay the corpus under each gating variant and compare average CUS.

    Sessions are split across variants by a hash of the session id with the
    given weights (equal by default), mirroring a user-population A/B test;
    ``paired=True`` instead replays every variant on every session. Reports
    come back sorted by average CUS.
    """
    if not variants:
        raise ValueError("at least one variant is required")
    for variant in variants:
        if variant.scores is not None and len(variant.scores) != len(sessions):
            raise ValueError(f"variant {variant.name!r} scores do not align with the corpus")

    if paired:
        assignment = None
    else:
        weights = (
            np.ones(len(variants)) if partition_weights is None else np.asarray(partition_weights, dtype=float)
        )
        if len(weights) != len(variants) or np.any(weights <= 0):
            raise ValueError("partition_weights must give a positive weight per variant")
        edges = np.cumsum(weights) / weights.sum()
        assignment = [
            int(np.searchsorted(edges, _session_bucket(s.session_id), side="right"))
            for s in sessions
        ]
        assignment = [min(a, len(variants) - 1) for a in assignment]

    reports = []
    for vi, variant in enumerate(variants):
        total_cus = 0.0
        total_clarified = 0
        total_turns = 0
        n_sessions = 0
        for si, session in enumerate(sessions):
            if not session.turns or (assignment is not None and assignment[si] != vi):
                continue
            ratings = _turn_ratings(session, rating_source)
            scores = variant.scores[si] if variant.scores is not None else None
            session_score, clarified = _replay_session(
                session, ratings, scores, variant.threshold, behavior, seed
            )
            total_cus += session_score
            total_clarified += clarified
            total_turns += len(session.turns)
            n_sessions += 1
        reports.append(
            VariantReport(
                name=variant.name,
                avg_cus=total_cus / n_sessions if n_sessions else float("nan"),
                clarification_rate=total_clarified / total_turns if total_turns else float("nan"),
                n_sessions=n_sessions,
            )
        )
    return sorted(reports, key=lambda r: (r.avg_cus, r.name))
