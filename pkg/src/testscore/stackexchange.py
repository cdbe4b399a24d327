"""StackExchange dump ingestion: answer quality scores and expert instances.

Each answer is scored by the posterior mean of a Beta prior updated with
its up- and down-vote counts. Users with enough answers become items whose
value distribution is the empirical distribution of sampled answer scores.
"""
from __future__ import annotations

import csv
import io
import math
import xml.etree.ElementTree as ET
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, DumpParseError, InvalidParameterError
from .instance import Empirical, Instance, Item
from .rng import as_streams
from .valuefns import batch_evaluate

UPVOTE, DOWNVOTE = 2, 3
ANSWER_POST = 2

# balanced priors and their conservative (mean 0.2) counterparts
STANDARD_PRIORS = [(5, 5), (2, 8), (10, 10), (4, 16), (20, 20), (8, 32)]


@dataclass(frozen=True)
class BetaPrior:
    a0: float = 5.0
    b0: float = 5.0

    def __post_init__(self):
        if not (self.a0 > 0 and self.b0 > 0):
            raise InvalidParameterError("prior counts must be positive")


@dataclass(frozen=True)
class AnswerRecord:
    answer_id: int
    question_id: int | None
    owner_user_id: int
    upvotes: int = 0
    downvotes: int = 0


@dataclass(frozen=True)
class ExpertProfile:
    user_id: int
    answer_scores: tuple
    mu_hat: float

    @property
    def n_answers(self) -> int:
        return len(self.answer_scores)


def answer_score(upvotes: int, downvotes: int, prior: BetaPrior = BetaPrior()) -> float:
    if upvotes < 0 or downvotes < 0:
        raise InvalidParameterError("vote counts must be >= 0")
    return (upvotes + prior.a0) / (upvotes + downvotes + prior.a0 + prior.b0)


def _rows(source):
    """Yield attribute dicts of ``<row>`` elements, streaming."""
    try:
        for _, elem in ET.iterparse(source, events=("end",)):
            if elem.tag == "row":
                yield dict(elem.attrib)
            elem.clear()
    except ET.ParseError as exc:
        line = exc.position[0] if exc.position else None
        raise DumpParseError(f"malformed XML: {exc}", line) from exc


def _int(row, key):
    v = row.get(key)
    return None if v in (None, "") else int(v)


def parse_dump(posts_file, votes_file) -> list[AnswerRecord]:
    """Answers from ``Posts.xml`` with vote counts aggregated from ``Votes.xml``.

    Accepts paths or binary file objects. Answers without an owner are
    dropped; vote types other than up and down are ignored.
    """
    answers = {}
    for row in _rows(posts_file):
        if _int(row, "PostTypeId") != ANSWER_POST:
            continue
        owner = _int(row, "OwnerUserId")
        if owner is None:
            continue
        aid = _int(row, "Id")
        answers[aid] = (_int(row, "ParentId"), owner)
    up = defaultdict(int)
    down = defaultdict(int)
    for row in _rows(votes_file):
        pid, vt = _int(row, "PostId"), _int(row, "VoteTypeId")
        if pid not in answers:
            continue
        if vt == UPVOTE:
            up[pid] += 1
        elif vt == DOWNVOTE:
            down[pid] += 1
    return [AnswerRecord(aid, q, owner, up[aid], down[aid]) for aid, (q, owner) in sorted(answers.items())]


def build_profiles(records, min_answers: int, prior: BetaPrior = BetaPrior(), *,
                   include_unvoted: bool = True) -> list[ExpertProfile]:
    """Per-user answer scores for users with at least ``min_answers`` answers."""
    if min_answers < 1:
        raise InvalidParameterError("min_answers must be >= 1")
    by_user = defaultdict(list)
    for rec in sorted(records, key=lambda r: r.answer_id):
        if not include_unvoted and rec.upvotes == 0 and rec.downvotes == 0:
            continue
        by_user[rec.owner_user_id].append(answer_score(rec.upvotes, rec.downvotes, prior))
    out = []
    for uid in sorted(by_user):
        scores = by_user[uid]
        if len(scores) >= min_answers:
            out.append(ExpertProfile(uid, tuple(scores), math.fsum(scores) / len(scores)))
    return out


@dataclass
class HoldoutSplit:
    instance: Instance
    test: dict  # user id -> np.ndarray of held-out scores
    train: dict
    dropped: list  # users rejected for exceeding the budget


def build_instance(profiles, lam: float, holdout: int = 30, train: int = 100, seed: int = 0, *,
                   mu_source: str = "all", budget_share: float = 0.3) -> HoldoutSplit:
    """Items from expert profiles with a train/test split of sampled answers.

    For each user ``train + holdout`` scores are drawn without replacement.
    Costs are ``min(1 + lam * mu_hat, B)`` with ``B = budget_share * sum(mu_hat)``.
    ``mu_source`` picks whether ``mu_hat`` comes from all answers or only
    the training draws.
    """
    if lam < 0:
        raise InvalidParameterError("lambda must be >= 0")
    if mu_source not in ("all", "train"):
        raise InvalidParameterError("mu_source must be 'all' or 'train'")
    if not profiles:
        raise DomainError("no profiles")
    streams = as_streams(seed)
    need = train + holdout
    train_tab, test_tab, mus = {}, {}, {}
    for p in profiles:
        if p.n_answers < need:
            raise DomainError(f"user {p.user_id} has {p.n_answers} answers, needs {need}")
        scores = np.asarray(p.answer_scores)
        pick = streams.get("se-split", p.user_id).permutation(len(scores))[:need]
        train_tab[p.user_id] = scores[pick[:train]]
        test_tab[p.user_id] = scores[pick[train:]]
        mus[p.user_id] = p.mu_hat if mu_source == "all" else float(np.mean(train_tab[p.user_id]))
    B = budget_share * math.fsum(mus.values())
    items, dropped = [], []
    for uid in sorted(mus):
        c = min(1.0 + lam * mus[uid], B)
        if c > B or not c > 0:
            dropped.append(uid)
            continue
        items.append(Item(uid, c, Empirical(tuple(train_tab[uid]))))
    if not items:
        raise DomainError(f"every user exceeds the budget {B}")
    return HoldoutSplit(Instance(tuple(items), B, seed), test_tab, train_tab, dropped)


def holdout_utility(test: dict, g, S) -> float:
    """Mean group value over held-out rows; row ``j`` takes each member's ``j``-th score."""
    S = sorted(S)
    if not S:
        return float(batch_evaluate(g, np.zeros((1, 0)))[0])
    X = np.column_stack([test[i] for i in S])
    return float(batch_evaluate(g, X).mean())


def profiles_csv(profiles) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["user_id", "n_answers", "mu_hat"])
    for p in profiles:
        w.writerow([p.user_id, p.n_answers, repr(p.mu_hat)])
    return buf.getvalue()


def holdout_csv(test: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["user_id", "score"])
    for uid in sorted(test):
        for v in test[uid]:
            w.writerow([uid, repr(float(v))])
    return buf.getvalue()
