"""Validity and reliability statistics over alignment-score tables."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Hashable, Iterable, Mapping, Optional, Sequence

import numpy as np

CONTROL = "control"
ROLE_PREFIX = "role:"
REPEAT_PREFIX = "rep:"


class DegenerateStatistic(ValueError):
    """A statistic is undefined for the given data (zero variance, zero mean, ...)."""


# -- elementary statistics ----------------------------------------------

def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two vectors of equal length")
    if x.size < 3:
        raise ValueError("pearson needs at least 3 observations")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = (dx * dx).sum(), (dy * dy).sum()
    if sxx == 0 or syy == 0:
        raise DegenerateStatistic("degenerate series")
    return float(np.clip((dx * dy).sum() / math.sqrt(sxx * syy), -1.0, 1.0))


def priming_delta(r_control: float, r_steered: float) -> float:
    """Relative score change ``(steered - control) / control``."""
    if r_control == 0:
        raise DegenerateStatistic("control score is zero")
    return (r_steered - r_control) / r_control


def cronbach_alpha(items) -> float:
    """Internal consistency of a subjects x items matrix (sample variances)."""
    X = np.asarray(items, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2 or X.shape[1] < 2:
        raise ValueError("cronbach_alpha needs at least 2 subjects and 2 items")
    k = X.shape[1]
    total_var = X.sum(axis=1).var(ddof=1)
    if total_var == 0:
        raise DegenerateStatistic("total score has zero variance")
    return float(k / (k - 1) * (1.0 - X.var(axis=0, ddof=1).sum() / total_var))


def coefficient_of_variation(x) -> float:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise ValueError("coefficient of variation needs at least 2 values")
    mean = x.mean()
    if mean == 0:
        raise DegenerateStatistic("mean is zero")
    return float(x.std(ddof=1) / abs(mean))


def cohen_kappa(labels_a: Sequence[Hashable], labels_b: Sequence[Hashable]) -> float:
    if len(labels_a) != len(labels_b):
        raise ValueError("label vectors differ in length")
    n = len(labels_a)
    if n == 0:
        raise ValueError("no labels")
    p_o = sum(a == b for a, b in zip(labels_a, labels_b)) / n
    ca, cb = Counter(labels_a), Counter(labels_b)
    p_e = sum(ca[c] * cb[c] for c in ca) / (n * n)
    if p_e == 1:
        if p_o == 1:
            return 1.0
        raise DegenerateStatistic("degenerate marginals")
    return (p_o - p_e) / (1 - p_e)


def mean_pairwise_kappa(annotations: Sequence[Sequence[Hashable]]) -> float:
    if len(annotations) < 2:
        raise ValueError("need at least two annotators")
    return float(np.mean([cohen_kappa(a, b) for a, b in combinations(annotations, 2)]))


_BANDS = [(0.0, "poor"), (0.20, "slight"), (0.40, "fair"), (0.60, "moderate"),
          (0.80, "substantial"), (1.0, "almost perfect")]


def kappa_band(kappa: float) -> str:
    """Landis-Koch label for an agreement coefficient."""
    if kappa < 0:
        return "poor"
    for upper, label in _BANDS[1:]:
        if kappa <= upper + 1e-12:
            return label
    return "almost perfect"


def mean_correlation(rs: Sequence[float], fisher: bool = False) -> float:
    rs = np.asarray(rs, dtype=float)
    if rs.size == 0:
        raise DegenerateStatistic("no correlations to average")
    if not fisher:
        return float(rs.mean())
    z = np.arctanh(np.clip(rs, -1 + 1e-12, 1 - 1e-12))
    return float(np.tanh(z.mean()))


# -- score cube ------------------------------------------------------------

@dataclass
class CulturePairSets:
    similar: list[frozenset]
    distinct: list[frozenset]

    def __post_init__(self):
        self.similar = [frozenset(p) for p in self.similar]
        self.distinct = [frozenset(p) for p in self.distinct]
        for p in self.similar + self.distinct:
            if len(p) != 2:
                raise ValueError(f"culture pair must hold two distinct groups: {sorted(p)}")
        if set(self.similar) & set(self.distinct):
            raise ValueError("a pair cannot be both similar and distinct")

    @classmethod
    def from_cluster(cls, related: Iterable[str], others: Iterable[str]) -> "CulturePairSets":
        """Pairs within ``related`` are similar; related-other pairs are distinct."""
        related, others = list(related), list(others)
        return cls([frozenset(p) for p in combinations(related, 2)],
                   [frozenset((a, b)) for a in related for b in others])

    def relation(self, g1: str, g2: str) -> Optional[str]:
        p = frozenset((g1, g2))
        if p in self.similar:
            return "similar"
        if p in self.distinct:
            return "distinct"
        return None

    def groups(self) -> list[str]:
        return sorted({g for p in self.similar + self.distinct for g in p})

    def to_dict(self) -> dict:
        return {"similar": [sorted(p) for p in self.similar],
                "distinct": [sorted(p) for p in self.distinct]}


# the default four-culture instantiation: three East Asian groups vs the US
EAST_ASIA_US = CulturePairSets.from_cluster(["CN", "JP", "KR"], ["US"])


@dataclass
class ScoreCube:
    """Scores keyed by (method, group, model, condition); absent cells stay absent."""

    scores: dict = field(default_factory=dict)

    def add(self, method: str, group: str, model: str, score: float,
            condition: str = CONTROL) -> None:
        key = (str(method), str(group), str(model), str(condition))
        if key in self.scores:
            raise ValueError(f"duplicate score cell {key}")
        score = float(score)
        if not math.isfinite(score):
            raise ValueError(f"non-finite score for {key}")
        self.scores[key] = score

    def get(self, method, group, model, condition=CONTROL) -> Optional[float]:
        return self.scores.get((method, group, model, condition))

    def _axis(self, i: int) -> list[str]:
        return list(dict.fromkeys(k[i] for k in self.scores))

    @property
    def methods(self) -> list[str]:
        return self._axis(0)

    @property
    def groups(self) -> list[str]:
        return self._axis(1)

    @property
    def models(self) -> list[str]:
        return self._axis(2)

    @property
    def conditions(self) -> list[str]:
        return self._axis(3)

    def models_for(self, method: str, condition: str = CONTROL) -> list[str]:
        return list(dict.fromkeys(k[2] for k in self.scores if k[0] == method and k[3] == condition))

    def vector(self, method, group, models: Sequence[str], condition=CONTROL) -> np.ndarray:
        return np.array([self.scores.get((method, group, m, condition), np.nan) for m in models])

    @classmethod
    def from_records(cls, records: Iterable[Mapping]) -> "ScoreCube":
        cube = cls()
        for i, rec in enumerate(records, 1):
            try:
                cube.add(rec["method"], rec["group"], rec["model"], rec["score"],
                         rec.get("condition", CONTROL))
            except KeyError as exc:
                raise ValueError(f"record {i}: missing field {exc.args[0]!r}") from None
        return cube

    @classmethod
    def read_jsonl(cls, path) -> "ScoreCube":
        records = []
        with Path(path).open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{lineno}: malformed record ({exc.msg})") from None
        return cls.from_records(records)

    def records(self) -> list[dict]:
        return [{"method": m, "group": g, "model": p, "condition": c, "score": s}
                for (m, g, p, c), s in self.scores.items()]

    def write_jsonl(self, path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _paired(x: np.ndarray, y: np.ndarray):
    keep = ~(np.isnan(x) | np.isnan(y))
    return x[keep], y[keep]


@dataclass
class CorrelationDetail:
    value: float
    used: list[tuple] = field(default_factory=list)
    skipped: list[tuple] = field(default_factory=list)


def _corr_or_skip(x, y, label, used, skipped):
    x, y = _paired(x, y)
    if x.size < 3:
        skipped.append((*label, "fewer than 3 shared models"))
        return None
    try:
        r = pearson(x, y)
    except DegenerateStatistic as exc:
        skipped.append((*label, str(exc)))
        return None
    used.append((*label, r))
    return r


def convergent_validity_detail(cube: ScoreCube, method: str, fisher: bool = False,
                               condition: str = CONTROL) -> CorrelationDetail:
    """Mean over groups of the mean correlation of ``method`` with every other method."""
    others = [m for m in cube.methods if m != method]
    if method not in cube.methods:
        raise ValueError(f"unknown method {method!r}")
    if not others:
        raise DegenerateStatistic("convergent validity needs at least two methods")
    models = cube.models
    used, skipped, per_group = [], [], []
    for g in cube.groups:
        x = cube.vector(method, g, models, condition)
        if np.all(np.isnan(x)):
            continue
        rs = []
        for other in others:
            r = _corr_or_skip(x, cube.vector(other, g, models, condition), (g, other), used, skipped)
            if r is not None:
                rs.append(r)
        if rs:
            per_group.append(mean_correlation(rs, fisher))
    if not per_group:
        raise DegenerateStatistic("every correlation is degenerate or missing")
    return CorrelationDetail(mean_correlation(per_group, fisher), used, skipped)


def convergent_validity(cube: ScoreCube, method: str, fisher: bool = False) -> float:
    return convergent_validity_detail(cube, method, fisher).value


def discriminant_validity_detail(cube: ScoreCube, method: str, pairs: CulturePairSets,
                                 fisher: bool = False, condition: str = CONTROL) -> CorrelationDetail:
    """Mean correlation over similar pairs minus mean over distinct pairs.

    Pairs with a missing group are excluded; a degenerate pair raises.
    """
    models = cube.models
    used, skipped = [], []
    sides = {"similar": [], "distinct": []}
    for side, plist in (("similar", pairs.similar), ("distinct", pairs.distinct)):
        for p in plist:
            g1, g2 = sorted(p)
            x, y = _paired(cube.vector(method, g1, models, condition),
                           cube.vector(method, g2, models, condition))
            if x.size == 0:
                skipped.append((g1, g2, "missing group"))
                continue
            if x.size < 3:
                skipped.append((g1, g2, "fewer than 3 shared models"))
                continue
            r = pearson(x, y)
            used.append((g1, g2, r))
            sides[side].append(r)
    if not sides["similar"] or not sides["distinct"]:
        raise DegenerateStatistic("discriminant validity needs both similar and distinct pairs")
    value = mean_correlation(sides["similar"], fisher) - mean_correlation(sides["distinct"], fisher)
    return CorrelationDetail(value, used, skipped)


def discriminant_validity(cube: ScoreCube, method: str, pairs: CulturePairSets,
                          fisher: bool = False) -> float:
    return discriminant_validity_detail(cube, method, pairs, fisher).value


def predictive_validity(cube: ScoreCube, method: str, outcome_method: str,
                        condition: str = CONTROL) -> CorrelationDetail:
    """Mean over groups of the correlation between scores and a downstream outcome."""
    models = cube.models
    used, skipped, rs = [], [], []
    for g in cube.groups:
        x = cube.vector(method, g, models, condition)
        y = cube.vector(outcome_method, g, models, condition)
        if np.all(np.isnan(x)) or np.all(np.isnan(y)):
            continue
        r = _corr_or_skip(x, y, (g, outcome_method), used, skipped)
        if r is not None:
            rs.append(r)
    if not rs:
        raise DegenerateStatistic("no group has a usable score/outcome series")
    return CorrelationDetail(float(np.mean(rs)), used, skipped)


@dataclass
class PrimingSummary:
    target: float
    aligned: Optional[float]
    opposed: Optional[float]
    # (role group, scored group, model) -> relative change
    cells: dict = field(default_factory=dict)


def role_condition(group: str) -> str:
    return f"{ROLE_PREFIX}{group}"


def summarize_changes(cells: Mapping[tuple, float], pairs: CulturePairSets) -> PrimingSummary:
    """Bucket relative changes keyed by ``(role group, scored group, ...)``.

    ``target`` averages cells where the primed and scored group coincide;
    ``aligned`` and ``opposed`` average cells whose (primed, scored) pair is
    similar or distinct, respectively.
    """
    buckets = {"target": [], "similar": [], "distinct": []}
    for key, delta in cells.items():
        role, g = key[0], key[1]
        kind = "target" if role == g else pairs.relation(role, g)
        if kind is not None:
            buckets[kind].append(delta)
    if not buckets["target"]:
        raise DegenerateStatistic("no cell where the primed and scored group coincide")
    mean = lambda v: float(np.mean(v)) if v else None
    return PrimingSummary(mean(buckets["target"]), mean(buckets["similar"]),
                          mean(buckets["distinct"]), dict(cells))


def priming_summary(cube: ScoreCube, method: str, pairs: CulturePairSets,
                    control: str = CONTROL) -> PrimingSummary:
    """Relative score changes of ``method`` under role priming, bucketed by relation."""
    cells = {}
    for (m, g, model, cond), steered in cube.scores.items():
        if m != method or not cond.startswith(ROLE_PREFIX):
            continue
        base = cube.get(method, g, model, control)
        if base is not None:
            cells[(cond[len(ROLE_PREFIX):], g, model)] = priming_delta(base, steered)
    if not cells:
        raise DegenerateStatistic(f"no primed cell for method {method!r} has a control score")
    return summarize_changes(cells, pairs)


@dataclass
class ReliabilitySummary:
    alpha: float
    mean_cv: float
    n_subjects: int
    n_repeats: int


def reliability(cube: ScoreCube, method: str) -> ReliabilitySummary:
    """Consistency of repeated measurements stored under ``rep:*`` conditions.

    Every (group, model) cell measured in all repetitions is one subject and
    every repetition is one item.
    """
    reps = [c for c in cube.conditions if c.startswith(REPEAT_PREFIX)]
    if len(reps) < 2:
        raise DegenerateStatistic("reliability needs at least two repetitions")
    cells = sorted({(g, m) for (meth, g, m, c) in cube.scores if meth == method and c in reps})
    rows = []
    for g, m in cells:
        row = [cube.get(method, g, m, c) for c in reps]
        if all(v is not None for v in row):
            rows.append(row)
    if len(rows) < 2:
        raise DegenerateStatistic("fewer than 2 cells were measured in every repetition")
    X = np.asarray(rows)
    return ReliabilitySummary(cronbach_alpha(X),
                              float(np.mean([coefficient_of_variation(r) for r in X])),
                              X.shape[0], X.shape[1])


# -- combined report -----------------------------------------------------

def _attempt(fn):
    try:
        return fn(), None
    except (DegenerateStatistic, ValueError) as exc:
        return None, str(exc)


def validity_report(cube: ScoreCube, pairs: CulturePairSets = EAST_ASIA_US, fisher: bool = False,
                    outcome_method: Optional[str] = None) -> dict:
    """Every validity statistic for every method; failures are reported per cell."""
    methods = [m for m in cube.methods if m != outcome_method]
    rows = []
    for m in methods:
        row = {"method": m}
        prim, err = _attempt(lambda: priming_summary(cube, m, pairs))
        row["priming_target"] = prim.target if prim else None
        row["priming_aligned"] = prim.aligned if prim else None
        row["priming_opposed"] = prim.opposed if prim else None
        row["priming_error"] = err
        con, err = _attempt(lambda: convergent_validity_detail(cube, m, fisher))
        row["convergent"] = con.value if con else None
        row["convergent_error"] = err
        row["convergent_skipped"] = [list(s) for s in con.skipped] if con else []
        dis, err = _attempt(lambda: discriminant_validity_detail(cube, m, pairs, fisher))
        row["discriminant"] = dis.value if dis else None
        row["discriminant_error"] = err
        rel, err = _attempt(lambda: reliability(cube, m))
        row["cronbach_alpha"] = rel.alpha if rel else None
        row["mean_cv"] = rel.mean_cv if rel else None
        row["reliability_error"] = err
        if outcome_method is not None:
            pred, err = _attempt(lambda: predictive_validity(cube, m, outcome_method))
            row["predictive"] = pred.value if pred else None
            row["predictive_error"] = err
        rows.append(row)
    return {"pairs": pairs.to_dict(), "fisher_z": fisher, "outcome_method": outcome_method,
            "methods": rows}
