"""Debiased unbalanced optimal transport between code histograms."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .core import cosine_matrix


class KernelDegenerate(FloatingPointError):
    pass


class InfeasiblePlan(ValueError):
    pass


@dataclass(frozen=True)
class MetricConfig:
    epsilon: float = 0.01
    gamma: float = 0.5
    eps2: float = 1e-8
    sinkhorn_max_iters: int = 1000
    eps0: float = 1e-12
    eps1: float = 1e-6
    # "alternating": v is updated from the fresh u; "simultaneous": both from
    # the previous iterate (two-cycles near the balanced limit)
    scheme: str = "alternating"

    def __post_init__(self):
        for name, value in asdict(self).items():
            if name != "scheme" and not value > 0:
                raise ValueError(f"{name} must be positive")
        if self.scheme not in ("alternating", "simultaneous"):
            raise ValueError(f"unknown scaling scheme {self.scheme!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CostMatrix:
    D: np.ndarray
    rho_kind: str = "cosine_distance"

    @property
    def K(self) -> int:
        return self.D.shape[0]


@dataclass
class TransportPlan:
    pi: np.ndarray
    converged: bool
    iters_used: int
    u: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    log_domain: bool = False


@dataclass
class AlignmentResult:
    d_uot: float
    r: float
    r_display: float
    plan: Optional[TransportPlan] = None


def _mass(x) -> np.ndarray:
    return np.asarray(getattr(x, "mass", x), dtype=float)


def _cost(D) -> np.ndarray:
    return np.asarray(getattr(D, "D", D), dtype=float)


def cost_matrix(centroids, per_doc_dists, cfg: MetricConfig = MetricConfig()) -> CostMatrix:
    """Semantic distance between codes, discounted by how often they co-occur.

    ``D_ij = (1 - cos(c_i, c_j)) * (1 - E[min(a_i, a_j)] / (E[max(a_i, a_j)] + eps2))``
    with expectations over the reference documents.
    """
    C = np.asarray(centroids, dtype=float)
    A = np.atleast_2d(np.asarray(per_doc_dists, dtype=float))
    K = C.shape[0]
    if A.shape[1] != K:
        raise ValueError(f"document distributions have {A.shape[1]} codes, codebook has {K}")
    if A.shape[0] == 0:
        raise ValueError("need at least one reference document")
    rho = np.clip(1.0 - cosine_matrix(C, C), 0.0, 2.0)
    e_min = np.zeros((K, K))
    e_max = np.zeros((K, K))
    for a in A:
        e_min += np.minimum.outer(a, a)
        e_max += np.maximum.outer(a, a)
    e_min /= A.shape[0]
    e_max /= A.shape[0]
    w = 1.0 - e_min / (e_max + cfg.eps2)
    D = rho * w
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    return CostMatrix(D)


def _check_inputs(a, b, D):
    if a.ndim != 1 or b.ndim != 1 or D.shape != (a.size, b.size):
        raise ValueError(f"shape mismatch: a{a.shape}, b{b.shape}, D{D.shape}")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("histograms must be non-negative")
    if a.sum() <= 0 or b.sum() <= 0:
        raise ValueError("histograms must carry mass")


def unbalanced_sinkhorn(a, b, D, cfg: MetricConfig = MetricConfig()) -> TransportPlan:
    """Scaling iterations for the KL-relaxed entropic transport problem.

    Starts from ``u = v = 1`` and stops once the relative sup-norm change of
    both scalings is at most ``eps1``.  Falls back to log-domain updates when
    ``K @ v`` underflows.
    """
    a, b, D = _mass(a), _mass(b), _cost(D)
    _check_inputs(a, b, D)
    lam = cfg.gamma / (cfg.gamma + cfg.epsilon)
    kernel = np.exp(-D / cfg.epsilon)
    u = np.ones_like(a)
    v = np.ones_like(b)
    converged = False
    t = 0
    alternating = cfg.scheme == "alternating"
    with np.errstate(divide="ignore", over="ignore", invalid="ignore", under="ignore"):
        for t in range(1, cfg.sinkhorn_max_iters + 1):
            # zero-mass bins give 0 / Kv = 0; an underflowed Kv gives inf or nan
            u_new = (a / (kernel @ v)) ** lam
            v_new = (b / (kernel.T @ (u_new if alternating else u))) ** lam
            if not np.isfinite(u_new.sum() + v_new.sum()):
                return _sinkhorn_log(a, b, D, cfg)
            err = max(np.abs(u_new - u).max() / (np.abs(u).max() + cfg.eps0),
                      np.abs(v_new - v).max() / (np.abs(v).max() + cfg.eps0))
            u, v = u_new, v_new
            if err <= cfg.eps1:
                converged = True
                break
    pi = u[:, None] * kernel * v[None, :]
    if not np.all(np.isfinite(pi)):
        return _sinkhorn_log(a, b, D, cfg)
    return TransportPlan(pi, converged, t, u, v)


def _sinkhorn_log(a, b, D, cfg: MetricConfig) -> TransportPlan:
    lam = cfg.gamma / (cfg.gamma + cfg.epsilon)
    logK = -D / cfg.epsilon
    with np.errstate(divide="ignore"):
        loga, logb = np.log(a), np.log(b)
    f = np.where(a > 0, 0.0, -np.inf)
    g = np.where(b > 0, 0.0, -np.inf)
    converged = False
    t = 0
    for t in range(1, cfg.sinkhorn_max_iters + 1):
        f_new = lam * (loga - logsumexp(logK + g[None, :], axis=1))
        f_new = np.where(a > 0, f_new, -np.inf)
        f_src = f_new if cfg.scheme == "alternating" else f
        g_new = lam * (logb - logsumexp(logK.T + f_src[None, :], axis=1))
        g_new = np.where(b > 0, g_new, -np.inf)
        if np.any(np.isnan(f_new)) or np.any(np.isnan(g_new)):
            raise KernelDegenerate("kernel degenerate; increase epsilon")
        # scalings may overflow here, so the relative change is measured on
        # the log scale, where |du|/u ~ |d log u|
        err = max(np.abs(f_new[a > 0] - f[a > 0]).max(), np.abs(g_new[b > 0] - g[b > 0]).max())
        f, g = f_new, g_new
        if err <= cfg.eps1:
            converged = True
            break
    with np.errstate(over="ignore"):
        pi = np.exp(f[:, None] + logK + g[None, :])
        u, v = np.exp(f), np.exp(g)
    if not np.all(np.isfinite(pi)):
        raise KernelDegenerate("kernel degenerate; increase epsilon")
    return TransportPlan(pi, converged, t, u, v, log_domain=True)


def _xlogx(x):
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos])
    return out


def kl_unbalanced(p, q) -> float:
    """Generalised KL: ``sum p log(p/q) - p + q`` with 0 log 0 = 0."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if np.any((p > 0) & (q <= 0)):
        raise InfeasiblePlan("infeasible plan: mass placed against a zero marginal")
    pos = p > 0
    return float((p[pos] * np.log(p[pos] / q[pos])).sum() - p.sum() + q.sum())


def uot_objective(pi, a, b, D, cfg: MetricConfig = MetricConfig()) -> float:
    pi, a, b, D = np.asarray(pi, dtype=float), _mass(a), _mass(b), _cost(D)
    if pi.shape != D.shape or pi.shape != (a.size, b.size):
        raise ValueError("shape mismatch between plan, marginals and cost")
    if np.any(pi < 0) or not np.all(np.isfinite(pi)):
        raise ValueError("transport plan must be finite and non-negative")
    transport = float((D * pi).sum())
    entropic = cfg.epsilon * float((_xlogx(pi) - pi).sum())
    return transport + entropic + cfg.gamma * (kl_unbalanced(pi.sum(axis=1), a)
                                               + kl_unbalanced(pi.sum(axis=0), b))


def uot_cost(a, b, D, cfg: MetricConfig = MetricConfig()) -> tuple[float, TransportPlan]:
    plan = unbalanced_sinkhorn(a, b, D, cfg)
    return uot_objective(plan.pi, a, b, D, cfg), plan


def debiased_uot(a, b, D, cfg: MetricConfig = MetricConfig(), parallel: bool = False,
                 return_plan: bool = False):
    """``UOT(a, b) - UOT(a, a)/2 - UOT(b, b)/2`` with one shared cost matrix."""
    pairs = [(a, b), (a, a), (b, b)]
    if parallel:
        with ThreadPoolExecutor(max_workers=3) as pool:
            results = list(pool.map(lambda p: uot_cost(p[0], p[1], D, cfg), pairs))
    else:
        results = [uot_cost(x, y, D, cfg) for x, y in pairs]
    (ab, plan), (aa, _), (bb, _) = results
    value = ab - 0.5 * aa - 0.5 * bb
    return (value, plan) if return_plan else value


def alignment_score(d_uot: float, plan: Optional[TransportPlan] = None) -> AlignmentResult:
    if not np.isfinite(d_uot):
        raise ValueError("divergence must be finite")
    r = (0.1 - d_uot) * 10.0
    return AlignmentResult(d_uot=float(d_uot), r=float(r), r_display=float(100.0 * r), plan=plan)


def compare(a, b, D, cfg: MetricConfig = MetricConfig()) -> AlignmentResult:
    d, plan = debiased_uot(a, b, D, cfg, return_plan=True)
    return alignment_score(d, plan)


def report_record(group_a: str, group_b: str, result: AlignmentResult, cfg: MetricConfig) -> dict:
    plan = result.plan
    return {
        "group_a": group_a,
        "group_b": group_b,
        "K": int(plan.pi.shape[0]) if plan is not None else None,
        "epsilon": cfg.epsilon,
        "gamma": cfg.gamma,
        "d_uot": result.d_uot,
        "r": result.r,
        "r_display": result.r_display,
        "converged": bool(plan.converged) if plan is not None else None,
        "iters_used": int(plan.iters_used) if plan is not None else None,
    }
