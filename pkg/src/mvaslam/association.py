"""Probabilistic data association between map features and range measurements.

One anchor at a time: K features (each with an existence probability and a
particle-averaged likelihood per measurement) compete for M measurements.
A measurement may instead be clutter or a new feature; a feature may be
missed.  Joint events are one-to-one assignments.

Two solvers share a single problem description: exact enumeration over all
valid assignments (small instances), and iterative sum-product message
passing on the bipartite assignment graph (any size, exact on trees only).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SizeLimit

ENUM_MAX_FEATURES = 6
ENUM_MAX_MEASUREMENTS = 8

# Instances at or below this feature*measurement product are cheap to
# enumerate exactly, so the BP entry point dispatches them to enumeration.
BP_EXACT_CELLS = 24

_TINY = 1e-300


@dataclass(frozen=True)
class AssociationProblem:
    """Inputs for one anchor's association step.

    Attributes:
        existence: (K,) feature existence probabilities in [0, 1].
        likelihood: (K, M) particle-averaged likelihood of measurement m
            under feature k (nonnegative, not normalized).
        p_detect: detection probability shared by all features.
        clutter_intensity: (M,) Poisson clutter intensity at each measurement.
        birth_intensity: (M,) new-feature intensity at each measurement.
    """

    existence: np.ndarray
    likelihood: np.ndarray
    p_detect: float
    clutter_intensity: np.ndarray
    birth_intensity: np.ndarray

    def __post_init__(self):
        ex = np.atleast_1d(np.asarray(self.existence, dtype=float))
        lik = np.asarray(self.likelihood, dtype=float)
        if lik.ndim != 2:
            raise ValueError("likelihood must be a (K, M) matrix")
        k, m = lik.shape
        if ex.shape != (k,):
            raise ValueError("existence must have one entry per feature")
        cl = np.broadcast_to(np.asarray(self.clutter_intensity, dtype=float), (m,)).copy()
        bi = np.broadcast_to(np.asarray(self.birth_intensity, dtype=float), (m,)).copy()
        for name, a in (("existence", ex), ("likelihood", lik),
                        ("clutter_intensity", cl), ("birth_intensity", bi)):
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} must be finite")
            if np.any(a < 0):
                raise ValueError(f"{name} must be nonnegative")
        if np.any(ex > 1):
            raise ValueError("existence must be <= 1")
        if not (0.0 <= self.p_detect <= 1.0):
            raise ValueError("p_detect must lie in [0, 1]")
        object.__setattr__(self, "existence", ex)
        object.__setattr__(self, "likelihood", lik)
        object.__setattr__(self, "p_detect", float(self.p_detect))
        object.__setattr__(self, "clutter_intensity", cl)
        object.__setattr__(self, "birth_intensity", bi)

    @property
    def shape(self) -> tuple[int, int]:
        return self.likelihood.shape


@dataclass(frozen=True)
class AssociationMarginals:
    """Posterior association marginals for one anchor.

    Attributes:
        feature: (K, M+1) rows over {missed, measurement 1, ..., M};
            each row sums to 1.
        unassigned: (M,) probability the measurement is explained by
            clutter or a new feature.
        converged: whether iterative message passing met its tolerance
            (always True for exact enumeration).
        n_iters: iterations used (0 for exact enumeration).
    """

    feature: np.ndarray
    unassigned: np.ndarray
    converged: bool = True
    n_iters: int = 0


def _event_terms(problem: AssociationProblem):
    ex = problem.existence
    assigned = ex[:, None] * problem.p_detect * problem.likelihood
    missed = 1.0 - ex * problem.p_detect
    kappa = problem.clutter_intensity + problem.birth_intensity
    return assigned, missed, kappa


def marginals_enumerate(problem: AssociationProblem) -> AssociationMarginals:
    """Exact association marginals by enumerating all valid assignments.

    Event weight: product of existence * p_detect * likelihood over assigned
    pairs, (1 - existence * p_detect) over missed features, and
    (clutter + birth intensity) over unassigned measurements.

    Raises:
        SizeLimit: if K > 6 or M > 8.
    """
    k_n, m_n = problem.shape
    if k_n > ENUM_MAX_FEATURES or m_n > ENUM_MAX_MEASUREMENTS:
        raise SizeLimit(f"enumeration capped at K<={ENUM_MAX_FEATURES}, "
                        f"M<={ENUM_MAX_MEASUREMENTS}, got K={k_n}, M={m_n}")
    assigned, missed, kappa = _event_terms(problem)

    # Product of kappa over the measurements NOT in each bitmask.
    unused_prod = np.ones(1 << m_n)
    for mask in range(1 << m_n):
        prod = 1.0
        for m in range(m_n):
            if not mask & (1 << m):
                prod *= kappa[m]
        unused_prod[mask] = prod

    total = 0.0
    feat_sums = np.zeros((k_n, m_n + 1))
    unassigned_sums = np.zeros(m_n)
    assign = np.zeros(k_n, dtype=int)

    def recurse(k: int, used: int, weight: float):
        nonlocal total
        if k == k_n:
            w = weight * unused_prod[used]
            if w == 0.0:
                return
            total += w
            for kk in range(k_n):
                feat_sums[kk, assign[kk]] += w
            for m in range(m_n):
                if not used & (1 << m):
                    unassigned_sums[m] += w
            return
        assign[k] = 0
        recurse(k + 1, used, weight * missed[k])
        for m in range(m_n):
            if not used & (1 << m):
                assign[k] = m + 1
                recurse(k + 1, used | (1 << m), weight * assigned[k, m])
        assign[k] = 0

    recurse(0, 0, 1.0)
    if total <= 0.0:
        raise ValueError("association problem has zero total event weight")
    return AssociationMarginals(feature=feat_sums / total,
                                unassigned=unassigned_sums / total)


def _marginals_iterative(problem: AssociationProblem,
                         max_iters: int, tol: float) -> AssociationMarginals:
    k_n, m_n = problem.shape
    assigned, missed, kappa = _event_terms(problem)
    if m_n == 0:
        feature = np.zeros((k_n, 1))
        feature[:, 0] = 1.0
        return AssociationMarginals(feature=feature, unassigned=np.zeros(0))
    gamma = assigned / np.maximum(kappa, _TINY)[None, :]
    gamma0 = missed

    nu = np.ones((k_n, m_n))
    mu = np.zeros((k_n, m_n))
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        gn = gamma * nu
        s = gamma0[:, None] + gn.sum(axis=1, keepdims=True)
        mu = gamma / np.maximum(s - gn, _TINY)
        t = 1.0 + mu.sum(axis=0, keepdims=True)
        nu_new = 1.0 / np.maximum(t - mu, _TINY)
        delta = float(np.max(np.abs(nu_new - nu))) if nu.size else 0.0
        nu = nu_new
        if delta < tol:
            converged = True
            break

    unnorm = np.concatenate([gamma0[:, None], gamma * nu], axis=1)
    feature = unnorm / np.maximum(unnorm.sum(axis=1, keepdims=True), _TINY)
    unassigned = 1.0 / (1.0 + mu.sum(axis=0))
    return AssociationMarginals(feature=feature,
                                unassigned=np.clip(unassigned, 0.0, 1.0),
                                converged=converged, n_iters=it)


def marginals_bp(problem: AssociationProblem, max_iters: int = 100,
                 tol: float = 1e-6, force_iterative: bool = False) -> AssociationMarginals:
    """Association marginals by sum-product message passing.

    Small instances (K <= 6, M <= 8, K*M <= 24) are dispatched to exact
    enumeration unless ``force_iterative`` is set; the iterative solver is
    exact on assignment graphs without loops (K == 1 or M <= 1) and an
    established approximation otherwise.
    """
    k_n, m_n = problem.shape
    if not force_iterative and (k_n <= ENUM_MAX_FEATURES
                                and m_n <= ENUM_MAX_MEASUREMENTS
                                and k_n * m_n <= BP_EXACT_CELLS):
        return marginals_enumerate(problem)
    return _marginals_iterative(problem, max_iters=max_iters, tol=tol)


def best_measurement(marginals: AssociationMarginals, k: int) -> int:
    """Most probable association for feature ``k``: 0 for missed, else the
    1-based measurement index.

    Missed wins only when its probability strictly exceeds every
    measurement's; ties among measurements go to the lowest index.
    """
    row = marginals.feature[k]
    if row.shape[0] <= 1:
        return 0
    m_best = int(np.argmax(row[1:]))
    if row[0] > row[1 + m_best]:
        return 0
    return m_best + 1
