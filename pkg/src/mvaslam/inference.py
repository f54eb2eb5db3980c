"""Particle-based inference primitives for MVA SLAM.

State per time step: an agent belief (weighted 4-D particles, weights sum
to 1) and a list of map-feature beliefs.  Each feature belief is a weighted
particle set over MVA positions whose TOTAL weight is the feature's
existence probability; particles are kept equally weighted between updates,
so existence = n_particles * per-particle weight.

The measurement update follows sum-product association rules: per anchor,
particle-averaged likelihoods feed an association problem, the resulting
marginals are converted back to extrinsic per-measurement coefficients, and
those coefficients reweight feature and agent particles.  The same algebra
is used by the 1-D consistency tests, so it is kept free of any planar
geometry here; callers supply per-pair likelihood matrices.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .association import (AssociationMarginals, AssociationProblem,
                          best_measurement, marginals_bp)
from .errors import ConfigError
from .geometry import MVA_NORM_EPS, va_from_mva

_TINY = 1e-300

SAMPLER_MODES = ("bootstrap", "robust")


# ---------------------------------------------------------------------------
# hyperparameters

@dataclass(frozen=True)
class Hyperparams:
    """Filter hyperparameters (algorithm side; the measurement model lives in
    the scenario config).

    Attributes:
        n_particles: particles per belief (agent and each feature).
        i_prime: per-component sample count for the robust mixture; None
            derives the minimal count whose pooled total reaches n_particles.
        p_survival: per-step feature survival probability.
        p_detect: detection probability assumed by the filter.
        p_declare: existence threshold above which a feature is declared.
        p_prune: existence threshold below which a feature is dropped.
        mu_birth: mean number of new features per anchor per step.
        prior_region: (xmin, xmax, ymin, ymax) uniform prior for new MVAs.
        n1, n2: the robust resampling delay is uniform on {n1, ..., n2}.
        n_max: robust resampling is disabled once a feature is older than
            this many steps.
        sigma_reg: per-step regularization jitter std on feature particles.
        sampler_mode: "bootstrap" or "robust".
        resample_threshold: agent resampling triggers when the effective
            sample size falls below this fraction of n_particles.
        message_samples: subsample size used when one belief's update
            averages over the other belief (feature side of the agent
            message; half as many for the agent side of the feature
            message).  Shared subsamples keep the factors smooth instead of
            injecting independent per-particle noise.
    """

    n_particles: int = 5000
    i_prime: int | None = None
    p_survival: float = 0.999
    p_detect: float = 0.95
    p_declare: float = 0.5
    p_prune: float = 1e-3
    mu_birth: float = 0.01
    prior_region: tuple[float, float, float, float] = (-15.0, 15.0, -15.0, 15.0)
    n1: int = 5
    n2: int = 10
    n_max: int = 120
    sigma_reg: float = 1e-5
    sampler_mode: str = "bootstrap"
    resample_threshold: float = 0.5
    message_samples: int = 16

    def __post_init__(self):
        if self.n_particles < 1:
            raise ConfigError("n_particles must be >= 1")
        if self.i_prime is not None and self.i_prime < 1:
            raise ConfigError("i_prime must be >= 1 or None")
        for name in ("p_survival", "p_detect", "p_declare", "p_prune"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.mu_birth < 0 or self.sigma_reg < 0:
            raise ConfigError("mu_birth and sigma_reg must be >= 0")
        region = tuple(float(v) for v in self.prior_region)
        if len(region) != 4 or region[0] >= region[1] or region[2] >= region[3]:
            raise ConfigError("prior_region must be (xmin, xmax, ymin, ymax)")
        if not (1 <= self.n1 <= self.n2 <= self.n_max):
            raise ConfigError("need 1 <= n1 <= n2 <= n_max")
        if self.sampler_mode not in SAMPLER_MODES:
            raise ConfigError(f"sampler_mode must be one of {SAMPLER_MODES}")
        if not (0.0 < self.resample_threshold <= 1.0):
            raise ConfigError("resample_threshold must lie in (0, 1]")
        if self.message_samples < 2:
            raise ConfigError("message_samples must be >= 2")
        object.__setattr__(self, "prior_region", region)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "n_particles": self.n_particles,
            "i_prime": self.i_prime,
            "p_survival": self.p_survival,
            "p_detect": self.p_detect,
            "p_declare": self.p_declare,
            "p_prune": self.p_prune,
            "mu_birth": self.mu_birth,
            "prior_region": list(self.prior_region),
            "n1": self.n1,
            "n2": self.n2,
            "n_max": self.n_max,
            "sigma_reg": self.sigma_reg,
            "sampler_mode": self.sampler_mode,
            "resample_threshold": self.resample_threshold,
            "message_samples": self.message_samples,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        d = dict(d)
        version = d.pop("schema_version", 1)
        if version != 1:
            raise ConfigError(f"unsupported hyperparams schema_version {version}")
        d.pop("notes", None)
        try:
            return cls(**d)
        except ConfigError:
            raise
        except TypeError as e:
            raise ConfigError(f"bad hyperparams: {e}") from e

    @classmethod
    def from_json(cls, path) -> "Hyperparams":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")


# ---------------------------------------------------------------------------
# beliefs

@dataclass
class AgentBelief:
    """Weighted particles over the agent state [x, y, vx, vy]; weights sum
    to 1."""

    states: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, :2]


@dataclass
class MvaBelief:
    """Weighted particles over one candidate surface's MVA position.

    The weights sum to the feature's existence probability.  best_ranges
    records, per anchor index, the range of the measurement most probably
    associated with this feature at the latest update; resid_ema tracks a
    smoothed range residual of those claims against the point estimates.
    """

    particles: np.ndarray
    weights: np.ndarray
    label: int
    birth_time: int
    next_robust_trigger: int | None = None
    best_ranges: dict[int, float] = field(default_factory=dict)
    resid_ema: float | None = None
    steer_hold: int = 0

    @property
    def existence(self) -> float:
        return float(self.weights.sum())

    @property
    def n(self) -> int:
        return len(self.weights)


def estimate_agent(agent: AgentBelief) -> np.ndarray:
    """MMSE agent state: weighted particle mean."""
    return agent.weights @ agent.states


def estimate_mva(feature: MvaBelief) -> np.ndarray:
    """MMSE MVA position: weighted particle mean, normalized by existence."""
    s = feature.weights.sum()
    if s <= 0:
        return feature.particles.mean(axis=0)
    return (feature.weights @ feature.particles) / s


# ---------------------------------------------------------------------------
# generic particle ops

def gaussian_pdf(x, mean, sigma: float) -> np.ndarray:
    """Normal density, broadcasting over its arguments."""
    d = (np.asarray(x, dtype=float) - mean) / sigma
    return np.exp(-0.5 * d * d) / (sigma * math.sqrt(2.0 * math.pi))


def effective_sample_size(weights) -> float:
    """1 / sum(w^2) for normalized weights; 0 for an all-zero vector."""
    w = np.asarray(weights, dtype=float)
    s = w.sum()
    if s <= 0:
        return 0.0
    w = w / s
    return float(1.0 / np.sum(w * w))


def systematic_resample(weights, n_out: int, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling: n_out indices drawn with a single uniform
    offset.  ``weights`` need not be normalized but must have positive sum."""
    w = np.asarray(weights, dtype=float)
    s = w.sum()
    if not np.isfinite(s) or s <= 0:
        raise ValueError("systematic_resample needs a positive weight sum")
    positions = (np.arange(n_out) + rng.random()) / n_out
    cum = np.cumsum(w / s)
    cum[-1] = 1.0
    return np.searchsorted(cum, positions)


# ---------------------------------------------------------------------------
# prediction

def predict_agent(agent: AgentBelief, dt: float, sigma_drive: float,
                  rng: np.random.Generator) -> AgentBelief:
    """Constant-velocity prediction with white acceleration noise."""
    drive = rng.normal(0.0, sigma_drive, size=(agent.n, 2))
    states = agent.states.copy()
    states[:, :2] += states[:, 2:] * dt + 0.5 * drive * dt * dt
    states[:, 2:] += drive * dt
    return AgentBelief(states=states, weights=agent.weights)


def predict_mva(feature: MvaBelief, p_survival: float, sigma_reg: float,
                rng: np.random.Generator) -> MvaBelief:
    """Static feature prediction: survival-scaled existence plus
    regularization jitter to keep the particle set diverse."""
    particles = feature.particles + rng.normal(0.0, sigma_reg,
                                               size=feature.particles.shape)
    return replace(feature, particles=particles,
                   weights=feature.weights * p_survival)


# ---------------------------------------------------------------------------
# measurement update algebra (dimension-agnostic)

def association_coefficients(marg_row: np.ndarray, existence: float,
                             p_detect: float, likelihood_row: np.ndarray):
    """Extrinsic claim coefficients for one feature's particle update.

    Inverts the association marginals back to per-measurement extrinsic
    factors: the particle reweight is
    ``(1 - p_detect) + p_detect * sum_m coeffs[m] * f(z_m | particle)``.
    When existence * p_detect == 1 the missed branch has zero posterior mass
    and the update degenerates to the normalized association mixture; that
    case returns ``pinned=True`` with mixture coefficients instead.

    Args:
        marg_row: (M+1,) association marginals, entry 0 = missed.
        existence: prior existence probability of the feature.
        p_detect: detection probability.
        likelihood_row: (M,) particle-averaged likelihoods used in the
            association problem.

    Returns:
        (coeffs, pinned)
    """
    gate = existence * p_detect
    pm = marg_row[1:]
    if gate < 1.0:
        denom = gate * likelihood_row
        p0 = max(marg_row[0], _TINY)
        c = np.where(denom > 0, pm / p0 * (1.0 - gate) / np.maximum(denom, _TINY), 0.0)
        return c, False
    mix = np.where(likelihood_row > 0, pm / np.maximum(likelihood_row, _TINY), 0.0)
    return mix, True


def update_factor(coeffs: np.ndarray, pinned: bool, g: np.ndarray,
                  p_detect: float) -> np.ndarray:
    """Per-particle reweight factor given claim coefficients and an (M, I)
    likelihood matrix."""
    if pinned:
        return coeffs @ g
    return (1.0 - p_detect) + p_detect * (coeffs @ g)


def feature_update_terms(g: np.ndarray, weights: np.ndarray, existence: float,
                         p_detect: float, marg_row: np.ndarray,
                         likelihood_row: np.ndarray):
    """Per-particle update terms for one feature given association marginals.

    Args:
        g: (M, I) per-measurement likelihoods at each receiving particle.
        weights: (I,) weights of the receiving belief (normalized).
        existence: prior existence probability of the feature.
        p_detect: detection probability.
        marg_row: (M+1,) association marginals, entry 0 = missed.
        likelihood_row: (M,) particle-averaged likelihoods from the
            association problem.

    Returns:
        (omega, existence_new, phi): unnormalized posterior particle
        weights, posterior existence, and the (I,) factor for the other
        belief's reweighting.
    """
    coeffs, pinned = association_coefficients(marg_row, existence, p_detect,
                                              likelihood_row)
    u = update_factor(coeffs, pinned, g, p_detect)
    if pinned:
        return weights * u, 1.0, u
    omega = existence * weights * u
    s1 = float(omega.sum())
    s0 = 1.0 - existence
    existence_new = s1 / (s1 + s0) if s1 + s0 > 0 else 0.0
    phi = (1.0 - existence) + existence * u
    return omega, existence_new, phi


# ---------------------------------------------------------------------------
# joint per-step measurement update

@dataclass
class AnchorReport:
    """Association outputs for one anchor within a step update."""
    marginals: AssociationMarginals | None
    best: list[int]
    unassigned: np.ndarray
    row_max: np.ndarray


@dataclass
class StepUpdateResult:
    agent: AgentBelief
    features: list
    reports: list[AnchorReport]
    all_zero_weights: bool = False
    agent_resampled: bool = False


def _range_matrix(points: np.ndarray, sources: np.ndarray) -> np.ndarray:
    """(N, S) Euclidean distances between N points and S source points."""
    dx = points[:, 0][:, None] - sources[:, 0][None, :]
    dy = points[:, 1][:, None] - sources[:, 1][None, :]
    return np.sqrt(dx * dx + dy * dy)


def _safe_va(particles: np.ndarray, anchor: np.ndarray):
    """Virtual anchors for a particle stack plus a validity mask.

    A particle at the origin encodes no surface, so instead of raising it is
    flagged invalid (its VA row is left at zero) and the caller assigns it
    zero likelihood.  Unresampled young clouds legitimately carry a few such
    particles.
    """
    p = np.asarray(particles, dtype=float)
    ok = np.sum(p * p, axis=-1) > MVA_NORM_EPS * MVA_NORM_EPS
    va = np.zeros_like(p)
    if ok.any():
        va[ok] = va_from_mva(p[ok], anchor)
    return va, ok


def _adaptive_subsample(pts: np.ndarray, sigma: float) -> np.ndarray:
    """Trim a subsample whose spread is small relative to ``sigma``.

    The range likelihood averaged over near-identical source points is the
    likelihood at one of them, so tight beliefs need only a couple of
    message samples while broad ones keep the full set.  Trimming strides
    across the array because resampled particle order groups siblings
    together; a contiguous slice could cover a single mode.
    """
    spread = float(np.max(pts.max(axis=0) - pts.min(axis=0)))
    if spread < 0.25 * sigma:
        return pts[:2]
    if spread < 2.0 * sigma:
        return pts[:: max(1, len(pts) // 4)][:4]
    return pts


def _gated_mean_pdf(z: np.ndarray, r: np.ndarray, sigma: float,
                    gate_sigmas: float = 8.0) -> np.ndarray:
    """(M, N) matrix of mean Gaussian likelihoods.

    ``r`` is an (N, S) matrix of candidate ranges; entry (m, n) is the mean
    over s of the range density at z[m].  Measurements farther than
    ``gate_sigmas`` standard deviations from every candidate range are left
    at exactly zero, which both saves the exp evaluations and makes the
    association treat them as impossible for this belief.
    """
    m_n = len(z)
    n, s = r.shape
    out = np.zeros((m_n, n))
    lo = float(r.min()) - gate_sigmas * sigma
    hi = float(r.max()) + gate_sigmas * sigma
    live = np.nonzero((z >= lo) & (z <= hi))[0]
    if len(live):
        d = z[live, None, None] - r[None, :, :]
        d *= d
        d *= -0.5 / (sigma * sigma)
        np.exp(d, out=d)
        out[live] = d.mean(axis=2)
        out[live] /= sigma * math.sqrt(2.0 * math.pi)
    return out


def step_update(agent: AgentBelief, features: list, batches, anchors,
                *, sigma_range: float, p_detect: float,
                clutter_density: float, birth_density: float,
                include_los: bool, rng: np.random.Generator,
                resample_threshold: float = 0.5,
                message_samples: int = 16,
                time_step: int | None = None,
                steering_age: int = 15,
                released: frozenset = frozenset()) -> StepUpdateResult:
    """One time step of the measurement update, all anchors jointly.

    Each anchor's association problem is solved against the shared predicted
    beliefs (parallel extrinsics), and the per-anchor reweighting factors
    multiply into a single joint update per belief.  Processing anchors in
    parallel rather than chaining them matters: a chained scheme lets a
    feature sharpen on one anchor's measurement and then certify itself
    against the next anchor inside the same step, so any accidental crossing
    of two range curves hardens into a confident wrong feature.  Here
    cross-anchor agreement has to be present in the prior cloud.

    Sum-product structure: the message into each belief averages the range
    likelihood over a subsample of the other belief, so the reweighting
    factors are smooth functions of the receiving particle rather than an
    independent lottery per particle.  The association likelihoods and the
    feature-direction messages average over the full feature cloud against a
    small agent subsample (the agent belief is tight, so few samples
    suffice; the feature cloud is the broad, possibly multimodal side, so
    its average must not be subsampled or association decisions get noisy).
    The agent-direction message averages over ``message_samples`` feature
    particles.  A feature steers the agent only once it has earned trust:
    its cloud is concentrated (a cloud spread over many noise lengths has a
    nearly constant agent factor, and a subsampled version of a constant
    only injects noise), it has been alive for ``steering_age`` steps, and
    its recent range residuals are small.  The age and residual conditions
    exist because a freshly certified feature can sit on an accidental
    crossing of range curves from different anchors; such a ghost is
    measurement-consistent right where it was born and only betrays itself
    as the geometry changes, so letting it steer immediately would drag the
    agent gauge before the evidence against it can accumulate.  The drive
    noise is small enough that the agent coasts accurately through the
    probation window.  Feature particle sets keep their posterior weights
    and are resampled only on weight degeneracy; likewise the agent is
    resampled only when its effective sample size drops below
    ``resample_threshold * n``.

    Features whose index is in ``released`` sit this step's association
    out: they claim nothing and take the missed-detection existence hit, so
    their measurements show up as unassigned and rival claimants plus fresh
    birth candidates get a window to bid for the streams.  This exists
    because an exclusive association can freeze a wrong partition: two
    features sitting on crossings of each other's true streams are
    individually measurement-consistent and mutually uncontested, so no
    single-feature evidence ever unseats them.  Releasing claims
    periodically re-opens the discrete assignment the same way a robust
    redraw re-opens the continuous position.  A released feature cannot
    steer (all agent information flows through its claim marginals), which
    is why the caller must release sparingly: every release thins the set
    of features holding the agent gauge.
    """
    anchors = [np.asarray(a, dtype=float).reshape(2) for a in anchors]
    zs = [np.asarray(z, dtype=float).reshape(-1) for z in batches]
    if len(zs) != len(anchors):
        raise ValueError("one measurement batch per anchor required")
    n_i = agent.n
    w = agent.weights
    k_n = len(features)
    s_map = max(2, int(message_samples))
    s_agent = max(2, s_map // 4)
    existence = [f.existence for f in features]
    flat_spread = 10.0 * sigma_range
    informative = []
    for k, f in enumerate(features):
        if f.existence <= 0:
            informative.append(False)
            continue
        if time_step is not None:
            if time_step - f.birth_time < steering_age:
                informative.append(False)
                continue
            if time_step < f.steer_hold:
                informative.append(False)
                continue
            if f.resid_ema is None or f.resid_ema > 4.0 * sigma_range:
                informative.append(False)
                continue
        v = f.weights / f.existence
        mu = v @ f.particles
        spread = math.sqrt(float(
            (v * ((f.particles - mu) ** 2).sum(axis=1)).sum()))
        informative.append(spread <= flat_spread)

    # Shared agent subsample for likelihoods and feature-direction messages.
    a_idx = systematic_resample(w, s_agent, rng)
    agent_pts = agent.positions[a_idx]

    # Association per anchor, every problem built from the prior beliefs.
    reports = []
    solved = []
    for anchor, z in zip(anchors, zs):
        m_n = len(z)
        if m_n == 0:
            reports.append(AnchorReport(marginals=None, best=[0] * k_n,
                                        unassigned=np.zeros(0),
                                        row_max=np.zeros(0)))
            solved.append(None)
            continue
        g_agent = []
        g_feat = []
        lik_rows = []
        for k, f in enumerate(features):
            if f.existence <= 0:
                g_agent.append(np.zeros((m_n, n_i)))
                g_feat.append(np.zeros((m_n, f.n)))
                lik_rows.append(np.zeros(m_n))
                continue
            if informative[k]:
                s_idx = systematic_resample(f.weights, s_map, rng)
                va_sub, ok_sub = _safe_va(f.particles[s_idx], anchor)
                if ok_sub.any():
                    va_s = _adaptive_subsample(va_sub[ok_sub], sigma_range)
                    g_agent.append(_gated_mean_pdf(
                        z, _range_matrix(agent.positions, va_s), sigma_range))
                else:
                    g_agent.append(None)
            else:
                g_agent.append(None)
            va_all, ok_all = _safe_va(f.particles, anchor)
            r2 = _range_matrix(va_all, agent_pts)
            gf = _gated_mean_pdf(z, r2, sigma_range)
            if not ok_all.all():
                gf[:, ~ok_all] = 0.0
            g_feat.append(gf)
            lik_rows.append(gf @ (f.weights / f.existence))
        row_exist = list(existence)
        for k_rel in released:
            # A released row keeps a vanishing claim weight so the lattice
            # stays well formed while its measurements read as unassigned.
            row_exist[k_rel] = 1e-12
        if include_los:
            r = np.linalg.norm(agent.positions - anchor, axis=1)
            g_los = _gated_mean_pdf(z, r[:, None], sigma_range)
            g_agent.append(g_los)
            lik_rows.append(g_los @ w)
            row_exist.append(1.0)
        rows = len(g_agent)
        lik = (np.stack(lik_rows) if lik_rows else np.zeros((0, m_n)))
        # With p_detect == 1 a saturated row makes the missed branch
        # impossible; if gating then zeroes the row's likelihoods the event
        # lattice is empty.  Backing existence off 1 by an epsilon keeps the
        # problem well posed without visibly moving any marginal.
        problem = AssociationProblem(
            existence=np.minimum(np.asarray(row_exist), 1.0 - 1e-9),
            likelihood=lik, p_detect=p_detect,
            clutter_intensity=np.full(m_n, clutter_density),
            birth_intensity=np.full(m_n, birth_density))
        marg = marginals_bp(problem)
        row_max = marg.feature[:, 1:].max(axis=0) if rows else np.zeros(m_n)
        reports.append(AnchorReport(
            marginals=marg,
            best=[best_measurement(marg, k) for k in range(k_n)],
            unassigned=marg.unassigned, row_max=row_max))
        solved.append((g_agent, g_feat, lik, marg))

    phi_total = np.ones(n_i)
    new_features = []
    for k, f in enumerate(features):
        rho = existence[k]
        if rho <= 0:
            new_features.append(replace(f, weights=np.zeros(f.n)))
            continue
        u_feat = np.ones(f.n)
        pinned_any = False
        for sol in solved:
            if sol is None or k in released:
                # No measurements from this anchor, or the feature sits this
                # step out: the missed-detection branch.
                u_feat *= 1.0 - p_detect
                continue
            g_agent, g_feat, lik, marg = sol
            coeffs, pinned = association_coefficients(marg.feature[k], rho,
                                                      p_detect, lik[k])
            pinned_any = pinned_any or pinned
            if g_agent[k] is not None:
                u_agent = update_factor(coeffs, pinned, g_agent[k], p_detect)
                phi_total *= (1.0 - rho) + rho * u_agent
            u_feat *= update_factor(coeffs, pinned, g_feat[k], p_detect)
        v_norm = f.weights / rho
        omega = v_norm * u_feat
        tot = float(omega.sum())
        s1 = rho * tot
        rho_new = 1.0 if pinned_any else (
            s1 / (s1 + 1.0 - rho) if s1 + 1.0 - rho > 0 else 0.0)
        if tot > 0 and rho_new > 0:
            # Keep the weighted representation between steps; resampling on
            # every update would erode multimodal structure (range curves
            # from collinear anchors cross more than once, and a young
            # belief must hold all crossings until motion disambiguates).
            # While the belief is young no resampling happens at all: a
            # rival crossing may carry almost no weight for many steps and
            # still be the truth, and it can only win later if its support
            # is physically kept.  The weight floor from missed-detection
            # and clutter terms keeps dormant modes finite, so they revive
            # as soon as the dominant arc stops explaining the ranges.
            wn = omega / tot
            young = (time_step is not None
                     and time_step - f.birth_time < steering_age)
            if (not young
                    and effective_sample_size(wn) < resample_threshold * f.n):
                idx = systematic_resample(wn, f.n, rng)
                new_features.append(replace(f, particles=f.particles[idx],
                                            weights=np.full(f.n,
                                                            rho_new / f.n)))
            else:
                new_features.append(replace(f, weights=wn * rho_new))
        else:
            new_features.append(replace(f, weights=np.zeros(f.n)))
    if include_los:
        for sol in solved:
            if sol is None:
                continue
            g_agent, g_feat, lik, marg = sol
            coeffs, pinned = association_coefficients(marg.feature[-1], 1.0,
                                                      p_detect, lik[-1])
            phi_total *= update_factor(coeffs, pinned, g_agent[-1], p_detect)

    w_new = w * phi_total
    s = float(w_new.sum())
    all_zero = not np.isfinite(s) or s <= 0.0
    if all_zero:
        w_new = np.full(n_i, 1.0 / n_i)
    else:
        w_new = w_new / s
    agent_new = AgentBelief(states=agent.states, weights=w_new)
    resampled = False
    if effective_sample_size(w_new) < resample_threshold * n_i:
        idx = systematic_resample(w_new, n_i, rng)
        agent_new = AgentBelief(states=agent.states[idx],
                                weights=np.full(n_i, 1.0 / n_i))
        resampled = True

    return StepUpdateResult(agent=agent_new, features=new_features,
                            reports=reports, all_zero_weights=all_zero,
                            agent_resampled=resampled)


# ---------------------------------------------------------------------------
# births, detection, pruning

def spawn_births(agent: AgentBelief, ranges, anchor, report: AnchorReport,
                 hp: Hyperparams, sigma_range: float, clutter_density: float,
                 birth_density: float, time_index: int,
                 rng: np.random.Generator) -> list[MvaBelief]:
    """New feature beliefs from measurements better explained by a birth
    than by any existing feature.

    A measurement qualifies when its unassigned probability exceeds every
    feature's probability of claiming it; the newborn existence is the birth
    share of the unassigned mass.  Particles are drawn on the measurement's
    range curve so the newborn resolution is set by the noise level rather
    than by how many uniform prior draws happen to land near the curve.
    Labels are assigned by the caller; newborns take part in the update
    only from the next step on.
    """
    if birth_density <= 0 or len(report.unassigned) == 0:
        return []
    z = np.asarray(ranges, dtype=float).reshape(-1)
    births = []
    frac = birth_density / (birth_density + clutter_density)
    for m in range(len(z)):
        claimed = report.row_max[m] if report.row_max.size else 0.0
        if report.unassigned[m] <= claimed:
            continue
        rho = frac * report.unassigned[m]
        if rho < hp.p_prune:
            continue
        _, pts, _ = draw_measurement_curve(
            agent, z[m], anchor, sigma_range, hp.prior_region,
            hp.n_particles, rng)
        births.append(MvaBelief(particles=pts,
                                weights=np.full(hp.n_particles,
                                                rho / hp.n_particles),
                                label=-1, birth_time=time_index))
    return births


def detect_and_prune(features: list, hp: Hyperparams):
    """Split features into survivors and the declared subset.

    Features with existence below p_prune are dropped; survivors with
    existence above p_declare are declared (reported as map estimates).
    """
    survivors = [f for f in features if f.existence >= hp.p_prune]
    declared = [f for f in survivors if f.existence > hp.p_declare]
    return survivors, declared


# ---------------------------------------------------------------------------
# proposal sampling

def draw_bootstrap(agent: AgentBelief, feature: MvaBelief, n_out: int,
                   rng: np.random.Generator):
    """Joint samples from the product of the predicted beliefs."""
    a_idx = systematic_resample(agent.weights, n_out, rng)
    f_idx = systematic_resample(feature.weights, n_out, rng)
    return agent.states[a_idx], feature.particles[f_idx]


def draw_measurement_component(agent: AgentBelief, z: float, anchor,
                               sigma_range: float, prior_region, n_out: int,
                               rng: np.random.Generator):
    """Importance draw of joint (agent, MVA) samples focused on one range.

    MVA candidates are uniform on the prior region, paired with agent
    samples, weighted by the range likelihood, then resampled.  When every
    weight underflows to zero the uniform draw is returned unweighted and
    the flag is False.
    """
    anchor = np.asarray(anchor, dtype=float).reshape(2)
    xmin, xmax, ymin, ymax = prior_region
    a_idx = systematic_resample(agent.weights, n_out, rng)
    states = agent.states[a_idx]
    pts = rng.uniform((xmin, ymin), (xmax, ymax), size=(n_out, 2))
    va = va_from_mva(pts, anchor)
    r = np.linalg.norm(states[:, :2] - va, axis=1)
    wts = gaussian_pdf(z, r, sigma_range)
    s = float(wts.sum())
    if not np.isfinite(s) or s <= 0:
        return states, pts, False
    idx = systematic_resample(wts / s, n_out, rng)
    return states[idx], pts[idx], True


def draw_measurement_curve(agent: AgentBelief, z: float, anchor,
                           sigma_range: float, prior_region, n_out: int,
                           rng: np.random.Generator):
    """Joint (agent, MVA) samples drawn directly on one range curve.

    For a fixed surface direction the range equation is a quadratic in the
    surface offset, so the curve of MVAs consistent with (agent, anchor, z)
    is sampled parametrically: draw the direction uniformly, perturb the
    range by the measurement noise, and solve for the offset.  This places
    samples millimetres apart along the whole curve, which a uniform draw
    over the prior region cannot match at practical sample counts; a birth
    belief inherits the spacing of its initial draw because the
    regularization noise is tiny, so birth resolution decides how close a
    feature can ever get to its true position.  Samples are returned
    equally weighted (the density is per direction rather than per arc
    length; the distortion is minor for a birth prior).  When the curve
    misses the prior region almost entirely the flag is False.
    """
    anchor = np.asarray(anchor, dtype=float).reshape(2)
    xmin, xmax, ymin, ymax = prior_region
    a_idx = systematic_resample(agent.weights, n_out, rng)
    states = agent.states[a_idx]
    phi = rng.uniform(0.0, 2.0 * np.pi, n_out)
    normals = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    zz = z + sigma_range * rng.standard_normal(n_out)
    sign = np.where(rng.random(n_out) < 0.5, 1.0, -1.0)
    q = states[:, :2] - anchor
    qn = (q * normals).sum(axis=1)
    disc = qn * qn - (q * q).sum(axis=1) + zz * zz
    ok = disc > 0.0
    t = qn + sign * np.sqrt(np.maximum(disc, 0.0))
    radius = t + 2.0 * (anchor * normals).sum(axis=1)
    pts = radius[:, None] * normals
    ok &= radius > 0.0
    ok &= (pts[:, 0] >= xmin) & (pts[:, 0] <= xmax)
    ok &= (pts[:, 1] >= ymin) & (pts[:, 1] <= ymax)
    n_ok = int(ok.sum())
    if n_ok < max(2, n_out // 100):
        pts = rng.uniform((xmin, ymin), (xmax, ymax), size=(n_out, 2))
        return states, pts, False
    if n_ok < n_out:
        fill = rng.choice(np.flatnonzero(ok), size=n_out - n_ok)
        bad = np.flatnonzero(~ok)
        states = states.copy()
        states[bad] = states[fill]
        pts[bad] = pts[fill]
    return states, pts, True


def draw_robust_mixture(agent: AgentBelief, feature: MvaBelief,
                        best_pairs: list, anchors, hp: Hyperparams,
                        sigma_range: float, rng: np.random.Generator,
                        beta: float = 0.08, curve_frac: float = 1.0 / 3.0):
    """Particles and unit weights redrawn from the robust mixture proposal.

    One predicted component plus one measurement component per anchor that
    had a best (non-missed) claimed measurement at the previous step;
    best_pairs holds (anchor index, previous best range) entries.  The
    measurement components together receive ``curve_frac`` of the particle
    slots but only ``beta`` of the weight mass; the predicted component
    keeps the rest.  Returns (particles, weights) with weights summing to
    one, or the pure bootstrap draw with uniform weights when there is no
    best measurement at any anchor.

    The count/mass asymmetry is the point of the design.  Insurance against
    a wrong mode requires presence, not mass: the redraw spreads enough
    samples along each claimed range curve that every crossing keeps a few
    dozen of them, and because weights evolve multiplicatively, those few
    atoms outvote a committed mode within a step or two once the evidence
    abandons it (the dead mode decays to the missed-detection floor while
    the true crossing multiplies by full likelihoods).  Giving the curves
    large mass instead would let them compete with a healthy mode on even
    terms each redraw: one step of likelihood cannot pin the along-curve
    direction, so the estimate would take a random step along the curve
    every firing, and with the curves drawn around the current agent belief
    that sampling noise feeds the agent's own error back into the map and
    lets the whole constellation drift.  For the same reason the curve
    samples stay spread along the whole curve rather than being sharpened
    toward points consistent with the other anchors' claims: concentrated
    mass at a discrete alternative crossing survives the next updates at
    its full injected share (a crossing fits the ranges as well as the
    committed mode until the geometry moves), while the diffuse version
    leaves only a sliver there and lets the evidence promote it gradually.
    """
    n = feature.n
    if len(best_pairs) == 0:
        _, pts = draw_bootstrap(agent, feature, n, rng)
        return pts, np.full(n, 1.0 / n)
    n_curve = int(round(n * curve_frac))
    per = [n_curve // len(best_pairs)] * len(best_pairs)
    per[0] += n_curve - sum(per)
    pools = []
    for (j, z_prev), m in zip(best_pairs, per):
        _, pts, _ = draw_measurement_curve(agent, z_prev, anchors[j],
                                           sigma_range, hp.prior_region,
                                           m, rng)
        pools.append(pts)
    keep = systematic_resample(feature.weights, n - n_curve, rng)
    particles = np.concatenate([feature.particles[keep]] + pools, axis=0)
    weights = np.concatenate([
        np.full(n - n_curve, (1.0 - beta) / (n - n_curve)),
        np.full(n_curve, beta / n_curve)])
    return particles, weights


def schedule_robust(feature: MvaBelief, time_index: int, hp: Hyperparams,
                    rng: np.random.Generator) -> bool:
    """Whether the robust redraw fires for this feature at this step.

    On firing, the next trigger is drawn uniformly from
    {time_index + n1, ..., time_index + n2}.  Features older than n_max or
    without a schedule never fire.
    """
    if feature.next_robust_trigger is None:
        return False
    if time_index - feature.birth_time > hp.n_max:
        return False
    if time_index < feature.next_robust_trigger:
        return False
    feature.next_robust_trigger = time_index + int(rng.integers(hp.n1, hp.n2 + 1))
    return True


def initial_robust_trigger(birth_time: int, hp: Hyperparams,
                           rng: np.random.Generator) -> int:
    return birth_time + int(rng.integers(hp.n1, hp.n2 + 1))
