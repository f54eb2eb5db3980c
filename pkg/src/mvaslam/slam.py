"""Sequential multipath SLAM estimator.

Consumes per-step, per-anchor range batches and maintains a particle belief
over the agent state together with a set of candidate surface features (MVA
particle clouds with existence mass).  Follows the scikit-learn estimator
conventions: constructor arguments are stored verbatim, all state created by
fitting carries a trailing underscore, and ``get_params``/``set_params``
work for cloning and grid search.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .errors import ConfigError
from .geometry import va_from_mva
from .inference import (AgentBelief, Hyperparams, MvaBelief, detect_and_prune,
                        draw_robust_mixture, estimate_agent, estimate_mva,
                        initial_robust_trigger, predict_agent, predict_mva,
                        schedule_robust, spawn_births, step_update)


def _seed_streams(random_state, n_streams: int = 3):
    """Independent generators for the main filter, the robust schedule, and
    the robust mixture draws.

    Accepts None, an int, a tuple of ints, a SeedSequence, or a Generator.
    Int and tuple seeds derive children deterministically, so two filters
    built from the same seed consume identical main-stream randomness even
    if one of them never touches the robust streams.
    """
    if random_state is None:
        return [np.random.default_rng(c)
                for c in np.random.SeedSequence().spawn(n_streams)]
    if isinstance(random_state, (int, np.integer)):
        return [np.random.default_rng(np.random.SeedSequence((int(random_state), k)))
                for k in range(n_streams)]
    if isinstance(random_state, (tuple, list)):
        base = tuple(int(v) for v in random_state)
        return [np.random.default_rng(np.random.SeedSequence(base + (k,)))
                for k in range(n_streams)]
    if isinstance(random_state, np.random.SeedSequence):
        return [np.random.default_rng(c) for c in random_state.spawn(n_streams)]
    if isinstance(random_state, np.random.Generator):
        return list(random_state.spawn(n_streams))
    raise ConfigError(f"unsupported random_state: {random_state!r}")


class MvaSlamFilter(BaseEstimator):
    """Particle-based range-only SLAM over master-virtual-anchor features.

    Parameters mirror the scenario measurement model (sigma_range, p_detect,
    clutter, line-of-sight flag, motion noise) plus the filter hyperparameters
    (particle counts, existence thresholds, birth model, robust-sampling
    schedule).  ``sampler_mode`` selects the proposal: "bootstrap" predicts
    features only from their previous belief, "robust" periodically redraws
    feature particles from a mixture that includes measurement-focused
    components.

    Attributes after fitting:
        agent_track_: (n_steps, 4) MMSE agent estimates.
        declared_history_: per step, dict with labels, points, existence of
            declared features.
        map_labels_, map_estimates_: final declared feature labels and
            (K, 2) MVA estimates.
        features_: live feature beliefs (declared or not).
        diverged_: True if the agent weights ever summed to zero.
        n_steps_: number of processed steps.
    """

    def __init__(self, anchors=None, *, sigma_range=0.1, p_detect=0.95,
                 mu_clutter=1.0, clutter_range_max=30.0, include_los=True,
                 dt=1.0, sigma_drive=0.0032, n_particles=5000, i_prime=None,
                 p_survival=0.999, p_declare=0.5, p_prune=1e-3, mu_birth=0.01,
                 prior_region=(-15.0, 15.0, -15.0, 15.0), n1=5, n2=10,
                 n_max=120, sigma_reg=1e-5, sampler_mode="bootstrap",
                 resample_threshold=0.5, message_samples=16,
                 init_state=(0.0, 0.0, 0.0, 0.0),
                 init_pos_halfwidth=0.1, init_vel_halfwidth=0.01,
                 random_state=None):
        self.anchors = anchors
        self.sigma_range = sigma_range
        self.p_detect = p_detect
        self.mu_clutter = mu_clutter
        self.clutter_range_max = clutter_range_max
        self.include_los = include_los
        self.dt = dt
        self.sigma_drive = sigma_drive
        self.n_particles = n_particles
        self.i_prime = i_prime
        self.p_survival = p_survival
        self.p_declare = p_declare
        self.p_prune = p_prune
        self.mu_birth = mu_birth
        self.prior_region = prior_region
        self.n1 = n1
        self.n2 = n2
        self.n_max = n_max
        self.sigma_reg = sigma_reg
        self.sampler_mode = sampler_mode
        self.resample_threshold = resample_threshold
        self.message_samples = message_samples
        self.init_state = init_state
        self.init_pos_halfwidth = init_pos_halfwidth
        self.init_vel_halfwidth = init_vel_halfwidth
        self.random_state = random_state

    # -- construction of runtime state -------------------------------------

    def _hyperparams(self) -> Hyperparams:
        return Hyperparams(n_particles=self.n_particles, i_prime=self.i_prime,
                           p_survival=self.p_survival, p_detect=self.p_detect,
                           p_declare=self.p_declare, p_prune=self.p_prune,
                           mu_birth=self.mu_birth,
                           prior_region=tuple(self.prior_region),
                           n1=self.n1, n2=self.n2, n_max=self.n_max,
                           sigma_reg=self.sigma_reg,
                           sampler_mode=self.sampler_mode,
                           resample_threshold=self.resample_threshold,
                           message_samples=self.message_samples)

    def _initialize(self):
        anchors = np.asarray(self.anchors, dtype=float)
        if anchors.ndim != 2 or anchors.shape[1] != 2 or len(anchors) == 0:
            raise ConfigError("anchors must be a nonempty (J, 2) array")
        if self.sigma_range <= 0 or self.clutter_range_max <= 0 or self.dt <= 0:
            raise ConfigError("sigma_range, clutter_range_max, dt must be positive")
        if self.mu_clutter < 0 or self.sigma_drive < 0:
            raise ConfigError("mu_clutter and sigma_drive must be >= 0")
        self._hp = self._hyperparams()
        self._anchors = anchors
        self._rng_main, self._rng_sched, self._rng_robust = _seed_streams(
            self.random_state)

        n = self._hp.n_particles
        center = np.asarray(self.init_state, dtype=float).reshape(4)
        half = np.array([self.init_pos_halfwidth, self.init_pos_halfwidth,
                         self.init_vel_halfwidth, self.init_vel_halfwidth])
        states = self._rng_main.uniform(center - half, center + half, size=(n, 4))
        self._agent = AgentBelief(states=states, weights=np.full(n, 1.0 / n))
        self._features: list[MvaBelief] = []
        self._next_label = 0
        self._clutter_density = self.mu_clutter / self.clutter_range_max
        self._birth_density = self.mu_birth / self.clutter_range_max

        self.n_steps_ = 0
        self.diverged_ = False
        self.agent_track_ = np.zeros((0, 4))
        self.declared_history_ = []
        self._track_rows = []

    def _check_batches(self, batches) -> list[np.ndarray]:
        out = []
        for b in batches:
            r = np.asarray(getattr(b, "ranges", b), dtype=float).reshape(-1)
            if not np.all(np.isfinite(r)):
                raise ValueError("measurement ranges must be finite")
            out.append(r)
        if len(out) != len(self._anchors):
            raise ValueError(f"expected one batch per anchor "
                             f"({len(self._anchors)}), got {len(out)}")
        return out

    # -- fitting ------------------------------------------------------------

    def fit(self, X, y=None):
        """Run the filter over a full measurement sequence.

        Args:
            X: sequence over time steps; each element holds one range batch
                (array-like or MeasurementBatch) per anchor.
            y: ignored, sklearn convention.
        """
        self._initialize()
        for batches in X:
            self._step(self._check_batches(batches))
        self._finalize()
        return self

    def partial_fit(self, batches):
        """Process a single time step (one batch per anchor)."""
        if not hasattr(self, "_agent"):
            self._initialize()
        self._step(self._check_batches(batches))
        self._finalize()
        return self

    def _step(self, batches: list[np.ndarray]):
        hp = self._hp
        n = self.n_steps_
        robust = hp.sampler_mode == "robust"

        if n > 0:
            self._agent = predict_agent(self._agent, self.dt,
                                        self.sigma_drive, self._rng_main)
            self._features = [predict_mva(f, hp.p_survival, hp.sigma_reg,
                                          self._rng_main)
                              for f in self._features]

        if robust:
            # Scheduled redraw from the mixture proposal: on its own n1..n2
            # clock, and only until it reaches age n_max, each mature
            # feature trades a slice of its particle slots for fresh samples
            # on the range curves of its previously claimed measurements.
            # Every redraw re-opens the question of which curve crossing the
            # feature sits on: the committed mode keeps almost all of the
            # weight mass, the curve samples re-seed every alternative at
            # thin mass, and the following updates decide which mode holds.
            # Until n_max this keeps the map deliberately loose and the
            # mapping error high; once the redraws stop, each surviving
            # feature finally collapses onto the one crossing the evidence
            # kept confirming.
            #
            # At most one feature fires per step, and only after its young
            # no-resample phase is over.  The agent has no anchor other than
            # the map, so its error is bounded by how overdetermined the
            # steering set is; letting several features leave that set at
            # once, or disturbing a young cloud mid-collapse, trades mode
            # insurance for gauge drift.  A stale trigger simply queues: the
            # feature fires on the next step with no firing already taken.
            fired = False
            for f in self._features:
                if fired or f.existence <= 0 or n - f.birth_time < 15:
                    continue
                if not schedule_robust(f, n, hp, self._rng_sched):
                    continue
                fired = True
                ex = f.existence
                f.particles, unit_w = draw_robust_mixture(
                    self._agent, f, sorted(f.best_ranges.items()),
                    self._anchors, hp, self.sigma_range, self._rng_robust)
                f.weights = ex * unit_w

        for f in self._features:
            f.best_ranges = {}

        result = step_update(
            self._agent, self._features, batches, self._anchors,
            sigma_range=self.sigma_range, p_detect=hp.p_detect,
            clutter_density=self._clutter_density,
            birth_density=self._birth_density, time_step=n,
            include_los=self.include_los, rng=self._rng_main,
            resample_threshold=hp.resample_threshold,
            message_samples=hp.message_samples)
        self._agent = result.agent
        self._features = result.features
        updated = list(self._features)
        if result.all_zero_weights:
            self.diverged_ = True
        p_est = estimate_agent(self._agent)[:2]
        for j, report in enumerate(result.reports):
            z = np.asarray(batches[j], dtype=float).reshape(-1)
            for k, f in enumerate(updated):
                if report.best[k] > 0:
                    zbest = float(z[report.best[k] - 1])
                    f.best_ranges[j] = zbest
                    est = estimate_mva(f)
                    if np.linalg.norm(est) > 1e-6:
                        va = va_from_mva(est, self._anchors[j])
                        resid = abs(zbest - float(np.linalg.norm(p_est - va)))
                        f.resid_ema = (resid if f.resid_ema is None
                                       else 0.7 * f.resid_ema + 0.3 * resid)
            births = spawn_births(self._agent, z, self._anchors[j], report,
                                  hp, self.sigma_range, self._clutter_density,
                                  self._birth_density, n, self._rng_main)
            for b in births:
                b.label = self._next_label
                self._next_label += 1
                if robust:
                    b.next_robust_trigger = initial_robust_trigger(
                        n, hp, self._rng_sched)
            self._features.extend(births)

        self._features, declared = detect_and_prune(self._features, hp)
        self._track_rows.append(estimate_agent(self._agent))
        self.declared_history_.append({
            "labels": [f.label for f in declared],
            "points": (np.stack([estimate_mva(f) for f in declared])
                       if declared else np.zeros((0, 2))),
            "existence": [f.existence for f in declared],
        })
        self.n_steps_ += 1

    def _finalize(self):
        self.agent_track_ = (np.stack(self._track_rows)
                             if self._track_rows else np.zeros((0, 4)))
        last = (self.declared_history_[-1] if self.declared_history_
                else {"labels": [], "points": np.zeros((0, 2))})
        self.map_labels_ = list(last["labels"])
        self.map_estimates_ = np.asarray(last["points"])
        self.features_ = self._features
