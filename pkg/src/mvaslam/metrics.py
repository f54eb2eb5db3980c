"""Evaluation metrics: OSPA map error, per-step RMSE, convergence check."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

OSPA_CUTOFF = 5.0
OSPA_ORDER = 1.0

# A run counts as converged when the position error stays below this bound
# at every time step.
DIVERGENCE_THRESHOLD = 0.5


def _as_points(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.size == 0:
        return a.reshape(0, 2)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != 2:
        raise ValueError(f"expected (n, 2) point set, got shape {a.shape}")
    return a


def ospa(estimated, truth, cutoff: float = OSPA_CUTOFF,
         order: float = OSPA_ORDER) -> float:
    """OSPA distance between two planar point sets.

    Localization cost uses Euclidean distance clipped at ``cutoff``; each
    cardinality mismatch costs ``cutoff``.  ``order`` is the OSPA exponent p.
    Empty vs empty is 0; empty vs nonempty is ``cutoff``.
    """
    x = _as_points(estimated)
    y = _as_points(truth)
    if cutoff <= 0 or order < 1:
        raise ValueError("need cutoff > 0 and order >= 1")
    m, n = len(x), len(y)
    if m == 0 and n == 0:
        return 0.0
    if m == 0 or n == 0:
        return float(cutoff)
    if m > n:
        x, y, m, n = y, x, n, m
    d = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=-1)
    d = np.minimum(d, cutoff)
    rows, cols = linear_sum_assignment(d ** order)
    loc = float(np.sum(d[rows, cols] ** order))
    return float(((loc + (cutoff ** order) * (n - m)) / n) ** (1.0 / order))


def mospa(ospa_runs) -> np.ndarray:
    """Mean OSPA over runs: (R, N) per-run series to an (N,) average."""
    a = np.asarray(ospa_runs, dtype=float)
    if a.ndim != 2:
        raise ValueError("expected an (n_runs, n_steps) array of OSPA values")
    return a.mean(axis=0)


def position_errors(est_track, truth_track) -> np.ndarray:
    """Per-step Euclidean position error between two (N, >=2) tracks."""
    est = np.asarray(est_track, dtype=float)
    tru = np.asarray(truth_track, dtype=float)
    if est.shape[0] != tru.shape[0]:
        raise ValueError("tracks must share the time axis")
    return np.linalg.norm(est[:, :2] - tru[:, :2], axis=-1)


def is_converged(est_track, truth_track,
                 threshold: float = DIVERGENCE_THRESHOLD,
                 include_velocity: bool = False) -> bool:
    """Whether the estimate stays within ``threshold`` of the truth at every
    step.  Position-only by default; ``include_velocity`` switches to the
    full state norm."""
    est = np.asarray(est_track, dtype=float)
    tru = np.asarray(truth_track, dtype=float)
    if include_velocity:
        err = np.linalg.norm(est - tru, axis=-1)
    else:
        err = position_errors(est, tru)
    return bool(np.all(err < threshold))


def rmse_over_runs(est_tracks, truth_tracks, mask=None) -> np.ndarray:
    """Per-step agent position RMSE across runs.

    Args:
        est_tracks: (R, N, >=2) estimated tracks.
        truth_tracks: (R, N, >=2) true tracks.
        mask: optional (R,) boolean selector (e.g. converged runs only).

    Returns:
        (N,) RMSE series; NaN if the mask selects no runs.
    """
    est = np.asarray(est_tracks, dtype=float)
    tru = np.asarray(truth_tracks, dtype=float)
    if mask is not None:
        sel = np.asarray(mask, dtype=bool)
        est, tru = est[sel], tru[sel]
    if len(est) == 0:
        return np.full(np.asarray(truth_tracks).shape[1], np.nan)
    sq = np.sum((est[:, :, :2] - tru[:, :, :2]) ** 2, axis=-1)
    return np.sqrt(sq.mean(axis=0))
