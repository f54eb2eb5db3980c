"""Planar mirror geometry.

A reflective surface is an infinite line described by a unit normal and a
positive offset from the global origin.  Its master virtual anchor (MVA) is
the mirror image of the origin across the line; the virtual anchor (VA) of a
physical anchor follows from the MVA alone, which is what makes the MVA a
per-surface (rather than per-anchor) map feature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMVA

# Below this norm an MVA no longer identifies a line (offset -> 0, normal
# undefined) and the VA transform divides by ~0.
MVA_NORM_EPS = 1e-6

_UNIT_TOL = 1e-9


def _as_point(p) -> np.ndarray:
    a = np.asarray(p, dtype=float)
    if a.shape[-1] != 2:
        raise ValueError(f"expected 2-D point(s), got shape {a.shape}")
    return a


@dataclass(frozen=True)
class Surface:
    """Infinite reflective line with unit normal and positive origin offset.

    The normal points away from the origin, so ``offset > 0`` and the line is
    ``{p : <p, normal> = offset}``.
    """

    normal: tuple[float, float]
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if n.shape != (2,) or not np.all(np.isfinite(n)):
            raise ValueError("normal must be a finite 2-vector")
        if abs(float(n @ n) - 1.0) > _UNIT_TOL:
            raise ValueError("normal must have unit length")
        if not np.isfinite(self.offset) or self.offset <= 0.0:
            raise ValueError("offset must be finite and positive")
        object.__setattr__(self, "normal", (float(n[0]), float(n[1])))
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def normal_array(self) -> np.ndarray:
        return np.asarray(self.normal, dtype=float)


def reflect_point(surface: Surface, p) -> np.ndarray:
    """Mirror point(s) ``p`` across the surface.

    Accepts a single point or an (..., 2) stack; returns the same shape.
    """
    p = _as_point(p)
    n = surface.normal_array
    d = p @ n - surface.offset
    return p - 2.0 * d[..., None] * n


def mva_from_surface(surface: Surface) -> np.ndarray:
    """Master virtual anchor: the origin mirrored across the surface."""
    return 2.0 * surface.offset * surface.normal_array


def surface_from_mva(mva) -> Surface:
    """Invert :func:`mva_from_surface`.

    Raises:
        DegenerateMVA: if ``|mva| <= MVA_NORM_EPS``.
    """
    mva = _as_point(mva)
    if mva.ndim != 1:
        raise ValueError("surface_from_mva takes a single point")
    norm = float(np.linalg.norm(mva))
    if norm <= MVA_NORM_EPS:
        raise DegenerateMVA(f"|mva| = {norm:.3e} <= {MVA_NORM_EPS:.0e}")
    return Surface(normal=(mva[0] / norm, mva[1] / norm), offset=norm / 2.0)


def va_from_mva(mva, anchor) -> np.ndarray:
    """Virtual anchor of ``anchor`` for the surface encoded by ``mva``.

    Identical to reflecting the anchor across the surface, but written purely
    in terms of the MVA so it vectorizes over particle stacks: ``mva`` may be
    (2,) or (..., 2), ``anchor`` is a single point.

    Raises:
        DegenerateMVA: if any ``|mva| <= MVA_NORM_EPS``.
    """
    mva = _as_point(mva)
    anchor = _as_point(anchor)
    sq = np.sum(mva * mva, axis=-1)
    if np.any(sq <= MVA_NORM_EPS * MVA_NORM_EPS):
        raise DegenerateMVA("MVA too close to the origin")
    factor = 2.0 * (mva @ anchor) / sq - 1.0
    return -factor[..., None] * mva + anchor


def expected_range(agent_pos, va) -> np.ndarray:
    """Noise-free propagation distance: agent to virtual anchor.

    Broadcasts over stacks on either side.
    """
    agent_pos = _as_point(agent_pos)
    va = _as_point(va)
    return np.linalg.norm(agent_pos - va, axis=-1)
