"""Mirror geometry: hand-worked examples, algebraic properties, exactness."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvaslam.errors import DegenerateMVA
from mvaslam.geometry import (MVA_NORM_EPS, Surface, expected_range,
                              mva_from_surface, reflect_point,
                              surface_from_mva, va_from_mva)

ATOL = 1e-12

# Random-instance domain: offsets and coordinates a few times larger than the
# scenario region, small enough that double precision keeps errors ~1e-14.
OFFSET_LO, OFFSET_HI = 0.5, 15.0
COORD = 30.0


def random_surfaces(rng, n):
    theta = rng.uniform(0.0, 2.0 * math.pi, n)
    normal = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    offset = rng.uniform(OFFSET_LO, OFFSET_HI, n)
    return normal, offset


# ---------------------------------------------------------------------------
# hand-worked examples


def test_reflect_across_horizontal_line():
    s = Surface(normal=(0.0, 1.0), offset=4.0)
    np.testing.assert_allclose(reflect_point(s, (1.0, 1.0)), (1.0, 7.0),
                               atol=ATOL)


def test_reflect_fixes_points_on_the_line():
    s = Surface(normal=(0.0, 1.0), offset=4.0)
    np.testing.assert_allclose(reflect_point(s, (3.0, 4.0)), (3.0, 4.0),
                               atol=ATOL)


def test_reflect_across_vertical_line():
    s = Surface(normal=(1.0, 0.0), offset=2.0)
    np.testing.assert_allclose(reflect_point(s, (-0.5, 6.0)), (4.5, 6.0),
                               atol=ATOL)


def test_reflect_across_diagonal_line():
    # x + y = 2: mirror of (3, 1) lands at (1, -1).
    r = math.sqrt(0.5)
    s = Surface(normal=(r, r), offset=math.sqrt(2.0))
    np.testing.assert_allclose(reflect_point(s, (3.0, 1.0)), (1.0, -1.0),
                               atol=ATOL)


def test_reflect_accepts_point_stacks():
    s = Surface(normal=(1.0, 0.0), offset=3.0)
    pts = np.array([[1.0, 2.0], [3.0, 9.0], [5.0, -1.0]])
    out = reflect_point(s, pts)
    np.testing.assert_allclose(out, [[5.0, 2.0], [3.0, 9.0], [1.0, -1.0]],
                               atol=ATOL)


def test_mva_examples():
    np.testing.assert_allclose(
        mva_from_surface(Surface(normal=(0.0, 1.0), offset=4.0)), (0.0, 8.0),
        atol=ATOL)
    np.testing.assert_allclose(
        mva_from_surface(Surface(normal=(1.0, 0.0), offset=2.0)), (4.0, 0.0),
        atol=ATOL)
    r = math.sqrt(0.5)
    np.testing.assert_allclose(
        mva_from_surface(Surface(normal=(r, r), offset=1.0)),
        (math.sqrt(2.0), math.sqrt(2.0)), atol=ATOL)


def test_surface_from_mva_examples():
    s = surface_from_mva((0.0, 8.0))
    np.testing.assert_allclose(s.normal_array, (0.0, 1.0), atol=ATOL)
    assert s.offset == pytest.approx(4.0, abs=ATOL)
    s = surface_from_mva((4.0, 0.0))
    np.testing.assert_allclose(s.normal_array, (1.0, 0.0), atol=ATOL)
    assert s.offset == pytest.approx(2.0, abs=ATOL)


def test_surface_from_mva_rejects_degenerate():
    with pytest.raises(DegenerateMVA):
        surface_from_mva((1e-9, 0.0))
    with pytest.raises(DegenerateMVA):
        surface_from_mva((0.0, 0.0))


def test_va_examples():
    # Anchor at the origin: the VA coincides with the MVA.
    np.testing.assert_allclose(va_from_mva((0.0, 8.0), (0.0, 0.0)),
                               (0.0, 8.0), atol=ATOL)
    # Anchor on the surface line: the VA is the anchor itself.
    np.testing.assert_allclose(va_from_mva((0.0, 8.0), (3.0, 4.0)),
                               (3.0, 4.0), atol=ATOL)
    np.testing.assert_allclose(va_from_mva((0.0, 8.0), (-0.5, 6.0)),
                               (-0.5, 2.0), atol=ATOL)
    # Vertical wall x = 3 seen from (-0.5, 6): mirror sits at (6.5, 6).
    np.testing.assert_allclose(va_from_mva((6.0, 0.0), (-0.5, 6.0)),
                               (6.5, 6.0), atol=ATOL)


def test_va_rejects_degenerate():
    with pytest.raises(DegenerateMVA):
        va_from_mva((0.0, MVA_NORM_EPS / 2.0), (1.0, 1.0))


def test_va_vectorizes_over_mva_stacks():
    mvas = np.array([[0.0, 8.0], [6.0, 0.0]])
    out = va_from_mva(mvas, (-0.5, 6.0))
    np.testing.assert_allclose(out, [[-0.5, 2.0], [6.5, 6.0]], atol=ATOL)


def test_expected_range_examples():
    assert expected_range((1.0, 1.0), (1.0, 1.0)) == pytest.approx(0.0)
    assert expected_range((1.0, 1.0), (-0.5, 2.0)) == pytest.approx(
        math.sqrt(3.25), abs=ATOL)
    assert expected_range((0.0, 0.0), (3.0, 4.0)) == pytest.approx(5.0,
                                                                   abs=ATOL)


# ---------------------------------------------------------------------------
# validation


def test_surface_requires_unit_normal():
    with pytest.raises(ValueError):
        Surface(normal=(1.0, 1.0), offset=2.0)


def test_surface_requires_positive_offset():
    with pytest.raises(ValueError):
        Surface(normal=(0.0, 1.0), offset=0.0)
    with pytest.raises(ValueError):
        Surface(normal=(0.0, 1.0), offset=-2.0)


def test_surface_requires_finite_normal():
    with pytest.raises(ValueError):
        Surface(normal=(np.nan, 1.0), offset=2.0)


def test_point_shape_is_checked():
    s = Surface(normal=(0.0, 1.0), offset=4.0)
    with pytest.raises(ValueError):
        reflect_point(s, (1.0, 2.0, 3.0))


# ---------------------------------------------------------------------------
# properties

surface_st = st.builds(
    lambda theta, offset: Surface(normal=(math.cos(theta), math.sin(theta)),
                                  offset=offset),
    st.floats(0.0, 2.0 * math.pi),
    st.floats(OFFSET_LO, OFFSET_HI))

point_st = st.tuples(st.floats(-COORD, COORD), st.floats(-COORD, COORD))


@settings(max_examples=200, deadline=None)
@given(surface_st, point_st)
def test_reflection_is_involutive(s, p):
    p = np.asarray(p)
    np.testing.assert_allclose(reflect_point(s, reflect_point(s, p)), p,
                               atol=ATOL)


@settings(max_examples=200, deadline=None)
@given(surface_st)
def test_mva_surface_round_trip(s):
    m = mva_from_surface(s)
    s2 = surface_from_mva(m)
    np.testing.assert_allclose(s2.normal_array, s.normal_array, atol=ATOL)
    assert s2.offset == pytest.approx(s.offset, abs=ATOL)
    np.testing.assert_allclose(mva_from_surface(s2), m, atol=ATOL)


@settings(max_examples=200, deadline=None)
@given(surface_st, point_st)
def test_va_equals_reflected_anchor(s, pa):
    m = mva_from_surface(s)
    np.testing.assert_allclose(va_from_mva(m, pa), reflect_point(s, pa),
                               atol=ATOL)


@settings(max_examples=200, deadline=None)
@given(surface_st)
def test_va_of_origin_is_the_mva(s):
    m = mva_from_surface(s)
    np.testing.assert_allclose(va_from_mva(m, (0.0, 0.0)), m, atol=ATOL)


@settings(max_examples=200, deadline=None)
@given(surface_st, point_st, point_st)
def test_reflection_is_an_isometry(s, p, q):
    p, q = np.asarray(p), np.asarray(q)
    d0 = np.linalg.norm(p - q)
    d1 = np.linalg.norm(reflect_point(s, p) - reflect_point(s, q))
    assert d1 == pytest.approx(d0, abs=1e-10)


@settings(max_examples=200, deadline=None)
@given(surface_st, point_st, point_st)
def test_va_range_equals_specular_path_length(s, agent, pa):
    # The bounce path agent -> X -> pa, with X the intersection of the
    # agent-to-VA segment and the surface line, has the same length as the
    # straight agent-to-VA distance.  Only configurations where the segment
    # actually crosses the line are physical.
    agent, pa = np.asarray(agent), np.asarray(pa)
    va = reflect_point(s, pa)
    n = s.normal_array
    denom = float((va - agent) @ n)
    if abs(denom) < 1e-9:
        return
    t = (s.offset - float(agent @ n)) / denom
    if not 0.001 < t < 0.999:
        return
    x = agent + t * (va - agent)
    bounce = np.linalg.norm(agent - x) + np.linalg.norm(x - pa)
    direct = expected_range(agent, va)
    assert bounce == pytest.approx(float(direct), abs=1e-9)


# ---------------------------------------------------------------------------
# bulk exactness (the acceptance run reuses this routine)


def geometry_bulk_errors(n_instances: int, seed: int = 1) -> float:
    """Worst absolute deviation across all geometry identities on
    ``n_instances`` random surface/point/anchor triples."""
    rng = np.random.default_rng(seed)
    normal, offset = random_surfaces(rng, n_instances)
    mva = 2.0 * offset[:, None] * normal
    pts = rng.uniform(-COORD, COORD, (n_instances, 2))
    pa = rng.uniform(-COORD, COORD, 2)

    worst = 0.0
    # involution
    d = (pts * normal).sum(axis=1) - offset
    refl = pts - 2.0 * d[:, None] * normal
    d2 = (refl * normal).sum(axis=1) - offset
    back = refl - 2.0 * d2[:, None] * normal
    worst = max(worst, float(np.abs(back - pts).max()))
    # MVA round trip
    norms = np.linalg.norm(mva, axis=1)
    worst = max(worst, float(np.abs(norms / 2.0 - offset).max()))
    worst = max(worst, float(
        np.abs(mva / norms[:, None] - normal).max()))
    # VA transform vs direct reflection of the anchor
    d3 = (pa * normal).sum(axis=1) - offset
    refl_pa = pa - 2.0 * d3[:, None] * normal
    worst = max(worst, float(np.abs(va_from_mva(mva, pa) - refl_pa).max()))
    # reflected-path range identity
    va = va_from_mva(mva, pa)
    worst = max(worst, float(np.abs(
        expected_range(pts, va)
        - np.linalg.norm(pts - refl_pa, axis=1)).max()))
    return worst


def test_bulk_identities_hold_to_1e_12():
    assert geometry_bulk_errors(20000) < ATOL
