"""Flight-and-reflect dynamics: closed-form hits, reflection law,
escape and grazing handling."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from billiard_lab import (DeformationFamily, GeometryError, GrazingError,
                          PhaseState, billiard_step, circle, ellipse,
                          first_intersection, partial_jet, reflect,
                          trajectory)

from conftest import static_three_circle, static_two_circle


def test_reflect_head_on_and_oblique():
    np.testing.assert_allclose(reflect([1.0, 0.0], [-1.0, 0.0]), [-1.0, 0.0],
                               atol=1e-15)
    v = np.array([1.0, -1.0]) / math.sqrt(2.0)
    out = reflect(v, [0.0, 1.0])
    np.testing.assert_allclose(out, [1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0)],
                               atol=1e-15)


def test_reflect_rejects_bad_input():
    with pytest.raises(GeometryError):
        reflect([2.0, 0.0], [1.0, 0.0])          # not unit
    with pytest.raises(GeometryError):
        reflect([1.0, 0.0], [1.0, 0.0])          # outgoing, not incoming


@settings(max_examples=50)
@given(theta=st.floats(0.0, 2.0 * math.pi), psi=st.floats(0.0, 2.0 * math.pi))
def test_reflect_preserves_norm_and_flips_normal_part(theta, psi):
    n = np.array([math.cos(psi), math.sin(psi)])
    v = np.array([math.cos(theta), math.sin(theta)])
    if float(v @ n) > 0.0:
        v = -v
    out = reflect(v, n)
    assert math.hypot(out[0], out[1]) == pytest.approx(1.0, abs=1e-12)
    assert float(out @ n) == pytest.approx(-float(v @ n), abs=1e-12)
    t = np.array([-n[1], n[0]])
    assert float(out @ t) == pytest.approx(float(v @ t), abs=1e-12)


def test_first_intersection_circle_closed_form():
    fam = static_two_circle()
    hit = first_intersection(np.array([-3.0, 0.0]), np.array([1.0, 0.0]),
                             fam, 0.0)
    assert hit is not None and hit.obstacle == 1
    assert hit.t == pytest.approx(2.0, abs=1e-12)
    assert hit.u == pytest.approx(math.pi, abs=1e-12)
    assert not hit.grazing


def test_first_intersection_picks_nearest_obstacle():
    fam = static_two_circle()
    hit = first_intersection(np.array([10.0, 0.0]), np.array([-1.0, 0.0]),
                             fam, 0.0)
    assert hit.obstacle == 2
    assert hit.t == pytest.approx(5.0, abs=1e-12)


def test_first_intersection_exclude_skips_source_obstacle():
    fam = static_two_circle()
    hit = first_intersection(np.array([1.0, 0.0]), np.array([1.0, 0.0]),
                             fam, 0.0, exclude=1)
    assert hit.obstacle == 2
    assert hit.t == pytest.approx(2.0, abs=1e-12)


def test_first_intersection_escape_returns_none():
    fam = static_two_circle()
    assert first_intersection(np.array([0.0, 5.0]), np.array([0.0, 1.0]),
                              fam, 0.0) is None


def test_first_intersection_flags_grazing():
    fam = static_two_circle()
    hit = first_intersection(np.array([-3.0, 1.0]), np.array([1.0, 0.0]),
                             fam, 0.0)
    assert hit is not None and hit.grazing


def test_first_intersection_ellipse_point_on_boundary():
    fam = DeformationFamily(
        (circle(0.0, 0.0, 1.0), circle(8.0, 0.0, 1.0),
         ellipse(4.0, 5.0, 1.7, 0.8, rotation=0.4)),
        0.2, mode="general")
    q = np.array([4.0, -2.0])
    v = np.array([0.0, 1.0])
    hit = first_intersection(q, v, fam, 0.1)
    assert hit is not None and hit.obstacle == 3
    p = partial_jet(fam, 3, hit.u, 0.1, 0, 0)
    np.testing.assert_allclose(p, q + hit.t * v, atol=1e-12)


@settings(max_examples=50)
@given(ang=st.floats(-0.2, 0.2), off=st.floats(-0.5, 0.5))
def test_hits_land_on_the_boundary(ang, off):
    fam = static_three_circle()
    q = np.array([-4.0, off])
    v = np.array([math.cos(ang), math.sin(ang)])
    hit = first_intersection(q, v, fam, 0.0)
    if hit is None or hit.grazing:
        return
    p = partial_jet(fam, hit.obstacle, hit.u, 0.0, 0, 0)
    np.testing.assert_allclose(p, q + hit.t * v, atol=1e-10)
    assert hit.t > 0.0


def test_billiard_step_period_two():
    fam = static_two_circle()
    state = PhaseState(1, 0.0, (1.0, 0.0), 0.0)
    nxt, hit = billiard_step(state, fam)
    assert hit.obstacle == 2
    assert hit.t == pytest.approx(2.0, abs=1e-12)
    assert nxt.u == pytest.approx(math.pi, abs=1e-12)
    np.testing.assert_allclose(nxt.direction, [-1.0, 0.0], atol=1e-12)


def test_billiard_step_escape_and_grazing():
    fam = static_two_circle()
    away = PhaseState(1, math.pi / 2, (0.0, 1.0), 0.0)
    assert billiard_step(away, fam) == (None, None)
    u = math.pi / 2 - 1e-13   # leaves almost tangentially toward obstacle 2
    state = PhaseState(1, u, (1.0, 0.0), 0.0)
    with pytest.raises((GrazingError, GeometryError)):
        for _ in range(4):
            state, _ = billiard_step(state, fam)


def test_phase_state_validates_direction():
    with pytest.raises(GeometryError):
        PhaseState(1, 0.0, (1.0, 1.0), 0.0)


def test_trajectory_period_two_bounce():
    fam = static_two_circle()
    traj = trajectory(PhaseState(1, 0.0, (1.0, 0.0), 0.0), fam, 6)
    assert not traj.escaped and not traj.grazing
    assert len(traj.records) == 7
    for j, rec in enumerate(traj.records):
        assert rec.obstacle == 1 + j % 2
        assert rec.kappa == pytest.approx(1.0, abs=1e-12)
        assert rec.t == pytest.approx(2.0 * j, abs=1e-10)
    assert math.isnan(traj.records[-1].d)
    assert traj.records[0].d == pytest.approx(2.0, abs=1e-12)
    assert traj.records[2].phi == pytest.approx(0.0, abs=1e-7)


def test_trajectory_escapes_from_open_table():
    fam = static_three_circle()
    # fire outward from the far side of obstacle 1
    traj = trajectory(PhaseState(1, math.pi, (-1.0, 0.0), 0.0), fam, 10)
    assert traj.escaped
    assert len(traj.records) == 1
