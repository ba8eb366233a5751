import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import bump_u
from critwave.fields import (
    FieldDomainError,
    FieldState,
    PreconditionError,
    RadialGrid,
    check_pointwise_bound,
    energy,
    f_functional,
    h_norm_sq,
    lemma4_check,
    load_checkpoint,
    membership_V,
    save_checkpoint,
    sup_bound_check,
    total_energy,
    u_r_values,
    u_values,
    write_snapshot_csv,
)
from critwave.geometry import make_builtin

SPHERE = make_builtin("sphere")
YM = make_builtin("yang-mills-shifted")


def test_grid():
    g = RadialGrid(100, 5.0)
    assert g.h == 0.05 and g.r[0] == 0.0 and g.r[-1] == pytest.approx(5.0)
    with pytest.raises(ValueError):
        RadialGrid(8, 1.0)
    with pytest.raises(ValueError):
        RadialGrid(32, 0.0)


def test_u_from_v():
    grid = RadialGrid(20, 20.0)
    s = FieldState(grid, 0.0, np.ones(21), np.zeros(21), 1)
    np.testing.assert_array_equal(u_values(s), np.arange(21.0))
    assert not np.any(u_values(FieldState.zeros(grid, 2)))


def test_v_of_Q_gives_Q():
    grid = RadialGrid(1000, 10.0)
    r = grid.r
    v = np.where(r > 0, 2 * np.arctan(r) / np.where(r > 0, r, 1), 2.0)
    s = FieldState(grid, 0.0, v, np.zeros_like(v), 1)
    np.testing.assert_allclose(u_values(s), 2 * np.arctan(r), atol=1e-15)


def test_array_length_checked():
    with pytest.raises(ValueError):
        FieldState(RadialGrid(16, 1.0), 0.0, np.zeros(5), np.zeros(5), 1)


def test_zero_energy():
    s = FieldState.zeros(RadialGrid(64, 4.0), 1)
    rep = energy(s, SPHERE)
    assert rep.e_total == rep.e_kinetic == rep.e_potential == rep.f_functional == rep.h_norm_sq == 0.0


def test_energy_domain():
    s = FieldState.zeros(RadialGrid(64, 4.0), 1)
    with pytest.raises(FieldDomainError):
        energy(s, SPHERE, 0.0, 5.0)
    with pytest.raises(FieldDomainError):
        energy(s, SPHERE, 2.0, 1.0)


def test_energy_report_consistent():
    grid = RadialGrid(2000, 10.0)
    u = bump_u(grid.r, 1, 0.8)
    s = FieldState.from_u(grid, u, 0.3 * u, k=1)
    rep = energy(s, SPHERE, partials=[(0.0, 2.0), (2.0, 10.0)])
    assert rep.e_total == pytest.approx(rep.e_kinetic + rep.e_potential, rel=1e-14)
    assert rep.e_total == pytest.approx(total_energy(s, SPHERE), rel=1e-14)
    assert sum(p[2] for p in rep.partials) == pytest.approx(rep.e_total, rel=1e-3)
    assert rep.sup_u == pytest.approx(np.max(np.abs(u)))


@pytest.mark.parametrize("tag,target", [("sphere", 4.0), ("yang-mills-shifted", 8.0 / 3.0)])
def test_sampled_Q_energy(tag, target):
    from critwave.harmonic_map import solve_Q

    geom = make_builtin(tag)
    grid = RadialGrid(1_000_000, 1000.0)
    s = FieldState.from_u(grid, solve_Q(geom)(grid.r), k=geom.k)
    assert total_energy(s, geom) == pytest.approx(target, abs=2e-3)


def test_F_of_Q_matches_log_quadrature(sphere_Q):
    # F(Q) ~ 2 pi / R is small, so R sits exactly on an s-node
    R = math.exp(5.3)
    grid = RadialGrid(400_000, R)
    s = FieldState.from_u(grid, sphere_Q(grid.r), k=1)
    on_grid = f_functional(s, SPHERE)
    m = sphere_Q.s_grid <= 5.3 + 1e-9
    q, dq = sphere_Q.q_values[m], sphere_Q.dqds[m]
    in_s = np.trapezoid(dq**2 + q * np.sin(2 * q) / 2, dx=sphere_Q.ds)
    assert on_grid == pytest.approx(in_s, rel=1e-4)


def test_small_data_F_over_E():
    grid = RadialGrid(4000, 8.0)
    r = grid.r
    s = FieldState.from_u(grid, 1e-3 * r * np.exp(-r * r), k=1)
    ratio = f_functional(s, SPHERE) / total_energy(s, SPHERE)
    assert 0.9 <= ratio <= 1.0


def test_energy_refinement_at_least_second_order():
    energies = []
    for n in (500, 1000, 2000):
        grid = RadialGrid(n, 10.0)
        r = grid.r
        energies.append(total_energy(FieldState.from_u(grid, 0.7 * r * np.exp(-r * r), k=1), SPHERE))
    e1, e2 = abs(energies[0] - energies[1]), abs(energies[1] - energies[2])
    assert e2 <= e1 / 3.5


def test_pointwise_zero_state():
    pb = check_pointwise_bound(FieldState.zeros(RadialGrid(64, 4.0), 1), SPHERE)
    assert pb.violation == 0.0 and pb.lhs == 0.0 and pb.rhs == 0.0


@pytest.mark.parametrize("tag", ["sphere", "yang-mills-shifted"])
def test_pointwise_equality_on_Q(tag):
    from critwave.harmonic_map import solve_Q

    geom = make_builtin(tag)
    grid = RadialGrid(20_000, 20.0)
    pb = check_pointwise_bound(FieldState.from_u(grid, solve_Q(geom)(grid.r), k=geom.k), geom)
    assert pb.violation <= 1e-6
    # pairs (0, r_j): both sides equal up to quadrature
    lhs, rhs = pb.lhs_matrix[0, 1:], pb.rhs_matrix[0, 1:]
    assert np.max(np.abs(lhs / rhs - 1.0)) <= 1e-5


@st.composite
def bump_states(draw, k=None):
    k = draw(st.sampled_from([1, 2])) if k is None else k
    grid = RadialGrid(2000, 12.0)
    n = draw(st.integers(1, 3))
    u = np.zeros_like(grid.r)
    ut = np.zeros_like(grid.r)
    for _ in range(n):
        a = draw(st.floats(-1.0, 1.0))
        b = draw(st.floats(0.5, 10.0))
        c = draw(st.floats(0.0, 6.0))
        bump = grid.r**k * np.exp(-b * (grid.r - c) ** 2)
        u += a * bump
        ut += draw(st.floats(-1.0, 1.0)) * bump
    return FieldState.from_u(grid, u, ut, k=k)


@given(bump_states())
@settings(max_examples=40, deadline=None)
def test_pointwise_bound_property(state):
    geom = SPHERE if state.k == 1 else YM
    assert check_pointwise_bound(state, geom).violation <= 1e-6


@given(bump_states())
@settings(max_examples=40, deadline=None)
def test_u_vanishes_at_origin(state):
    assert u_values(state)[0] == 0.0
    assert h_norm_sq(state) >= 0.0


@given(bump_states())
@settings(max_examples=60, deadline=None)
def test_lemma4_proof_inequalities(state):
    c = lemma4_check(state)
    scale = max(c.h_norm, c.v_gradient, 1e-300)
    assert c.margin_upper >= -1e-9 * scale
    assert c.margin_lower >= -1e-9 * scale


def test_lemma4_examples():
    z = lemma4_check(FieldState.zeros(RadialGrid(64, 4.0), 1))
    assert z.v_gradient == z.h_norm == z.margin_lower == z.margin_upper == 0.0
    for k in (1, 2):
        grid = RadialGrid(4000, 8.0)
        c = lemma4_check(FieldState.from_u(grid, grid.r**k * np.exp(-grid.r**2), k=k))
        assert c.margin_upper > 0 and c.margin_lower > 0
        assert set(c.displayed) == {"lower", "upper"}


def test_sup_bound():
    grid = RadialGrid(4000, 10.0)
    s = FieldState.from_u(grid, bump_u(grid.r, 1, 0.6), k=1)
    sup, K = sup_bound_check(s, SPHERE)
    assert sup <= K < SPHERE.c_star


def test_sup_bound_needs_endpoints(sphere_Q):
    grid = RadialGrid(1000, 10.0)
    with pytest.raises(PreconditionError):
        sup_bound_check(FieldState.from_u(grid, sphere_Q(grid.r), k=1), SPHERE)


def test_membership(sphere_Q):
    grid = RadialGrid(4000, 10.0)
    assert membership_V(FieldState.zeros(grid, 1), SPHERE, 0.4)
    assert not membership_V(FieldState.from_u(grid, sphere_Q(grid.r), k=1), SPHERE, 0.4)
    r = grid.r
    assert membership_V(FieldState.from_u(grid, 0.01 * r * np.exp(-r * r), k=1), SPHERE, 0.4)
    with pytest.raises(ValueError):
        membership_V(FieldState.zeros(grid, 1), SPHERE, 0.0)


def test_snapshot_csv_and_checkpoint(tmp_path):
    grid = RadialGrid(64, 4.0)
    s = FieldState.from_u(grid, bump_u(grid.r, 2), k=2, t=1.25)
    write_snapshot_csv(s, tmp_path / "s.csv")
    with open(tmp_path / "s.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["r", "v", "v_t", "u", "u_t"] and len(rows) == 66
    assert float(rows[10][1]) == s.v[9]
    save_checkpoint(s, tmp_path / "c.npz")
    back = load_checkpoint(tmp_path / "c.npz")
    assert back.t == 1.25 and back.k == 2 and back.grid == grid
    np.testing.assert_array_equal(back.v, s.v)


def test_u_r_of_linear_profile():
    grid = RadialGrid(100, 1.0)
    s = FieldState.from_u(grid, 3.0 * grid.r, k=1)
    np.testing.assert_allclose(u_r_values(s), 3.0, atol=1e-12)
