from dataclasses import replace

import numpy as np
import pytest

from ghshift.model import IncidentWave, SlabParams
from ghshift.shifts import (
    REFLECTED,
    TRANSMITTED,
    UndefinedPhase,
    amplitude_gradient,
    lateral_shift_kspace,
    lateral_shift_theta,
    shift_row,
    shifts_kspace,
    shifts_theta,
    sweep,
)

from conftest import random_slab


def test_routes_agree_on_random_draws(rng):
    for _ in range(10):
        p = random_slab(rng)
        k0, th = rng.uniform(0.4, 1.2), rng.uniform(0.05, 1.3)
        a = np.concatenate(shifts_theta(p, k0, th, [1, 0, 0]))
        b = np.concatenate(shifts_kspace(p, k0, th, [1, 0, 0]))
        ok = np.isfinite(a) & np.isfinite(b)
        assert np.all(np.abs(a - b)[ok] < 1e-4)


def test_empty_slab_has_only_geometric_shift():
    p = SlabParams(0, 0, 100, 0.1, 30)
    th = 0.5
    D_t = lateral_shift_theta(p, IncidentWave(0.8, th), 0, TRANSMITTED)
    assert D_t == pytest.approx(30 * np.tan(th), abs=1e-6)


def test_vanishing_coefficient_raises():
    p = SlabParams(0, 0, 100, 0.1, 30)
    with pytest.raises(UndefinedPhase):
        lateral_shift_theta(p, IncidentWave(0.8, 0.5), 0, REFLECTED)


def test_rejects_bad_kind_and_angle(fig2):
    with pytest.raises(ValueError):
        lateral_shift_kspace(fig2.slab, IncidentWave(0.8, 0.3), 0, "sideways")
    with pytest.raises(ValueError):
        lateral_shift_theta(fig2.slab, IncidentWave(0.8, np.pi / 2 - 1e-4), 0, REFLECTED)


def test_step_halving_converges(fig2):
    th = np.radians(20)
    a = np.concatenate(shifts_theta(fig2.slab, 0.8, th, [1, 0, 0], step=1e-4, stencil=5))
    b = np.concatenate(shifts_theta(fig2.slab, 0.8, th, [1, 0, 0], step=5e-5, stencil=5))
    assert np.all(np.abs(a - b) < 1e-6 * np.abs(a))


def test_superposition_channels_match():
    p = SlabParams(3.5, 3.5, 100, 0.1, 30, 0.1, 0.1)
    In = np.array([1, 1, 0]) / np.sqrt(2)
    for th in np.radians([10, 35, 55, 70]):
        row = shift_row(p, 0.8, th, In)
        assert abs(row.D_t[0] - row.D_t[1]) < 1e-8 * max(1, abs(row.D_t[0]))
        assert abs(row.prob_T[0] - row.prob_T[1]) < 1e-8


def test_reflected_shifts_degenerate_across_ground_channels():
    # both ground channels reflect with a common phase gradient
    base = SlabParams(2.5, 3.5, 100, 0.0, 30, 0.1, 0.1)
    th = np.radians(25)
    for d0 in (100, 300, 1000):
        D_r, _ = shifts_theta(replace(base, delta0=d0), 0.8, th, [1, 0, 0], stencil=5)
        assert abs(D_r[0] - D_r[1]) < 1e-4 * max(1.0, abs(D_r[0]))


def test_amplitude_gradient_finite(fig2):
    g = amplitude_gradient(fig2.slab, IncidentWave(0.8, 0.3), 0, TRANSMITTED)
    assert g.shape == (2,) and np.isfinite(g).all()


def test_sweep_order_and_workers(fig3):
    th = np.radians(np.linspace(0, 89.9, 600))
    one = sweep(fig3.slab, 0.8, th, [1, 0, 0], workers=1)
    two = sweep(fig3.slab, 0.8, th, [1, 0, 0], workers=2)
    assert [r.theta for r in one] == list(th)
    for a, b in zip(one, two):
        assert np.array_equal(a.D_t, b.D_t, equal_nan=True)
        assert np.array_equal(a.prob_R, b.prob_R)


def test_sweep_row_equals_single_row(fig2):
    th = np.radians([5.0, 33.0, 71.0])
    rows = sweep(fig2.slab, 0.8, th, [1, 0, 0])
    for t, row in zip(th, rows):
        D_r, D_t = shifts_theta(fig2.slab, 0.8, t, [1, 0, 0])
        assert np.array_equal(row.D_t, D_t, equal_nan=True)
        assert np.array_equal(row.D_r, D_r, equal_nan=True)


def test_sweep_edge_cases(fig2):
    assert sweep(fig2.slab, 0.8, [], [1, 0, 0]) == []
    with pytest.raises(ValueError):
        sweep(fig2.slab, 0.8, [0.3, 0.2], [1, 0, 0])
    with pytest.raises(ValueError):
        sweep(fig2.slab, 0.8, [0.1, np.pi / 2], [1, 0, 0])


def test_nan_marks_missing_channel():
    row = shift_row(SlabParams(0, 0, 100, 0.1, 30), 0.8, 0.3, [1, 0, 0])
    assert np.isnan(row.D_r).all()
    assert np.isnan(row.D_t[1:]).all() and np.isfinite(row.D_t[0])
