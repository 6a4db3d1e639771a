import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghshift.model import (
    DegenerateCoupling,
    IncidentWave,
    SlabParams,
    critical_angle,
    dressed_decomposition,
    dressed_overlap_diagnostics,
    effective_detunings,
    interior_exponent,
    potential_matrix,
)


def test_rejects_bad_parameters():
    with pytest.raises(ValueError):
        SlabParams(1, 1, 100, 0.1, 0.0)
    with pytest.raises(ValueError):
        SlabParams(1, 1, 100, -0.1, 1.0)
    with pytest.raises(ValueError):
        IncidentWave(0.8, np.pi / 2)


def test_incident_amplitudes_normalized():
    wave = IncidentWave(0.8, 0.3, (2, 0, 0))
    assert np.allclose(wave.vector, [1, 0, 0])


def test_recoil_shift(fig2):
    ky = 0.4
    det = effective_detunings(fig2.slab, ky)
    assert det.Delta == pytest.approx(100 - (0.1 * 0.4 + 0.005) + 0.05j)
    assert det.delta == 0.0


@settings(max_examples=50, deadline=None)
@given(
    o1=st.floats(0.1, 5), o2=st.floats(0.1, 5), d0=st.floats(-200, 200), g=st.floats(0, 0.5),
    ky=st.floats(0, 1), kx=st.floats(0.05, 1.5),
)
def test_dressed_states_diagonalize(o1, o2, d0, g, ky, kx):
    p = SlabParams(o1, o2, d0, g, 10.0, 0.1, 0.1)
    det = effective_detunings(p, ky)
    dd = dressed_decomposition(p, det, kx)
    V = potential_matrix(p, det)
    assert np.allclose(V @ dd.U, dd.U * dd.eigenvalues, atol=1e-9 * max(1, abs(d0)))
    assert np.allclose(dd.U_inv @ dd.U, np.eye(3), atol=1e-9)
    assert np.all(dd.exponents.real >= 0)
    assert np.allclose(dd.exponents**2, 2 * dd.eigenvalues - kx**2, atol=1e-9 * max(1, abs(d0)))


def test_exponent_branch():
    assert interior_exponent(0.0, 0.5) == pytest.approx(0.5j)
    assert interior_exponent(1.0, 0.0).real > 0


def test_degenerate_coupling():
    p = SlabParams(0, 0, 100, 0, 1.0)
    with pytest.raises(DegenerateCoupling):
        dressed_decomposition(p, effective_detunings(p, 0.0), 0.5)


def test_critical_angle_self_consistent(fig3):
    th = critical_angle(fig3.slab, fig3.k0)
    det = effective_detunings(fig3.slab, fig3.k0 * np.sin(th))
    dd = dressed_decomposition(fig3.slab, det, fig3.k0 * np.cos(th))
    assert (fig3.k0 * np.cos(th)) ** 2 == pytest.approx(2 * dd.V_plus.real, rel=1e-10)
    assert 60 < np.degrees(th) < 68


def test_overlaps_improve_with_detuning(fig3):
    from dataclasses import replace

    vals = []
    for d in (100, 300, 1000):
        p = replace(fig3.slab, delta0=d)
        vals.append(dressed_overlap_diagnostics(p, effective_detunings(p, 0.0)).minimum)
    assert vals[0] > 0.999
    assert vals[0] < vals[1] < vals[2]
