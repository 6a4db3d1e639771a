"""Physical parameters of the Raman slab and its dressed-state structure.

Units are dimensionless with hbar = m = 1.  The internal states are ordered
(|1>, |2>, |3>) with |3> the excited state; dressed quantities are ordered
(+, 0, -).
"""

from dataclasses import dataclass

import numpy as np

from . import linalg


class DegenerateCoupling(ValueError):
    """Both Rabi frequencies vanish; the potential is already diagonal."""


class NonConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class SlabParams:
    """Inputs describing the laser slab occupying ``0 <= x <= slab_length``.

    ``kL1`` and ``kL2`` are the y-wavevectors of the two Raman beams.
    """

    omega1: float
    omega2: float
    delta0: float
    gamma: float
    slab_length: float
    kL1: float = 0.0
    kL2: float = 0.0

    def __post_init__(self):
        if not self.slab_length > 0:
            raise ValueError(f"slab_length must be positive, got {self.slab_length}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        if self.omega1 < 0 or self.omega2 < 0:
            raise ValueError("Rabi frequencies must be non-negative")

    @property
    def coupled(self):
        return self.omega1**2 + self.omega2**2 > 0


@dataclass(frozen=True)
class IncidentWave:
    """Plane wave of magnitude ``k0`` hitting the slab at angle ``theta``.

    ``amplitudes`` are normalized on construction.
    """

    k0: float
    theta: float
    amplitudes: tuple = (1.0, 0.0, 0.0)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (3,):
            raise ValueError("amplitudes must be a 3-vector")
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ValueError("amplitudes must not all vanish")
        if not self.k0 > 0:
            raise ValueError(f"k0 must be positive, got {self.k0}")
        if not 0 <= self.theta < np.pi / 2:
            raise ValueError(f"theta must lie in [0, pi/2), got {self.theta}")
        object.__setattr__(self, "amplitudes", tuple(complex(a) for a in amps / norm))

    @property
    def kx0(self):
        return self.k0 * np.cos(self.theta)

    @property
    def ky0(self):
        return self.k0 * np.sin(self.theta)

    @property
    def vector(self):
        return np.array(self.amplitudes, dtype=complex)


@dataclass(frozen=True)
class EffectiveDetunings:
    """``Delta`` enters the potential; ``delta`` is pinned to zero.

    ``delta_raw`` is the recoil-shifted two-photon detuning the beams would
    produce with ``delta0 = 0``, kept only for diagnostics.
    """

    Delta: complex
    delta: float = 0.0
    delta_raw: float = 0.0


@dataclass(frozen=True)
class DressedDecomposition:
    V_plus: complex
    V_zero: complex
    V_minus: complex
    Delta_tilde: complex
    U: np.ndarray
    p_plus: complex
    p_zero: complex
    p_minus: complex

    @property
    def eigenvalues(self):
        return np.array([self.V_plus, self.V_zero, self.V_minus])

    @property
    def exponents(self):
        return np.array([self.p_plus, self.p_zero, self.p_minus])

    @property
    def U_inv(self):
        return linalg.inv(self.U)


def effective_detunings(params, ky):
    recoil = (2.0 * params.kL1 * ky + params.kL1**2) / 2.0
    Delta = complex(params.delta0 - recoil, params.gamma / 2.0)
    raw = ky**2 / 2.0 - (params.kL1 + params.kL2 + ky) ** 2 / 2.0
    return EffectiveDetunings(Delta=Delta, delta=0.0, delta_raw=raw)


def potential_matrix(params, det):
    o1, o2 = params.omega1, params.omega2
    return -0.5 * np.array(
        [[0, 0, o1], [0, 2 * det.delta, o2], [o1, o2, 2 * det.Delta]], dtype=complex
    )


def interior_exponent(V, kx0):
    """``sqrt(2 V - kx0**2)`` on the branch Re >= 0, ties broken by Im >= 0."""
    p = np.sqrt(complex(2.0 * V - kx0**2))
    if p.real < 0 or (p.real == 0 and p.imag < 0):
        p = -p
    return p


def _split_detuning(Delta, omega_sq):
    """Return ``(Delta - Delta_tilde, Delta + Delta_tilde, Delta_tilde)``.

    The smaller of the two combinations is obtained from their product
    ``-omega_sq`` to avoid cancellation.
    """
    Dt = np.sqrt(complex(Delta**2 + omega_sq))
    minus, plus = Delta - Dt, Delta + Dt
    if abs(minus) < abs(plus):
        minus = -omega_sq / plus
    else:
        plus = -omega_sq / minus
    return minus, plus, Dt


def dressed_decomposition(params, det, kx0):
    """Closed-form eigensystem of the coupled potential.

    Columns of ``U`` are the dressed states |+>, |0>, |-> with unit
    Euclidean norm; any column scaling leaves the scattering solution
    unchanged.
    """
    o1, o2 = params.omega1, params.omega2
    omega_sq = o1**2 + o2**2
    if omega_sq == 0:
        raise DegenerateCoupling("omega1 = omega2 = 0; potential is diagonal")
    minus, plus, Dt = _split_detuning(det.Delta, omega_sq)
    V_plus = -minus / 2.0
    V_minus = -plus / 2.0
    cols = [
        np.array([o1, o2, minus], dtype=complex),
        np.array([o2, -o1, 0.0], dtype=complex),
        np.array([o1, o2, plus], dtype=complex),
    ]
    U = np.column_stack([c / np.linalg.norm(c) for c in cols])
    return DressedDecomposition(
        V_plus=V_plus,
        V_zero=0j,
        V_minus=V_minus,
        Delta_tilde=Dt,
        U=U,
        p_plus=interior_exponent(V_plus, kx0),
        p_zero=1j * kx0,
        p_minus=interior_exponent(V_minus, kx0),
    )


def critical_angle(params, k0, tol=1e-12, max_iter=100):
    """Angle where the normal kinetic energy equals ``Re(V+)``.

    Solves ``cos(theta) = sqrt(2 Re V+(theta)) / k0`` self-consistently,
    since ``V+`` depends on ``ky = k0 sin(theta)`` through the recoil shift.
    Returns ``None`` when there is no barrier or it is never overcome.
    """
    omega_sq = params.omega1**2 + params.omega2**2
    if omega_sq == 0:
        return None

    def barrier(theta):
        det = effective_detunings(params, k0 * np.sin(theta))
        minus, _, _ = _split_detuning(det.Delta, omega_sq)
        return -minus.real / 2.0

    theta = 0.0
    for _ in range(max_iter):
        height = barrier(theta)
        if height <= 0 or 2 * height >= k0**2:
            return None
        new = float(np.arccos(np.sqrt(2 * height) / k0))
        if abs(new - theta) < tol:
            return new
        theta = new
    raise NonConvergence(f"critical angle did not converge in {max_iter} steps")


@dataclass(frozen=True)
class DressedOverlaps:
    state1: float
    state2: float
    state3: float

    @property
    def minimum(self):
        return min(self.state1, self.state2, self.state3)


def dressed_overlap_diagnostics(params, det):
    """How well |1>, |2>, |3> are approximated by far-detuned dressed combos.

    Each entry is ``|<i|v>|^2 / |v|^2`` for the approximating vector ``v``:
    ``(O1|+> + O2|0>)/O`` for |1>, ``(O2|+> - O1|0>)/O`` for |2> and ``|->``
    for |3>.
    """
    o1, o2 = params.omega1, params.omega2
    omega = np.hypot(o1, o2)
    if omega == 0:
        raise DegenerateCoupling("omega1 = omega2 = 0; no dressed basis")
    minus, plus, _ = _split_detuning(det.Delta, omega**2)
    ket_plus = np.array([o1, o2, minus], dtype=complex)
    ket_plus /= np.linalg.norm(ket_plus)
    ket_zero = np.array([o2, -o1, 0.0], dtype=complex) / omega
    ket_minus = np.array([o1, o2, plus], dtype=complex)
    ket_minus /= np.linalg.norm(ket_minus)

    def overlap(v, i):
        return float(abs(v[i]) ** 2 / np.vdot(v, v).real)

    return DressedOverlaps(
        state1=overlap((o1 * ket_plus + o2 * ket_zero) / omega, 0),
        state2=overlap((o2 * ket_plus - o1 * ket_zero) / omega, 1),
        state3=overlap(ket_minus, 2),
    )
