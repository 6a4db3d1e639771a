"""Three-channel plane-wave scattering off the Raman slab.

Outside the slab the channels are uncoupled plane waves; inside, the field
is expanded on the dressed states.  The interior amplitudes are stored in
the rescaled basis ``a * exp(p (x - L)) + b * exp(-p x)`` so that every
exponential evaluated on ``[0, L]`` has modulus at most one.
"""

from dataclasses import dataclass

import numpy as np

from . import linalg
from .model import (
    DegenerateCoupling,
    effective_detunings,
    dressed_decomposition,
    interior_exponent,
)


class SingularSystem(ArithmeticError):
    """The matching system is exactly singular at this parameter point."""


class OverflowRisk(ValueError):
    pass


class SingularMatrix(ArithmeticError):
    pass


@dataclass(frozen=True)
class ChannelWavevectors:
    k1: complex
    k2: complex
    k3: complex

    @property
    def array(self):
        return np.array([self.k1, self.k2, self.k3], dtype=complex)


@dataclass(frozen=True)
class FluxSummary:
    reflected: np.ndarray
    transmitted: np.ndarray
    total: float


@dataclass(frozen=True)
class ScatteringResult:
    """Reflection and transmission amplitudes for one incident plane wave.

    ``T`` multiplies ``exp(i k x)`` for ``x >= L``; ``T_face`` is the same
    wave's amplitude at the exit face, ``T * exp(i k L)``.  ``interior``
    holds ``(a+, a0, a-, b+, b0, b-)`` in the rescaled basis.
    """

    R: np.ndarray
    T: np.ndarray
    T_face: np.ndarray
    interior: np.ndarray
    channels: ChannelWavevectors
    incident: np.ndarray
    prob_R: np.ndarray
    prob_T: np.ndarray
    total_flux: float


def channel_wavevectors(kx0, det):
    """Exterior wavevectors; ``k3`` sits on the Im >= 0 branch."""
    k3 = np.sqrt(complex(kx0**2 + 2.0 * det.Delta))
    if k3.imag < 0 or (k3.imag == 0 and k3.real < 0):
        k3 = -k3
    return ChannelWavevectors(complex(kx0), complex(kx0), k3)


def interior_basis(params, det, kx):
    """Eigenvectors, eigenvalues and exponents of the slab potential.

    Falls back to the identity basis when both Rabi frequencies vanish.
    """
    try:
        dd = dressed_decomposition(params, det, kx)
        return dd.U, dd.eigenvalues, dd.exponents
    except DegenerateCoupling:
        V = np.array([0.0, 0.0, -det.Delta], dtype=complex)
        p = np.array([interior_exponent(v, kx) for v in V])
        p[0] = p[1] = 1j * kx
        return np.eye(3, dtype=complex), V, p


def matching_system(U, p, k, L):
    """Assemble the 12x12 continuity system.

    Unknown ordering is ``(R, T_face, a, b)``; the right-hand side for a
    unit incident amplitude in channel ``j`` is column ``j`` of the
    returned ``rhs`` matrix.
    """
    e = np.exp(-p * L)
    K = np.diag(1j * k)
    UP = U * p
    I = np.eye(3)
    Z = np.zeros((3, 3))
    M = np.block([
        [I, Z, -U * e, -U],
        [-K, Z, -UP * e, UP],
        [Z, -I, U, U * e],
        [Z, -K, UP, -UP * e],
    ])
    rhs = np.concatenate([-I, -K, Z, Z]).astype(complex)
    return M, rhs


def matching_systems(U, p, k, L):
    """Stacked version of :func:`matching_system` for ``n`` points.

    ``U`` is ``(n, 3, 3)``; ``p`` and ``k`` are ``(n, 3)``.
    """
    n = U.shape[0]
    e = np.exp(-p * L)[:, None, :]
    UP = U * p[:, None, :]
    I = np.eye(3)
    M = np.zeros((n, 12, 12), dtype=complex)
    M[:, 0:3, 0:3] = I
    M[:, 0:3, 6:9] = -U * e
    M[:, 0:3, 9:12] = -U
    M[:, 3:6, 0:3] = -1j * k[:, :, None] * I
    M[:, 3:6, 6:9] = -UP * e
    M[:, 3:6, 9:12] = UP
    M[:, 6:9, 3:6] = -I
    M[:, 6:9, 6:9] = U
    M[:, 6:9, 9:12] = U * e
    M[:, 9:12, 3:6] = -1j * k[:, :, None] * I
    M[:, 9:12, 6:9] = UP
    M[:, 9:12, 9:12] = -UP * e
    rhs = np.zeros((n, 12, 3), dtype=complex)
    rhs[:, 0:3] = -I
    rhs[:, 3:6] = -1j * k[:, :, None] * I
    return M, rhs


def solve_channels_many(params, kxs, kys):
    """Solve the matching problem at many ``(kx, ky)`` points together.

    Returns ``(R, T_face, interior, k, singular)`` stacked along the first
    axis; rows flagged ``singular`` are NaN.
    """
    kxs = np.atleast_1d(np.asarray(kxs, dtype=float))
    kys = np.broadcast_to(np.asarray(kys, dtype=float), kxs.shape)
    n = kxs.size
    U = np.empty((n, 3, 3), dtype=complex)
    p = np.empty((n, 3), dtype=complex)
    k = np.empty((n, 3), dtype=complex)
    for i, (kx, ky) in enumerate(zip(kxs, kys)):
        det = effective_detunings(params, ky)
        k[i] = channel_wavevectors(kx, det).array
        U[i], _, p[i] = interior_basis(params, det, kx)
    M, rhs = matching_systems(U, p, k, params.slab_length)
    x, singular = linalg.solve_batched(M, rhs)
    return x[:, 0:3], x[:, 3:6], x[:, 6:12], k, singular


def solve_channels(params, kx, ky):
    """Solve for all three unit incident channels at once.

    Returns ``(R, T_face, interior, k)`` where column ``j`` of each matrix
    answers incidence in channel ``j``.
    """
    R, Tf, interior, k, singular = solve_channels_many(params, [kx], [ky])
    if singular[0]:
        raise SingularSystem(f"matching system singular at kx={kx}, ky={ky}")
    return R[0], Tf[0], interior[0], k[0]


def flux_fractions(R, T_face, k, In):
    """Per-channel outgoing probability flux relative to the incident flux.

    Closed channels carry no flux.  For a lossy |3> channel the flux is
    evaluated at the slab faces, where the outgoing amplitudes are ``R`` and
    ``T_face``.
    """
    kr = np.real(k)
    incoming = np.sum(kr * np.abs(In) ** 2)
    if incoming <= 0:
        raise ValueError("incident wave carries no flux")
    prob_R = kr * np.abs(R) ** 2 / incoming
    prob_T = kr * np.abs(T_face) ** 2 / incoming
    return prob_R, prob_T, float(np.sum(prob_R) + np.sum(prob_T))


def _result(params, kx, ky, In):
    R, Tf, interior, k = solve_channels(params, kx, ky)
    R, Tf, interior = R @ In, Tf @ In, interior @ In
    with np.errstate(over="ignore", invalid="ignore"):
        T = Tf * np.exp(-1j * k * params.slab_length)
    prob_R, prob_T, total = flux_fractions(R, Tf, k, In)
    return ScatteringResult(
        R=R,
        T=T,
        T_face=Tf,
        interior=interior,
        channels=ChannelWavevectors(*k),
        incident=In,
        prob_R=prob_R,
        prob_T=prob_T,
        total_flux=total,
    )


def solve_scattering(params, wave):
    return _result(params, wave.kx0, wave.ky0, wave.vector)


def solve_at(params, kx, ky, In):
    """Scattering for an explicit wavevector ``(kx, ky)``; used by the shift
    finite differences, which step off the ``k0``/``theta`` grid."""
    return _result(params, kx, ky, np.asarray(In, dtype=complex))


def flux_balance(result, wave=None):
    In = result.incident if wave is None else wave.vector
    prob_R, prob_T, total = flux_fractions(
        result.R, result.T_face, result.channels.array, In
    )
    return FluxSummary(reflected=prob_R, transmitted=prob_T, total=total)


def matching_residual(params, kx, ky, result):
    """Largest relative mismatch of value and slope at both slab faces."""
    det = effective_detunings(params, ky)
    U, _, p = interior_basis(params, det, kx)
    k = result.channels.array
    L = params.slab_length
    a, b = result.interior[:3], result.interior[3:]
    e = np.exp(-p * L)
    In, R, Tf = result.incident, result.R, result.T_face
    res = [
        In + R - U @ (a * e + b),
        1j * k * (In - R) - U @ (p * (a * e - b)),
        U @ (a + b * e) - Tf,
        U @ (p * (a - b * e)) - 1j * k * Tf,
    ]
    scale = max(1.0, np.max(np.abs(k))) * max(1.0, np.max(np.abs(p)))
    return max(float(np.max(np.abs(r))) for r in res) / scale


def closed_form_TR(params, wave, max_exponent=50.0):
    """Transmission and reflection from the explicit matrix formulas.

    Uses the unscaled exponentials ``exp(+-pL)``, so it is only offered
    while ``max Re(p) L <= max_exponent``.  Returns ``(T, R)`` with ``T``
    the coefficient of ``exp(i k x)`` beyond the slab.
    """
    kx, ky = wave.kx0, wave.ky0
    det = effective_detunings(params, ky)
    k = channel_wavevectors(kx, det).array
    U, _, p = interior_basis(params, det, kx)
    L = params.slab_length
    if np.max(p.real) * L > max_exponent:
        raise OverflowRisk(
            f"max Re(p) L = {np.max(p.real) * L:.3g} exceeds {max_exponent}"
        )
    In = wave.vector
    K = np.diag(1j * k)
    P = np.diag(p)
    W = np.diag(np.exp(p * L))
    W_inv = np.diag(np.exp(-p * L))
    E = np.exp(1j * k * L)
    try:
        U_inv = linalg.inv(U)
        P_inv = linalg.inv(P)
    except linalg.SingularMatrixError as err:
        raise SingularMatrix(str(err)) from err
    plus = U_inv + P_inv @ U_inv @ K
    minus = U_inv - P_inv @ U_inv @ K
    F = (K @ U + U @ P) @ W_inv @ plus + (K @ U - U @ P) @ W @ minus
    G = (K @ U - U @ P) @ W @ minus + (K @ U + U @ P) @ W_inv @ plus
    D = (K @ U - U @ P) @ W @ plus + (K @ U + U @ P) @ W_inv @ minus
    try:
        T_face = 4.0 * linalg.solve(F, K @ In)
        R = -linalg.solve(G, D @ In)
    except linalg.SingularMatrixError as err:
        raise SingularMatrix(str(err)) from err
    return T_face / E, R
