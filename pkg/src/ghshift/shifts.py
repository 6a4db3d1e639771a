"""Lateral (Goos-Haenchen-like) shifts from scattering phases.

Two routes are provided.  The angular route differentiates the phase with
respect to the incidence angle at fixed ``k0``::

    D = -1 / (k0 cos(theta)) * d(phi)/d(theta)

and the wavevector route differentiates with respect to ``kx`` and ``ky``
separately::

    D_t = (ky/kx) (L + d(arg T)/dkx) - d(arg T)/dky
    D_r = (ky/kx) d(arg R)/dkx - d(arg R)/dky

The transmitted phase used by the angular route is referenced to the exit
face, ``phi_t = arg(T) + kx L``, which makes the two routes identical.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .scattering import SingularSystem, flux_fractions, solve_at, solve_channels_many

REFLECTED = "reflected"
TRANSMITTED = "transmitted"

# finite-difference weights for offsets (-2, -1, 1, 2) and (-1, 1)
_STENCILS = {
    3: (np.array([-1.0, 1.0]), np.array([-0.5, 0.5])),
    5: (np.array([-2.0, -1.0, 1.0, 2.0]), np.array([1.0, -8.0, 8.0, -1.0]) / 12.0),
}

MIN_MAGNITUDE = 1e-14


class UndefinedPhase(ArithmeticError):
    """Coefficient too small for its phase (or log-magnitude) to be defined."""


@dataclass(frozen=True)
class PhaseConvention:
    """Which phases the shift formulas differentiate.

    ``transmitted_reference`` adds ``kx L`` to ``arg T`` (exit-face
    reference); ``reflected_reference`` uses ``arg R`` as is.
    """

    transmitted_reference: bool = True
    reflected_reference: bool = True


EXIT_FACE = PhaseConvention()


@dataclass
class ShiftRow:
    theta: float
    D_r: np.ndarray
    D_t: np.ndarray
    prob_R: np.ndarray
    prob_T: np.ndarray
    total_flux: float
    D_t_excess: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.D_t_excess is None:
            self.D_t_excess = np.full(3, np.nan)


def _check_kind(kind):
    if kind not in (REFLECTED, TRANSMITTED):
        raise ValueError(f"kind must be {REFLECTED!r} or {TRANSMITTED!r}, got {kind!r}")


def _coefficients(params, kx, ky, In):
    """Reflected and exit-face transmitted amplitudes plus ``Re(k)``."""
    res = solve_at(params, kx, ky, In)
    return res.R, res.T_face, res.channels.array.real


def _unwrap_about(phases, center):
    """Shift each phase by multiples of 2 pi to lie within pi of ``center``."""
    return center + np.angle(np.exp(1j * (phases - center)))


def _exit_phase(T_face, kr, kx, L):
    """``arg(T) + kx L`` computed from the exit-face amplitude."""
    return np.angle(T_face) + (kx - kr) * L


def _stencil_points(n):
    try:
        return _STENCILS[n]
    except KeyError:
        raise ValueError(f"stencil must be 3 or 5, got {n}") from None


def _derivative(values, center, weights, h):
    """Central difference of phases, unwrapped against the center value."""
    return np.sum(weights[:, None] * _unwrap_about(values, center), axis=0) / h


def _magnitude_guard(coeffs):
    mags = np.abs(coeffs)
    return np.all(mags > MIN_MAGNITUDE, axis=0)


def theta_phase_derivatives(params, k0, theta, In, step=1e-5, stencil=3):
    """d(phi_r)/d(theta) and d(phi_t)/d(theta) for all channels.

    Entries whose coefficient is too small anywhere on the stencil are NaN.
    """
    offsets, weights = _stencil_points(stencil)
    L = params.slab_length
    samples_r, samples_t = [], []
    for th in np.concatenate([[theta], theta + offsets * step]):
        kx, ky = k0 * np.cos(th), k0 * np.sin(th)
        R, Tf, kr = _coefficients(params, kx, ky, In)
        samples_r.append(R)
        samples_t.append((Tf, _exit_phase(Tf, kr, kx, L)))
    R = np.array(samples_r)
    Tf = np.array([s[0] for s in samples_t])
    phi_t = np.array([s[1] for s in samples_t])
    phi_r = np.angle(R)
    d_r = _derivative(phi_r[1:], phi_r[0], weights, step)
    d_t = _derivative(phi_t[1:], phi_t[0], weights, step)
    d_r[~_magnitude_guard(R)] = np.nan
    d_t[~_magnitude_guard(Tf)] = np.nan
    return d_r, d_t


def shifts_theta(params, k0, theta, In, step=1e-5, stencil=3):
    """Angular-route shifts ``(D_r, D_t)`` for all three channels."""
    d_r, d_t = theta_phase_derivatives(params, k0, theta, In, step, stencil)
    scale = -1.0 / (k0 * np.cos(theta))
    return scale * d_r, scale * d_t


def shifts_kspace(params, k0, theta, In, step=1e-5, stencil=3):
    """Wavevector-route shifts ``(D_r, D_t)`` for all three channels.

    ``step`` is relative to ``k0``.  Varying ``ky`` also moves the effective
    detuning through the recoil shift.
    """
    offsets, weights = _stencil_points(stencil)
    kx0, ky0 = k0 * np.cos(theta), k0 * np.sin(theta)
    h = step * k0
    L = params.slab_length

    def sample(kx, ky):
        R, Tf, kr = _coefficients(params, kx, ky, In)
        # arg of T itself, i.e. the coefficient of exp(i k x)
        return R, Tf, np.angle(Tf) - kr * L

    R0, T0, phiT0 = sample(kx0, ky0)
    grads = {}
    ok_r, ok_t = np.abs(R0) > MIN_MAGNITUDE, np.abs(T0) > MIN_MAGNITUDE
    for axis in ("x", "y"):
        Rs, phiTs = [], []
        for o in offsets:
            kx = kx0 + o * h if axis == "x" else kx0
            ky = ky0 + o * h if axis == "y" else ky0
            R, Tf, phiT = sample(kx, ky)
            ok_r &= np.abs(R) > MIN_MAGNITUDE
            ok_t &= np.abs(Tf) > MIN_MAGNITUDE
            Rs.append(R)
            phiTs.append(phiT)
        grads["r" + axis] = _derivative(np.angle(Rs), np.angle(R0), weights, h)
        grads["t" + axis] = _derivative(np.array(phiTs), phiT0, weights, h)
    ratio = ky0 / kx0
    D_r = ratio * grads["rx"] - grads["ry"]
    D_t = ratio * (L + grads["tx"]) - grads["ty"]
    D_r[~ok_r] = np.nan
    D_t[~ok_t] = np.nan
    return D_r, D_t


def _pick(values, channel, kind, theta):
    value = values[0 if kind == REFLECTED else 1][channel]
    if np.isnan(value):
        raise UndefinedPhase(
            f"{kind} coefficient in channel {channel + 1} vanishes near "
            f"theta={np.degrees(theta):.6g} deg"
        )
    return float(value)


def _check_theta(theta):
    if not 0 <= theta <= np.pi / 2 - 1e-3:
        raise ValueError(f"theta must lie in [0, pi/2 - 1e-3], got {theta}")


def lateral_shift_theta(params, wave, channel, kind, step=1e-5, stencil=3):
    """Shift of one channel from the angle derivative of its phase.

    ``channel`` is 0-based (0 -> |1>).  Transmitted shifts include the
    geometric ``L tan(theta)`` offset.
    """
    _check_kind(kind)
    _check_theta(wave.theta)
    values = shifts_theta(params, wave.k0, wave.theta, wave.vector, step, stencil)
    return _pick(values, channel, kind, wave.theta)


def lateral_shift_kspace(params, wave, channel, kind, step=1e-5, stencil=3):
    _check_kind(kind)
    _check_theta(wave.theta)
    values = shifts_kspace(params, wave.k0, wave.theta, wave.vector, step, stencil)
    return _pick(values, channel, kind, wave.theta)


def amplitude_gradient(params, wave, channel, kind, step=1e-5):
    """Gradient of ``ln|c|`` in ``(kx, ky)`` for the chosen coefficient.

    A large norm relative to the packet width flags momentum-space
    distortion of the outgoing packet.
    """
    _check_kind(kind)
    kx0, ky0 = wave.kx0, wave.ky0
    h = step * wave.k0
    pick = 0 if kind == REFLECTED else 1

    def log_mag(kx, ky):
        c = _coefficients(params, kx, ky, wave.vector)[pick][channel]
        if abs(c) <= MIN_MAGNITUDE:
            raise UndefinedPhase(f"{kind} coefficient in channel {channel + 1} vanishes")
        return np.log(abs(c))

    gx = (log_mag(kx0 + h, ky0) - log_mag(kx0 - h, ky0)) / (2 * h)
    gy = (log_mag(kx0, ky0 + h) - log_mag(kx0, ky0 - h)) / (2 * h)
    return np.array([gx, gy])


def shift_rows(params, k0, thetas, In, step=1e-5, stencil=3):
    """:class:`ShiftRow` objects for many angles from one batched solve.

    Each row only uses its own stencil points, so a row does not depend on
    which other angles share the batch.  Failures become NaN.
    """
    offsets, weights = _stencil_points(stencil)
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    In = np.asarray(In, dtype=complex)
    L = params.slab_length
    n, s = thetas.size, offsets.size + 1
    grid = thetas[:, None] + np.concatenate([[0.0], offsets * step])[None, :]
    kx, ky = k0 * np.cos(grid).ravel(), k0 * np.sin(grid).ravel()
    R, Tf, _, k, singular = solve_channels_many(params, kx, ky)
    R = (R @ In).reshape(n, s, 3)
    Tf = (Tf @ In).reshape(n, s, 3)
    kr = k.real.reshape(n, s, 3)
    singular = singular.reshape(n, s)
    phi_r = np.angle(R)
    phi_t = np.angle(Tf) + (kx.reshape(n, s)[:, :, None] - kr) * L
    rows = []
    for i, th in enumerate(thetas):
        nan3 = np.full(3, np.nan)
        if singular[i, 0]:
            rows.append(ShiftRow(th, nan3, nan3.copy(), nan3.copy(), nan3.copy(), np.nan))
            continue
        prob_R, prob_T, flux = flux_fractions(R[i, 0], Tf[i, 0], k.reshape(n, s, 3)[i, 0], In)
        if singular[i].any():
            D_r, D_t = nan3, nan3.copy()
        else:
            scale = -1.0 / (k0 * np.cos(th))
            D_r = scale * _derivative(phi_r[i, 1:], phi_r[i, 0], weights, step)
            D_t = scale * _derivative(phi_t[i, 1:], phi_t[i, 0], weights, step)
            D_r[~_magnitude_guard(R[i])] = np.nan
            D_t[~_magnitude_guard(Tf[i])] = np.nan
        excess = D_t - L * np.tan(th)
        rows.append(ShiftRow(th, D_r, D_t, prob_R, prob_T, flux, excess))
    return rows


def shift_row(params, k0, theta, In, step=1e-5, stencil=3):
    """All shifts and probabilities at one angle; failures become NaN."""
    return shift_rows(params, k0, [theta], In, step, stencil)[0]


def worker_count():
    env = os.environ.get("GHSHIFT_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = min(cap, max(1, int(env)))
        except ValueError:
            raise ValueError(f"GHSHIFT_THREADS must be an integer, got {env!r}") from None
    return cap


def sweep(params, k0, thetas, In, step=1e-5, stencil=3, workers=None):
    """One :class:`ShiftRow` per angle, in grid order.

    Rows are independent, so they may be evaluated in a process pool; the
    result does not depend on ``workers``.
    """
    thetas = np.asarray(thetas, dtype=float)
    if thetas.size == 0:
        return []
    if np.any(np.diff(thetas) <= 0):
        raise ValueError("theta grid must be strictly increasing")
    if thetas[0] < 0 or thetas[-1] >= np.pi / 2:
        raise ValueError("theta grid must lie within [0, pi/2)")
    In = np.asarray(In, dtype=complex)
    In = In / np.linalg.norm(In)
    workers = worker_count() if workers is None else workers
    chunks = np.array_split(thetas, max(1, -(-thetas.size // 256)))
    job = partial(shift_rows, params, k0, In=In, step=step, stencil=stencil)
    if workers <= 1 or len(chunks) < 2:
        parts = [job(c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(chunks))) as pool:
            parts = list(pool.map(job, chunks))
    return [row for part in parts for row in part]
