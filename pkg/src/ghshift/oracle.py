"""Time-dependent wavepacket propagation, used as an independent check.

The coupled three-component Schroedinger equation is integrated with a
second-order split-step scheme: exact kinetic steps in Fourier space and
exact pointwise potential steps.  Nothing here calls into the plane-wave
solver; the potential, its exponential and all bookkeeping are rebuilt
from :class:`~ghshift.model.SlabParams` alone.

Units are hbar = m = 1.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.fft
import scipy.signal
from scipy.special import erfc

# Gaussian density tails beyond this many widths hold < 1e-10 of the norm.
CLIP_WIDTHS = 6.5
# Packets are treated as separated from the slab beyond this many widths.
SEPARATION_WIDTHS = 4.5
# 1D runs feed the packet in until this many widths of its tail have passed.
FEED_WIDTHS = 5.5
# The 1D injection ramp extends this many ramp widths either side.
RAMP_HALF_EXTENT = 5.0
# Leak probes look this many wavelengths into each boundary layer.
PROBE_WAVELENGTHS = 5.0


class PacketClipped(ValueError):
    pass


class AbsorberLeak(RuntimeError):
    pass


class PacketSplit(RuntimeError):
    """A measured region holds several separated lobes.

    ``report`` carries the per-lobe centroids so the caller can still use
    them.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class EmptyRegion(ValueError):
    pass


class GridError(ValueError):
    """Grid parameters violate a resolution or geometry requirement."""

    def __init__(self, problems):
        self.problems = [problems] if isinstance(problems, str) else list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class PacketSpec:
    """Initial Gaussian packet.

    ``W`` is the position-space standard deviation of ``|psi|^2``.
    ``k_center`` is ``(k0, theta)``; ``internal`` the internal-state
    amplitudes (normalized on construction).
    """

    W: float
    center: tuple
    k_center: tuple
    internal: tuple = (1.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.W > 0:
            raise ValueError(f"packet width must be positive, got {self.W}")
        amps = np.asarray(self.internal, dtype=complex)
        norm_ = np.linalg.norm(amps)
        if amps.shape != (3,) or norm_ == 0:
            raise ValueError("internal must be a non-zero 3-vector")
        object.__setattr__(self, "internal", tuple(complex(a) for a in amps / norm_))
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "k_center", tuple(float(c) for c in self.k_center))

    @property
    def kx(self):
        k0, theta = self.k_center
        return k0 * np.cos(theta)

    @property
    def ky(self):
        k0, theta = self.k_center
        return k0 * np.sin(theta)


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid.  ``x0``/``y0`` are the coordinates of the first point."""

    nx: int
    ny: int
    dx: float
    dy: float
    dt: float
    n_steps: int
    absorber_width: float
    x0: float = 0.0
    y0: float = 0.0

    @property
    def x(self):
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def y(self):
        return self.y0 + self.dy * np.arange(self.ny)


def _power_of_two(n):
    return n > 0 and n & (n - 1) == 0


def check_grid(grid, k_max, v_max, one_d=False):
    """Return a list of violated grid requirements (empty when fine).

    ``k_max`` is the largest wavevector the grid must resolve and ``v_max``
    the potential scale the time step must resolve (see
    :func:`splitting_scale`).
    """
    problems = []
    for name in ("nx",) if one_d else ("nx", "ny"):
        n = getattr(grid, name)
        if not _power_of_two(n):
            problems.append(f"{name}={n} is not a power of two")
    spacings = [("dx", grid.dx)] if one_d else [("dx", grid.dx), ("dy", grid.dy)]
    limit = np.pi / (3 * k_max)
    for name, h in spacings:
        if not 0 < h < limit:
            problems.append(
                f"{name}={h:.4g} does not resolve k_max={k_max:.4g}; need {name} < {limit:.4g}"
            )
    if not grid.dt > 0:
        problems.append(f"dt must be positive, got {grid.dt}")
    elif not grid.dt * v_max < 0.1:
        problems.append(
            f"dt={grid.dt:.4g} too coarse for a potential of size {v_max:.4g}; "
            f"need dt < {0.1 / v_max:.4g}"
        )
    if grid.n_steps < 1:
        problems.append("n_steps must be at least 1")
    if grid.absorber_width < 0:
        problems.append("absorber_width must be non-negative")
    return problems


# --------------------------------------------------------------------------
# packets and bookkeeping


def _free_gaussian(coord, center, W, k, t):
    """Unit-norm 1D Gaussian after free flight for time ``t``."""
    s = 1 + 1j * t / (2 * W**2)
    u = coord - center
    return (
        (2 * np.pi * W**2) ** -0.25
        / np.sqrt(s)
        * np.exp(-((u - k * t) ** 2) / (4 * W**2 * s) + 1j * k * u - 0.5j * k**2 * t)
    )


def _free_gaussian_slope(coord, center, W, k, t):
    """Value and x-derivative of :func:`_free_gaussian`."""
    g = _free_gaussian(coord, center, W, k, t)
    s = 1 + 1j * t / (2 * W**2)
    return g, g * (-(coord - center - k * t) / (2 * W**2 * s) + 1j * k)


def _outside_fraction(coord, h, center, width):
    lo, hi = coord[0] - h / 2, coord[-1] + h / 2
    return 0.5 * erfc((center - lo) / (np.sqrt(2) * width)) + 0.5 * erfc(
        (hi - center) / (np.sqrt(2) * width)
    )


def gaussian_packet(spec, grid, t=0.0, one_d=False):
    """Three-component Gaussian packet on the grid after free flight ``t``.

    The density stays Gaussian with standard deviation
    ``W |1 + i t / (2 W^2)|``.  Raises :class:`PacketClipped` when more than
    1e-10 of the norm would fall outside the grid.
    """
    amps = np.array(spec.internal)
    axes = [(grid.x, spec.center[0], spec.kx, grid.dx)]
    if not one_d:
        axes.append((grid.y, spec.center[1], spec.ky, grid.dy))
    width = spec.W * abs(1 + 1j * t / (2 * spec.W**2))
    factors = []
    for coord, c, k, h in axes:
        outside = _outside_fraction(coord, h, c + k * t, width)
        if outside > 1e-10:
            raise PacketClipped(
                f"{outside:.2e} of the packet norm lies outside the grid "
                f"[{coord[0]:.4g}, {coord[-1]:.4g}]"
            )
        factors.append(_free_gaussian(coord, c, spec.W, k, t))
    if one_d:
        return amps[:, None] * factors[0][None, :]
    return amps[:, None, None] * (factors[1][:, None] * factors[0][None, :])[None]


def norm(field_, grid, one_d=False):
    cell = grid.dx if one_d else grid.dx * grid.dy
    return float(np.sum(np.abs(field_) ** 2) * cell)


# --------------------------------------------------------------------------
# potential


def excited_detuning(params, ky):
    """Complex detuning of |3> seen by a packet with transverse momentum ky.

    Includes the photon-recoil kinetic shift and the decay term.
    """
    recoil = params.kL1 * ky + 0.5 * params.kL1**2
    return params.delta0 - recoil + 0.5j * params.gamma


def _slab_matrix(params, detuning, two_photon=0.0):
    """Coupling matrix inside the slab for the given excited-state detuning."""
    o1, o2 = params.omega1, params.omega2
    return -0.5 * np.array(
        [[0, 0, o1], [0, 2 * two_photon, o2], [o1, o2, 2 * detuning]], dtype=complex
    )


def _eig(V):
    w, vecs = np.linalg.eig(V)
    return w, vecs, np.linalg.inv(vecs)


def _matrix_exponential(V, tau):
    """``exp(-1j * V * tau)`` via an eigendecomposition of the 3x3 matrix."""
    w, vecs, inv = _eig(V)
    return (vecs * np.exp(-1j * w * tau)) @ inv


def splitting_scale(params, ky):
    """Largest potential the ground-state packet feels inside the slab.

    This is the largest ``|eigenvalue|`` among eigenstates of the slab matrix
    that are at least half ground-state.  The excited-state detuning is
    exponentiated exactly per cell and is not part of this scale.
    """
    V = _slab_matrix(params, excited_detuning(params, ky))
    w, vecs, _ = _eig(V)
    weight = np.sum(np.abs(vecs[:2]) ** 2, axis=0) / np.sum(np.abs(vecs) ** 2, axis=0)
    ground = np.abs(w[weight >= 0.5])
    return float(ground.max()) if ground.size else 0.0


def absorber_profile(coord, lo, hi, width):
    """sin^2 ramp: 0 inside ``[lo + width, hi - width]``, 1 at the edges."""
    if width <= 0:
        return np.zeros_like(coord)
    s = np.clip(np.maximum((lo + width - coord) / width, (coord - (hi - width)) / width), 0, 1)
    return np.sin(0.5 * np.pi * s) ** 2


def fastest_speed(kx, detuning):
    """Largest exterior group velocity: the packet or an open |3> wave."""
    return float(np.sqrt(kx**2 + 2 * max(0.0, np.real(detuning))))


def channel_strengths(width, kx, detuning, decades=16.0):
    """Per-channel damping rates of a boundary layer.

    A wave crossing the layer once loses ``exp(-decades)`` of its norm.
    Ground channels are tuned to the packet speed ``kx``; |3> to its own,
    much faster, outgoing wave.
    """
    w = max(width, 1e-12)
    ground = decades * kx / w
    return np.array([ground, ground, decades * max(kx, fastest_speed(kx, detuning)) / w])


def minimum_absorber_width(kx):
    """Eight de Broglie wavelengths of the packet."""
    return 8 * 2 * np.pi / kx


# --------------------------------------------------------------------------
# 1D propagation


@dataclass
class Oracle1DResult:
    """Reflected and transmitted probabilities from a 1D packet run.

    ``R`` and ``T`` count everything that left through the entry face
    (``x < 0``) or the exit face (``x > L``): norm still on the grid, norm
    taken out by the boundary layers, and |3> norm lost to decay outside
    the slab.  ``decay_loss`` is the remainder, i.e. what decayed inside
    the slab.
    """

    R: np.ndarray
    T: np.ndarray
    interior: np.ndarray
    absorbed_left: np.ndarray
    absorbed_right: np.ndarray
    decay_loss: float
    inward_leak: float
    grid: GridSpec
    metadata: dict = field(default_factory=dict)

    @property
    def total(self):
        return float(np.sum(self.R) + np.sum(self.T))


@dataclass(frozen=True)
class Layout1D:
    """Where the injection ramp and boundary layers sit along x.

    ``left_inner``/``right_inner`` are the inner edges of the boundary
    layers; everything between them is measurement region.
    """

    ramp_center: float
    ramp_width: float
    left_inner: float
    right_inner: float

    @property
    def ramp_extent(self):
        return RAMP_HALF_EXTENT * self.ramp_width


def layout_1d(L, ramp_width=4.0, gap=5.0, buffer=5.0):
    h = RAMP_HALF_EXTENT * ramp_width
    xs = -(gap + h)
    return Layout1D(xs, ramp_width, xs - h - buffer, L + buffer)


def _as_batch(specs, kys):
    if isinstance(specs, PacketSpec):
        specs = [specs]
    specs = list(specs)
    if kys is None:
        kys = [s.ky for s in specs]
    elif np.ndim(kys) == 0:
        kys = [float(kys)] * len(specs)
    kys = [float(k) for k in kys]
    if len(kys) != len(specs):
        raise ValueError("need one ky per packet")
    return specs, kys


def k_max_1d(params, specs, kys=None):
    """Largest wavevector a 1D run must resolve, open |3> waves included."""
    specs, kys = _as_batch(specs, kys)
    return max(
        max(s.kx + 3.0 / s.W, fastest_speed(s.kx, excited_detuning(params, ky)))
        for s, ky in zip(specs, kys)
    )


def run_time_1d(spec, layout):
    """Time to feed the packet in and let every scattered piece leave."""
    feed = (layout.ramp_center - spec.center[0] + FEED_WIDTHS * spec.W) / spec.kx
    return feed + 2 * (layout.right_inner - layout.left_inner) / spec.kx


def default_grid_1d(params, specs, kys=None, dx=None, dt=0.01, absorber_width=None, ramp_width=4.0):
    """Grid for :func:`propagate_1d_batch`.

    ``specs`` may be one packet or a sequence sharing the grid.  The
    spacing divides ``L`` and the slab edges fall half-way between grid
    points, so the discretized slab has exactly the requested length.
    """
    specs, kys = _as_batch(specs, kys)
    L = params.slab_length
    if absorber_width is None:
        absorber_width = max(minimum_absorber_width(s.kx) for s in specs)
    layout = layout_1d(L, ramp_width)
    if dx is None:
        cells = int(np.floor(L * 3 * k_max_1d(params, specs, kys) / np.pi)) + 1
    else:
        cells = max(1, int(np.ceil(L / dx)))
    dx = L / cells
    lo = layout.left_inner - absorber_width
    # wide packets launched close to the slab reach past it at t = 0
    hi = max(
        layout.right_inner + absorber_width,
        max(s.center[0] + CLIP_WIDTHS * s.W for s in specs),
    )
    x0 = -(int(np.ceil(-lo / dx)) + 0.5) * dx
    # the grid is periodic: keep a fully damped guard across the seam so fast
    # edge-generated |3> content cannot wrap into the other layer
    n = 1 << int(np.ceil(np.log2((hi + absorber_width - x0) / dx + 1)))
    t_end = max(run_time_1d(s, layout) for s in specs)
    return GridSpec(n, 1, dx, 1.0, dt, int(np.ceil(t_end / dt)), absorber_width, x0=x0)


def _incident_1d(spec, detuning, x, t):
    """Free incident packet and its slope; |3> carries its detuning phase."""
    g, dg = _free_gaussian_slope(x, spec.center[0], spec.W, spec.kx, t)
    amps = np.array(spec.internal) * np.array([1.0, 1.0, np.exp(1j * detuning * t)])
    return amps[:, None] * g[None], amps[:, None] * dg[None]


def propagate_1d(params, spec, ky_fixed=None, grid=None, **options):
    """Scatter one 1D Gaussian packet off the slab at fixed ``ky``.

    See :func:`propagate_1d_batch` for the method and the options.
    """
    return propagate_1d_batch(params, [spec], ky_fixed, grid, **options)[0]


def propagate_1d_batch(
    params,
    specs,
    kys=None,
    grid=None,
    absorber_strength=None,
    leak_tolerance=1e-6,
    ramp_width=4.0,
    workers=None,
    check=True,
    probe_every=8,
):
    """Propagate several packets on one shared grid in a single time loop.

    The packet is never laid out on the grid in full.  The field variable
    is ``u = psi - chi(x) psi_inc`` where ``chi`` is a smooth step, 1 far
    left of the slab and 0 near it.  Left of the step ``u`` is the reflected
    wave; right of it ``u`` is the full field.  The free packet ``psi_inc``
    is known in closed form and enters through the source
    ``[H0, chi] psi_inc``, added with the trapezoid rule (exact for on-shell
    waves).  The grid therefore only spans the slab and its boundary layers,
    whatever the packet width.

    Each step is ``P(dt/2) K(dt) P(dt/2)`` with ``K`` the exact kinetic
    propagator and ``P`` the exact per-cell potential exponential.  Norm
    leaving through either face is removed by the boundary layers and
    credited to that side.  Every ``probe_every`` steps the local spectrum
    of a windowed segment at the inner edge of each layer gives the flux
    moving back into the measurement region; norm carried in that way means
    the layer reflects or wraps around, and more than ``leak_tolerance`` of
    it raises :class:`AbsorberLeak`.

    ``absorber_strength`` overrides the per-channel damping rates (scalar
    or ``(3,)``).  ``check=False`` skips the grid-resolution checks.
    """
    specs, kys = _as_batch(specs, kys)
    L = params.slab_length
    for spec in specs:
        if spec.center[0] + 4 * spec.W >= 0:
            raise GridError("packet must start left of the slab (center_x + 4 W < 0)")
        if spec.kx <= 0:
            raise GridError("packet must move towards the slab (kx > 0)")
    if grid is None:
        grid = default_grid_1d(params, specs, kys, ramp_width=ramp_width)
    layout = layout_1d(L, ramp_width)
    A = grid.absorber_width
    x = grid.x
    dx, dt = grid.dx, grid.dt
    detunings = np.array([excited_detuning(params, ky) for ky in kys])
    problems = []
    if check:
        v_max = max(splitting_scale(params, ky) for ky in kys)
        problems = check_grid(grid, k_max_1d(params, specs, kys), v_max, one_d=True)
    if x[0] > layout.left_inner - A or x[-1] < layout.right_inner + A:
        problems.append(
            f"grid [{x[0]:.4g}, {x[-1]:.4g}] cannot hold the boundary layers; "
            f"need [{layout.left_inner - A:.4g}, {layout.right_inner + A:.4g}]"
        )
    if problems:
        raise GridError(problems)

    B = len(specs)
    half = dt / 2
    props_full = np.empty((B, 3, 3), complex)
    props_half = np.empty((B, 3, 3), complex)
    for b, det in enumerate(detunings):
        w, vecs, inv = _eig(_slab_matrix(params, det))
        props_full[b] = (vecs * np.exp(-1j * w * dt)) @ inv
        props_half[b] = (vecs * np.exp(-1j * w * half)) @ inv
    phase_full = np.exp(1j * detunings * dt)
    phase_half = np.exp(1j * detunings * half)

    k = 2 * np.pi * scipy.fft.fftfreq(grid.nx, d=dx)
    kinetic = np.exp(-0.5j * k**2 * dt)
    slab = slice(int(np.searchsorted(x, 0.0)), int(np.searchsorted(x, L)))
    left, right = x < 0, x > L

    if absorber_strength is None:
        strengths = np.array([channel_strengths(A, s.kx, d) for s, d in zip(specs, detunings)])
    else:
        strengths = np.broadcast_to(np.asarray(absorber_strength, float), (B, 3)).copy()
    edges = (
        slice(0, int(np.searchsorted(x, layout.left_inner))),
        slice(int(np.searchsorted(x, layout.right_inner)), grid.nx),
    )
    masks = []
    for sl in edges:
        profile = absorber_profile(x[sl], layout.left_inner - A, layout.right_inner + A, A)
        masks.append(np.exp(-strengths[:, :, None] * dt * profile[None, None, :]))

    # local spectra of windowed segments just inside each layer, where the
    # damping is still gentle
    span = min(PROBE_WAVELENGTHS * 2 * np.pi / min(s.kx for s in specs), A)
    probes = []
    for lo_x, hi_x, sign in (
        (layout.left_inner - span, layout.left_inner, 1),
        (layout.right_inner, layout.right_inner + span, -1),
    ):
        lo = max(0, int(np.searchsorted(x, lo_x)))
        hi = min(grid.nx, int(np.searchsorted(x, hi_x)))
        window = scipy.signal.windows.blackmanharris(hi - lo)
        n_fft = 1 << int(np.ceil(np.log2(2 * (hi - lo))))
        kk = 2 * np.pi * scipy.fft.fftfreq(n_fft, d=dx)
        weight = np.where(sign * kk > 0, np.abs(kk), 0.0) / (n_fft * np.sum(window**2))
        probes.append((slice(lo, hi), window, n_fft, weight))

    def inward_flux(u):
        """Norm per unit time moving into the measurement region at each edge."""
        flux = np.zeros((B, 3))
        for sl, window, n_fft, weight in probes:
            spec_ = scipy.fft.fft(u[:, :, sl] * window, n=n_fft, axis=-1)
            flux += (np.abs(spec_) ** 2) @ weight
        return flux

    h = layout.ramp_extent
    first = int(np.searchsorted(x, layout.ramp_center - h))
    ramp = slice(first, int(np.searchsorted(x, layout.ramp_center + h)))
    z = (x[ramp] - layout.ramp_center) / ramp_width
    chi1 = -np.exp(-(z**2)) / (ramp_width * np.sqrt(np.pi))
    chi2 = -2 * z / ramp_width * chi1

    def source(t):
        out = np.empty((B, 3, chi1.size), complex)
        for b, (spec, det) in enumerate(zip(specs, detunings)):
            g, dg = _incident_1d(spec, det, x[ramp], t)
            out[b] = -0.5 * (chi2 * g + 2 * chi1 * dg)
        return out

    # initial field: the part of each packet already right of the ramp
    one_minus_chi = 0.5 * erfc(-(x - layout.ramp_center) / ramp_width)
    u = np.empty((B, 3, grid.nx), complex)
    for b, (spec, det) in enumerate(zip(specs, detunings)):
        tail = 0.5 * erfc((x[-1] + dx / 2 - spec.center[0]) / (np.sqrt(2) * spec.W))
        if tail > 1e-10:
            raise PacketClipped(f"{tail:.2e} of packet {b} lies beyond the right grid edge")
        u[b] = one_minus_chi * _incident_1d(spec, det, x, 0.0)[0]

    absorbed = [np.zeros((B, 3)), np.zeros((B, 3))]
    decayed = np.zeros((2, B))
    inward = np.zeros((B, 3))
    lossy = params.gamma > 0

    outside_l, outside_r = slice(0, slab.start), slice(slab.stop, grid.nx)

    def potential(u, props, phase):
        inner = u[:, :, slab].copy()
        if lossy:
            lost = (1 - np.abs(phase) ** 2) * dx
            for i, sl in enumerate((outside_l, outside_r)):
                seg = u[:, 2, sl]
                decayed[i] += lost * np.einsum("bn,bn->b", seg.real, seg.real)
                decayed[i] += lost * np.einsum("bn,bn->b", seg.imag, seg.imag)
        u[:, 2] *= phase[:, None]
        u[:, :, slab] = props @ inner

    removed = [(1 - m**2) * dx for m in masks]

    def absorb(u):
        for sl, mask, gone, tally in zip(edges, masks, removed, absorbed):
            seg = u[:, :, sl]
            tally += np.einsum("bcn,bcn->bc", seg.real**2 + seg.imag**2, gone)
            u[:, :, sl] = seg * mask

    u[:, :, ramp] += -1j * half * source(0.0)
    potential(u, props_half, phase_half)
    t = 0.0
    for step in range(grid.n_steps):
        if step % probe_every == 0:
            inward += inward_flux(u) * dt * min(probe_every, grid.n_steps - step)
        spectrum = scipy.fft.fft(u, axis=-1, workers=workers)
        spectrum *= kinetic
        u = scipy.fft.ifft(spectrum, axis=-1, workers=workers, overwrite_x=True)
        t += dt
        last = step == grid.n_steps - 1
        potential(u, props_half if last else props_full, phase_half if last else phase_full)
        absorb(u)
        u[:, :, ramp] += -1j * (half if last else dt) * source(t)

    # by now the whole packet has been fed in, so u is the physical field
    # everywhere except for tails below 1e-8
    dens = np.abs(u) ** 2 * dx
    results = []
    for b, spec in enumerate(specs):
        R = absorbed[0][b] + dens[b][:, left].sum(axis=1)
        T = absorbed[1][b] + dens[b][:, right].sum(axis=1)
        R[2] += decayed[0][b]
        T[2] += decayed[1][b]
        interior = dens[b][:, ~left & ~right].sum(axis=1)
        meta = {
            "W": spec.W,
            "center_x": spec.center[0],
            "kx": spec.kx,
            "ky": kys[b],
            "theta_deg": float(np.degrees(spec.k_center[1])),
            "dx": dx,
            "dt": dt,
            "nx": grid.nx,
            "n_steps": grid.n_steps,
            "t_end": t,
            "absorber_width": A,
            "absorber_strength": strengths[b].tolist(),
            "ramp_width": ramp_width,
            "ramp_center": layout.ramp_center,
            "inward_leak_by_channel": inward[b].tolist(),
        }
        results.append(
            Oracle1DResult(
                R=R,
                T=T,
                interior=interior,
                absorbed_left=absorbed[0][b].copy(),
                absorbed_right=absorbed[1][b].copy(),
                decay_loss=1.0 - float(np.sum(R) + np.sum(T) + np.sum(interior)),
                inward_leak=float(np.sum(inward[b])),
                grid=grid,
                metadata=meta,
            )
        )
    worst = max(r.inward_leak for r in results)
    if worst > leak_tolerance:
        raise AbsorberLeak(
            f"{worst:.3e} of the norm flowed back out of the boundary layers "
            f"(tolerance {leak_tolerance:.1e}); widen them or weaken the damping"
        )
    return results


# --------------------------------------------------------------------------
# 2D propagation and centroids

REGIONS = ("reflected", "interior", "transmitted")


@dataclass
class CentroidReport:
    """Per-state norms, centroids and shifts of the outgoing packets.

    Dictionaries are keyed by region name (``reflected``, ``interior``,
    ``transmitted``).  ``centroids`` and ``momenta`` hold ``(3, 2)`` arrays
    of ``(x, y)`` pairs, NaN where a state is absent.  ``lobes`` lists, per
    state, ``(norm, x, y)`` for each separated lobe; ``split`` flags states
    with more than one lobe.  Shifts are NaN until filled by
    :func:`propagate_2d`.
    """

    norms: dict
    centroids: dict
    momenta: dict
    lobes: dict
    split: dict
    absorbed: np.ndarray = field(default_factory=lambda: np.zeros(3))
    decay_loss: float = 0.0
    time: float = 0.0
    intercepts_r: np.ndarray = field(default_factory=lambda: np.full(3, np.nan))
    intercepts_t: np.ndarray = field(default_factory=lambda: np.full(3, np.nan))
    D_r: np.ndarray = field(default_factory=lambda: np.full(3, np.nan))
    D_t: np.ndarray = field(default_factory=lambda: np.full(3, np.nan))
    D_t_excess: np.ndarray = field(default_factory=lambda: np.full(3, np.nan))
    metadata: dict = field(default_factory=dict)

    @property
    def distorted(self):
        return any(bool(np.any(flags)) for flags in self.split.values())

    def centroid(self, region, state):
        c = self.centroids[region][state]
        if np.any(np.isnan(c)):
            raise EmptyRegion(f"state {state + 1} has no norm in the {region} region")
        return c

    def total_norm(self):
        return float(sum(np.sum(n) for n in self.norms.values()) + np.sum(self.absorbed))


def region_masks(grid, L):
    """Boolean ``(ny, nx)`` masks for x < 0, 0 <= x <= L and x > L."""
    x = grid.x[None, :] * np.ones((grid.ny, 1))
    return {
        "reflected": x < 0,
        "interior": (x >= 0) & (x <= L),
        "transmitted": x > L,
    }


def _lobes(marginal, floor=1e-3, valley=0.1):
    """Index ranges of lobes in a 1D marginal.

    Local maxima above ``floor`` times the global peak count as candidate
    lobes; two neighbours are separate when the minimum between them drops
    below ``valley`` times the smaller peak.
    """
    m = np.asarray(marginal, float)
    if m.size == 0 or m.max() <= 0:
        return []
    top = m.max()
    interior = (m[1:-1] >= m[:-2]) & (m[1:-1] > m[2:]) & (m[1:-1] > floor * top)
    peaks = list(np.nonzero(interior)[0] + 1)
    if m[0] > m[1] and m[0] > floor * top:
        peaks.insert(0, 0)
    if m[-1] > m[-2] and m[-1] > floor * top:
        peaks.append(m.size - 1)
    if not peaks:
        return [(0, m.size)]
    # merge neighbours whose valley is shallow
    groups = [[peaks[0]]]
    cuts = []
    for p in peaks[1:]:
        prev = groups[-1]
        lo = max(prev, key=lambda i: m[i])
        between = m[lo : p + 1]
        cut = lo + int(np.argmin(between))
        if m[cut] < valley * min(m[lo], m[p]):
            groups.append([p])
            cuts.append(cut)
        else:
            prev.append(p)
    edges = [0] + [c for c in cuts] + [m.size]
    return [(edges[i], edges[i + 1]) for i in range(len(groups))]


def extract_centroids(field_, grid, masks, regions=None):
    """Norm-weighted first moments per state and region.

    ``field_`` has shape ``(3, ny, nx)``; ``masks`` maps region names to
    boolean ``(ny, nx)`` arrays.  Mean momenta come from the spectrum of
    the masked field.  Raises :class:`EmptyRegion` when a requested region
    holds less than 1e-12 of norm in total.
    """
    regions = list(masks) if regions is None else list(regions)
    cell = grid.dx * grid.dy
    x, y = grid.x, grid.y
    kx = 2 * np.pi * scipy.fft.fftfreq(grid.nx, d=grid.dx)
    ky = 2 * np.pi * scipy.fft.fftfreq(grid.ny, d=grid.dy)
    norms, centroids, momenta, lobes, split = {}, {}, {}, {}, {}
    for name in regions:
        mask = masks[name]
        dens = np.abs(field_) ** 2 * mask[None]
        n = dens.sum(axis=(1, 2)) * cell
        if np.sum(n) < 1e-12:
            raise EmptyRegion(f"region {name!r} holds {np.sum(n):.2e} of norm")
        cen = np.full((3, 2), np.nan)
        mom = np.full((3, 2), np.nan)
        state_lobes, flags = [], np.zeros(3, dtype=bool)
        for s in range(3):
            if n[s] < 1e-12:
                state_lobes.append([])
                continue
            mx = dens[s].sum(axis=0) * cell
            my = dens[s].sum(axis=1) * cell
            cen[s] = (mx @ x / n[s], my @ y / n[s])
            spec = np.abs(scipy.fft.fft2(field_[s] * mask)) ** 2
            total = spec.sum()
            mom[s] = (spec.sum(axis=0) @ kx / total, spec.sum(axis=1) @ ky / total)
            parts = []
            for lo, hi in _lobes(my):
                w = my[lo:hi].sum()
                wx = dens[s][lo:hi].sum(axis=0) * cell
                parts.append((float(w), float(wx @ x / w), float(my[lo:hi] @ y[lo:hi] / w)))
            state_lobes.append(parts)
            flags[s] = len(parts) > 1
        norms[name], centroids[name], momenta[name] = n, cen, mom
        lobes[name], split[name] = state_lobes, flags
    return CentroidReport(norms, centroids, momenta, lobes, split)


def lab_phases(params):
    """y-wavevectors ``(0, kL1 - kL2, kL1)`` carried by the three states
    relative to state |1> in the laboratory frame."""
    return np.array([0.0, params.kL1 - params.kL2, params.kL1])


def two_photon_offset(params, ky):
    """Bare two-photon detuning that cancels the recoil shift at ``ky``."""
    return 0.5 * ((ky + params.kL1 - params.kL2) ** 2 - ky**2)


def _lab_matrix(params, ky):
    """Slab potential with the beam phases stripped, i.e. at ``y = 0``."""
    o1, o2 = params.omega1, params.omega2
    d0 = two_photon_offset(params, ky)
    return -0.5 * np.array(
        [[0, 0, o1], [0, 2 * d0, o2], [o1, o2, 2 * (params.delta0 + 0.5j * params.gamma)]],
        dtype=complex,
    )


@dataclass(frozen=True)
class Layout2D:
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float
    t_end: float


def plan_2d(params, spec, absorber_width=None, margin=10.0):
    """Extent of the region the packets visit, and the run time.

    The run lasts until the transmitted packet has cleared the exit face
    by ``SEPARATION_WIDTHS`` widths, allowing one extra slab transit for the
    slower motion inside.
    """
    W, L = spec.W, params.slab_length
    kx, ky = spec.kx, spec.ky
    cx, cy = spec.center
    t_end = (L - cx + margin) / kx + L / kx
    # the packet keeps spreading while it moves out; two passes settle it
    for _ in range(2):
        spread = abs(1 + 1j * t_end / (2 * W**2))
        t_end = (L - cx + SEPARATION_WIDTHS * W * spread + margin) / kx + L / kx
    spread = abs(1 + 1j * t_end / (2 * W**2))
    reach = CLIP_WIDTHS * W * spread
    A = minimum_absorber_width(kx) if absorber_width is None else absorber_width
    # reflected packet: reflected at x=0 around t = -cx/kx
    x_refl = -(kx * t_end + cx)
    x_lo = min(cx, x_refl) - reach - A
    x_hi = cx + kx * t_end + reach + A
    lateral = abs(ky) * t_end + 2 * L * abs(ky) / kx
    y_lo = min(cy, cy + np.sign(ky) * lateral) - reach - A
    y_hi = max(cy, cy + np.sign(ky) * lateral) + reach + A
    return Layout2D(x_lo, x_hi, y_lo, y_hi, t_end)


def default_grid_2d(params, spec, dt=0.4, absorber_width=None, nx=None, ny=None):
    """Power-of-two grid covering :func:`plan_2d`.

    The x spacing divides ``L`` and puts the slab edges half-way between
    points.  Only the packet's own wavevectors are resolved: an open |3>
    wave (``k3`` near ``sqrt(2 Delta0)``) would need a far finer grid.
    """
    A = minimum_absorber_width(spec.kx) if absorber_width is None else absorber_width
    plan = plan_2d(params, spec, A)
    L = params.slab_length
    limit = np.pi / (3 * k_max_2d(spec))
    ext_x, ext_y = plan.x_hi - plan.x_lo, plan.y_hi - plan.y_lo
    if nx is None:
        nx = 1 << int(np.ceil(np.log2(ext_x / limit)))
    if ny is None:
        ny = 1 << int(np.ceil(np.log2(ext_y / limit)))
    cells = max(1, int(np.floor(L * nx / ext_x)))
    dx = L / cells
    x0 = -(int(np.ceil(-plan.x_lo / dx)) + 0.5) * dx
    dy = ext_y / ny
    steps = int(np.ceil(plan.t_end / dt))
    return GridSpec(nx, ny, dx, dy, dt, steps, A, x0=x0, y0=plan.y_lo)


def k_max_2d(spec):
    k0 = spec.k_center[0]
    return k0 + 3.0 / spec.W


def _strips(grid, width):
    """Four non-overlapping rectangles covering the boundary layers."""
    ay = min(grid.ny // 2, int(np.ceil(width / grid.dy)))
    ax = min(grid.nx // 2, int(np.ceil(width / grid.dx)))
    ys, xs = slice(None), slice(None)
    return [
        (slice(0, ay), xs),
        (slice(grid.ny - ay, grid.ny), xs),
        (slice(ay, grid.ny - ay), slice(0, ax)),
        (slice(ay, grid.ny - ay), slice(grid.nx - ax, grid.nx)),
    ], ys


def write_snapshot(stream, field_, grid, t):
    """Append one frame: ``nx, ny`` (int64), ``dx, dy, t`` (float64), then the
    three ``|psi_s|^2`` arrays, row-major float64, all little-endian."""
    stream.write(np.array([grid.nx, grid.ny], dtype="<i8").tobytes())
    stream.write(np.array([grid.dx, grid.dy, t], dtype="<f8").tobytes())
    stream.write(np.ascontiguousarray(np.abs(field_) ** 2, dtype="<f8").tobytes())


def read_snapshots(path):
    """Frames written by :func:`write_snapshot` as ``(t, dx, dy, norms)``."""
    frames = []
    with open(path, "rb") as fh:
        while True:
            head = fh.read(16)
            if not head:
                break
            nx, ny = np.frombuffer(head, dtype="<i8")
            dx, dy, t = np.frombuffer(fh.read(24), dtype="<f8")
            data = np.frombuffer(fh.read(3 * int(nx) * int(ny) * 8), dtype="<f8")
            frames.append((float(t), float(dx), float(dy), data.reshape(3, int(ny), int(nx))))
    return frames


def propagate_2d(
    params,
    spec,
    grid=None,
    absorber_strength=None,
    leak_tolerance=1e-6,
    strict_split=False,
    snapshot_path=None,
    snapshot_every=0,
    workers=None,
    check=True,
):
    """Scatter a 2D Gaussian packet off the slab in the laboratory frame.

    The couplings keep their ``exp(-+i kL y)`` beam phases and the bare
    detunings act everywhere, exactly as in the original three-state
    equations; no rotating frame is used.  The per-cell potential
    exponential is ``D(y) exp(-i V0 tau) D(y)^*`` with
    ``D = diag(exp(-i kL1 y), exp(-i kL2 y), 1)``.

    At the end each state's transmitted centroid is carried back along its
    measured mean momentum to ``x = L`` and compared with the straight ray
    from the incident centroid entering at ``x = 0``; ``D_t`` is that offset,
    ``D_t_excess`` the same minus ``L tan(theta)``.  ``D_r`` does the same
    for the reflected packet at ``x = 0``.
    """
    L = params.slab_length
    if spec.center[0] + 4 * spec.W >= 0:
        raise GridError("packet must start left of the slab (center_x + 4 W < 0)")
    if grid is None:
        grid = default_grid_2d(params, spec)
    if check:
        problems = check_grid(grid, k_max_2d(spec), splitting_scale(params, spec.ky))
        if problems:
            raise GridError(problems)
    psi = np.empty((3, grid.ny, grid.nx), complex)
    psi[:] = gaussian_packet(spec, grid)
    psi *= np.exp(1j * np.outer(lab_phases(params), grid.y))[:, :, None]
    n0 = norm(psi, grid)

    dt, half = grid.dt, grid.dt / 2
    V0 = _lab_matrix(params, spec.ky)
    w, vecs, inv = _eig(V0)
    props = {tau: (vecs * np.exp(-1j * w * tau)) @ inv for tau in (half, dt)}
    diag = {tau: np.exp(-1j * np.diag(V0) * tau) for tau in (half, dt)}
    beam = np.exp(1j * np.outer([params.kL1, params.kL2], grid.y))[:, :, None]
    x = grid.x
    slab = slice(int(np.searchsorted(x, 0.0)), int(np.searchsorted(x, L)))

    kx = 2 * np.pi * scipy.fft.fftfreq(grid.nx, d=grid.dx)
    ky = 2 * np.pi * scipy.fft.fftfreq(grid.ny, d=grid.dy)
    kinetic = np.exp(-0.5j * dt * (ky[:, None] ** 2 + kx[None, :] ** 2))

    A = grid.absorber_width
    if absorber_strength is None:
        nyquist = np.pi / min(grid.dx, grid.dy)
        v3 = min(fastest_speed(spec.k_center[0], params.delta0), nyquist)
        rate = 16.0 / max(A, 1e-12)
        strengths = np.array([spec.k_center[0], spec.k_center[0], v3]) * rate
    else:
        strengths = np.broadcast_to(np.asarray(absorber_strength, float), (3,)).copy()
    strips, _ = _strips(grid, A)
    layers = []
    for sy, sx in strips:
        py = absorber_profile(grid.y, grid.y[0], grid.y[-1], A)[sy]
        px = absorber_profile(x, x[0], x[-1], A)[sx]
        profile = np.maximum(py[:, None], px[None, :])
        mask = np.exp(-strengths[:, None, None] * dt * profile[None])
        layers.append((sy, sx, mask, (1 - mask**2) * grid.dx * grid.dy))
    absorbed = np.zeros(3)

    def potential(psi, tau):
        inner = psi[:, :, slab]
        inner[:2] *= beam
        inner = np.einsum("ij,jyx->iyx", props[tau], inner)
        inner[:2] /= beam
        psi[:, :, :slab.start] *= diag[tau][:, None, None]
        psi[:, :, slab.stop:] *= diag[tau][:, None, None]
        psi[:, :, slab] = inner

    def absorb(psi):
        for sy, sx, mask, gone in layers:
            seg = psi[:, sy, sx]
            absorbed[:] += np.sum((seg.real**2 + seg.imag**2) * gone, axis=(1, 2))
            psi[:, sy, sx] = seg * mask

    snap = open(snapshot_path, "wb") if snapshot_path else None
    try:
        if snap:
            write_snapshot(snap, psi, grid, 0.0)
        potential(psi, half)
        t = 0.0
        for step in range(grid.n_steps):
            psi = scipy.fft.ifft2(
                kinetic * scipy.fft.fft2(psi, workers=workers), workers=workers, overwrite_x=True
            )
            t += dt
            potential(psi, half if step == grid.n_steps - 1 else dt)
            absorb(psi)
            if snap and snapshot_every and (step + 1) % snapshot_every == 0:
                write_snapshot(snap, psi, grid, t)
    finally:
        if snap:
            snap.close()

    masks = region_masks(grid, L)
    report = extract_centroids(psi, grid, masks, regions=("reflected", "transmitted"))
    report.norms["interior"] = np.sum(np.abs(psi) ** 2 * masks["interior"][None], axis=(1, 2)) * grid.dx * grid.dy / n0
    for name in ("reflected", "transmitted"):
        report.norms[name] = report.norms[name] / n0
    report.absorbed = absorbed / n0
    report.decay_loss = 1.0 - report.total_norm()
    report.time = t

    tan = spec.ky / spec.kx
    entry = spec.center[1] - spec.center[0] * tan
    for s in range(3):
        for name, face, target, shift in (
            ("transmitted", L, report.intercepts_t, report.D_t),
            ("reflected", 0.0, report.intercepts_r, report.D_r),
        ):
            (cx, cy), (px, py) = report.centroids[name][s], report.momenta[name][s]
            if np.isnan(cx) or report.norms[name][s] < 1e-8 or px == 0:
                continue
            target[s] = cy - (cx - face) * py / px
            shift[s] = target[s] - entry
    report.D_t_excess = report.D_t - L * tan

    edge_lo, edge_hi = grid.y[0] + A, grid.y[-1] - A
    width = spec.W * abs(1 + 1j * t / (2 * spec.W**2))
    crowded = []
    for name in ("reflected", "transmitted"):
        for s in range(3):
            cy = report.centroids[name][s][1]
            if report.norms[name][s] > 1e-6 and min(cy - edge_lo, edge_hi - cy) < 4 * width:
                crowded.append(f"{name} state {s + 1} at y={cy:.4g}")
    report.metadata = {
        "W": spec.W,
        "center": list(spec.center),
        "k0": spec.k_center[0],
        "theta_deg": float(np.degrees(spec.k_center[1])),
        "nx": grid.nx,
        "ny": grid.ny,
        "dx": grid.dx,
        "dy": grid.dy,
        "dt": dt,
        "n_steps": grid.n_steps,
        "absorber_width": A,
        "absorber_strength": strengths.tolist(),
        "two_photon_offset": two_photon_offset(params, spec.ky),
        "initial_norm": n0,
    }
    if crowded:
        raise GridError(
            "packets ended within 4 widths of the boundary layers: " + ", ".join(crowded)
        )
    if np.sum(report.absorbed[:2]) > leak_tolerance:
        raise AbsorberLeak(
            f"boundary layers absorbed {np.sum(report.absorbed[:2]):.3e} of the ground-state "
            f"norm (tolerance {leak_tolerance:.1e}); enlarge the grid or run for less time"
        )
    if strict_split and report.distorted:
        raise PacketSplit("an outgoing packet split into separated lobes", report)
    return report
