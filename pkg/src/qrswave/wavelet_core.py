"""Morlet continuous wavelet transform on a fractional-power-of-two scale grid.

Conventions
-----------
Scales (dilations) are expressed in samples. A coefficient approximates

    T(a, b) = 1/sqrt(a) * integral x(t) conj(psi((t - b) / a)) dt

with the integral replaced by a sum over samples weighted by the sample
period ``dt = 1/fs``. Dilations stay in samples, so a coefficient equals the
unit-free continuous value times ``sqrt(dt)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    EmptyInputError,
    InsufficientResolution,
    InvalidRange,
    InvalidWaveletParameter,
    NumericalFailure,
    ScaleRangeError,
)

__all__ = [
    "WaveletSpec",
    "ScaleGrid",
    "CwtMatrix",
    "Scalogram",
    "morlet",
    "morlet_spectrum",
    "morlet_kernel",
    "make_scale_grid",
    "grid_for_frequencies",
    "cwt",
    "scalogram",
    "admissibility_constant",
    "wavelet_energy",
    "total_energy_estimate",
    "scale_to_pseudofrequency",
    "pseudofrequency_to_scale",
    "MIN_OMEGA0",
    "KERNEL_HALF_WIDTH",
    "COI_WIDTH",
]

MIN_OMEGA0 = 5.0
# kernel truncated at |t| <= 8 (envelope exp(-32) ~ 1e-14)
KERNEL_HALF_WIDTH = 8.0
# cone of influence, in units of the scale
COI_WIDTH = 4.0

_NORM = np.pi ** -0.25


def _check_omega0(omega0):
    if not np.isfinite(omega0) or omega0 < MIN_OMEGA0:
        raise InvalidWaveletParameter(
            f"omega0 must be >= {MIN_OMEGA0} for an admissible Morlet, got {omega0}"
        )


def morlet(t, omega0=6.0):
    """Complex Morlet wavelet ``pi**-0.25 * exp(1j*omega0*t) * exp(-t**2/2)``.

    Accepts scalars or arrays of dimensionless time.
    """
    _check_omega0(omega0)
    t = np.asarray(t, dtype=float)
    out = _NORM * np.exp(1j * omega0 * t) * np.exp(-0.5 * t * t)
    return out[()] if out.ndim == 0 else out


def morlet_spectrum(omega, omega0=6.0):
    """Closed-form Fourier transform of :func:`morlet` (real, Gaussian)."""
    _check_omega0(omega0)
    omega = np.asarray(omega, dtype=float)
    return _NORM * np.sqrt(2 * np.pi) * np.exp(-0.5 * (omega - omega0) ** 2)


def _trapezoid_energy(fn, t_max, step):
    n = int(round(2 * t_max / step))
    t = np.linspace(-t_max, t_max, n + 1)
    return float(np.trapezoid(np.abs(fn(t)) ** 2, t))


def wavelet_energy(wavelet, t_max=8.0, step=1e-3):
    """Energy ``integral |psi(t)|**2 dt`` by the trapezoidal rule on [-t_max, t_max]."""
    return _trapezoid_energy(wavelet.psi, t_max, step)


def admissibility_constant(wavelet, step=1e-3, upper_extent=10.0):
    """Admissibility constant ``C_g = integral_0^inf |psi_hat(w)|**2 / w dw``.

    Composite Simpson quadrature of the closed-form spectrum over
    ``(0, omega0 + upper_extent]``. The node at ``w = 0`` is skipped: the
    integrand there is of order exp(-omega0**2) and the omitted sliver is
    below 1e-13 for omega0 >= 5.
    """
    omega0 = wavelet.omega0
    upper = omega0 + upper_extent
    n = int(np.ceil((upper - step) / step))
    n += n % 2  # Simpson needs an even panel count
    w = np.linspace(step, upper, n + 1)
    h = w[1] - w[0]
    f = morlet_spectrum(w, omega0) ** 2 / w
    weights = np.ones(n + 1)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    value = float(h / 3.0 * np.dot(weights, f))
    if not np.isfinite(value) or value <= 0:
        raise NumericalFailure(f"admissibility quadrature failed: {value}")
    return value


@dataclass(frozen=True)
class WaveletSpec:
    """Analytic Morlet mother wavelet and its derived constants."""

    omega0: float = 6.0

    def __post_init__(self):
        _check_omega0(self.omega0)
        object.__setattr__(self, "omega0", float(self.omega0))
        if not (np.isfinite(self.admissibility_constant) and self.admissibility_constant > 0):
            raise InvalidWaveletParameter("admissibility constant is not finite and positive")

    @cached_property
    def admissibility_constant(self):
        return admissibility_constant(self)

    @property
    def center_frequency(self):
        """Dimensionless centre frequency ``omega0 / (2 pi)``."""
        return self.omega0 / (2 * np.pi)

    @property
    def mean(self):
        """Continuous mean ``integral psi dt`` (= spectrum at zero)."""
        return float(morlet_spectrum(0.0, self.omega0))

    def psi(self, t):
        return morlet(t, self.omega0)

    def spectrum(self, omega):
        return morlet_spectrum(omega, self.omega0)


@dataclass(frozen=True)
class ScaleGrid:
    """Geometric scale sequence ``a_min * 2**(j / voices_per_octave)``."""

    a_min: float
    voices_per_octave: int
    count: int

    def __post_init__(self):
        if not (self.a_min > 0 and np.isfinite(self.a_min)):
            raise InvalidRange(f"a_min must be positive, got {self.a_min}")
        if int(self.voices_per_octave) != self.voices_per_octave or self.voices_per_octave < 1:
            raise InvalidRange("voices_per_octave must be a positive integer")
        if self.count < 1:
            raise InvalidRange("grid needs at least one scale")

    @cached_property
    def scales(self):
        j = np.arange(self.count)
        s = self.a_min * 2.0 ** (j / self.voices_per_octave)
        s.flags.writeable = False
        return s

    @property
    def ratio(self):
        return 2.0 ** (1.0 / self.voices_per_octave)

    @property
    def octaves(self):
        return (self.count - 1) / self.voices_per_octave

    def __len__(self):
        return self.count


def make_scale_grid(a_min, a_max, voices_per_octave):
    """Fractional-power-of-two grid covering ``[a_min, a_max]``.

    ``count = floor(v * log2(a_max / a_min)) + 1``; the largest scale never
    exceeds ``a_max``.
    """
    if not (a_min > 0 and a_max > 0) or a_min > a_max:
        raise InvalidRange(f"need 0 < a_min <= a_max, got {a_min}, {a_max}")
    if int(voices_per_octave) != voices_per_octave or voices_per_octave < 1:
        raise InvalidRange("voices_per_octave must be a positive integer")
    v = int(voices_per_octave)
    exact = v * np.log2(a_max / a_min)
    # tolerate round-off so that e.g. (1, 8, 1) gives 4 scales, not 3
    count = int(np.floor(exact + 1e-9)) + 1
    return ScaleGrid(float(a_min), v, count)


def scale_to_pseudofrequency(a, fs, wavelet):
    """Frequency in Hz at which a scale of ``a`` samples resonates."""
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0) or fs <= 0:
        raise InvalidRange("scale and sampling rate must be positive")
    out = wavelet.center_frequency * fs / a
    return out[()] if out.ndim == 0 else out


def pseudofrequency_to_scale(f, fs, wavelet):
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0) or fs <= 0:
        raise InvalidRange("frequency and sampling rate must be positive")
    out = wavelet.center_frequency * fs / f
    return out[()] if out.ndim == 0 else out


def grid_for_frequencies(f_min, f_max, fs, wavelet, voices_per_octave=16):
    """Grid whose pseudo-frequencies span ``[f_min, f_max]`` Hz.

    The smallest scale maps exactly to ``f_max``; the grid extends one step
    past ``f_min`` if needed so that the requested span is fully covered.
    """
    if not (0 < f_min < f_max):
        raise InvalidRange(f"need 0 < f_min < f_max, got {f_min}, {f_max}")
    a_min = float(pseudofrequency_to_scale(f_max, fs, wavelet))
    a_max = float(pseudofrequency_to_scale(f_min, fs, wavelet))
    v = int(voices_per_octave)
    count = int(np.ceil(v * np.log2(a_max / a_min) - 1e-9)) + 1
    return ScaleGrid(a_min, v, count)


def morlet_kernel(a, wavelet, half_width=KERNEL_HALF_WIDTH):
    """Sampled wavelet ``psi(k / a)`` for ``|k| <= ceil(half_width * a)``.

    The sample mean is subtracted so the discrete kernel sums to zero.
    """
    k_max = int(np.ceil(half_width * a))
    k = np.arange(-k_max, k_max + 1)
    kern = wavelet.psi(k / a)
    return kern - kern.mean()


@dataclass(frozen=True, eq=False)
class CwtMatrix:
    coefficients: np.ndarray
    grid: ScaleGrid
    fs: float
    edge_mask: np.ndarray
    wavelet: WaveletSpec = field(default_factory=WaveletSpec)

    @property
    def shape(self):
        return self.coefficients.shape

    @property
    def pseudofrequencies(self):
        return scale_to_pseudofrequency(self.grid.scales, self.fs, self.wavelet)


@dataclass(frozen=True, eq=False)
class Scalogram:
    energy: np.ndarray
    grid: ScaleGrid
    fs: float
    edge_mask: np.ndarray
    wavelet: WaveletSpec = field(default_factory=WaveletSpec)

    @property
    def shape(self):
        return self.energy.shape

    @property
    def pseudofrequencies(self):
        return scale_to_pseudofrequency(self.grid.scales, self.fs, self.wavelet)


def _samples_and_fs(signal, fs):
    if hasattr(signal, "samples"):
        return np.asarray(signal.samples, dtype=float), float(signal.fs)
    if fs is None:
        raise InvalidRange("fs is required when passing a bare array")
    return np.asarray(signal, dtype=float), float(fs)


def edge_mask_for(grid, n, periodic=False):
    """True where a sample lies within ``COI_WIDTH * a`` samples of either end."""
    mask = np.zeros((grid.count, n), dtype=bool)
    if periodic:
        return mask
    idx = np.arange(n)
    dist = np.minimum(idx, n - 1 - idx)
    for j, a in enumerate(grid.scales):
        mask[j] = dist < COI_WIDTH * a
    return mask


def _next_pow2(n):
    return 1 << max(0, int(n - 1).bit_length())


def cwt(signal, wavelet=None, grid=None, *, fs=None, padding="zero"):
    """Continuous wavelet transform of a real signal.

    Parameters
    ----------
    signal : Signal or array_like
        Input samples. A bare array needs ``fs``.
    wavelet : WaveletSpec, optional
        Defaults to Morlet with ``omega0 = 6``.
    grid : ScaleGrid
        Scales in samples. Each must lie in ``[1, len(signal) / 4]``.
    padding : {"zero", "periodic"}
        ``"zero"`` pads to a power of two so the convolution is linear;
        ``"periodic"`` treats the signal as circular (edge mask is empty).

    Returns
    -------
    CwtMatrix
        Complex coefficients of shape ``(grid.count, len(signal))``.
    """
    wavelet = wavelet or WaveletSpec()
    if grid is None:
        raise InvalidRange("a scale grid is required")
    x, fs = _samples_and_fs(signal, fs)
    if x.ndim != 1:
        raise InvalidRange("signal must be one-dimensional")
    n = x.size
    if n == 0:
        raise EmptyInputError("cannot transform an empty signal")
    if n < 2:
        raise EmptyInputError("signal needs at least 2 samples")
    if fs <= 0:
        raise InvalidRange("fs must be positive")
    scales = grid.scales
    if scales[0] < 1 or scales[-1] > n / 4:
        raise ScaleRangeError(
            f"scales must lie in [1, {n / 4:g}] samples for a {n}-sample signal; "
            f"grid spans [{scales[0]:g}, {scales[-1]:g}]"
        )
    if padding not in ("zero", "periodic"):
        raise InvalidRange(f"unknown padding mode {padding!r}")

    dt = 1.0 / fs
    out = np.empty((grid.count, n), dtype=complex)
    if padding == "zero":
        longest = 2 * int(np.ceil(KERNEL_HALF_WIDTH * scales[-1])) + 1
        nfft = _next_pow2(max(2 * n, n + longest - 1))
        xf = np.fft.fft(x, nfft)
    else:
        nfft = n
        xf = np.fft.fft(x)

    for j, a in enumerate(scales):
        kern = morlet_kernel(a, wavelet)
        half = (kern.size - 1) // 2
        # correlation with psi == convolution with reversed conjugate
        h = np.conj(kern[::-1])
        if padding == "zero":
            hf = np.fft.fft(h, nfft)
            full = np.fft.ifft(xf * hf)
            row = full[half:half + n]
        else:
            wrapped = np.zeros(n, dtype=complex)
            np.add.at(wrapped, (np.arange(h.size) - half) % n, h)
            row = np.fft.ifft(xf * np.fft.fft(wrapped))
        out[j] = row * (dt / np.sqrt(a))

    mask = edge_mask_for(grid, n, periodic=(padding == "periodic"))
    return CwtMatrix(out, grid, fs, mask, wavelet)


def scalogram(m):
    """Energy density ``|T|**2`` of a :class:`CwtMatrix`."""
    c = m.coefficients
    energy = c.real ** 2 + c.imag ** 2
    return Scalogram(energy, m.grid, m.fs, m.edge_mask, m.wavelet)


def total_energy_estimate(m, admissibility=None, *, exclude_edges=True):
    """Signal energy recovered from the scalogram.

    Discretises ``(1/C_g) * sum (1/a**2) |T|**2 da db`` with ``db = dt`` and
    the logarithmic measure ``da_j = a_j * ln 2 / v``, in physical units:
    dilations are converted to seconds (``a * dt``) and coefficients to the
    unit-free convention (``T / sqrt(dt)``), which together contribute a
    factor ``1 / dt**2``. Edge-masked samples are excluded; each scale's
    time integral is extrapolated from its unmasked mean over the full
    duration. The result is doubled because the analytic Morlet only sees
    the positive-frequency half of a real signal's spectrum.

    Requires at least 4 octaves at 8 or more voices per octave.
    """
    grid = m.grid
    if grid.voices_per_octave < 8 or grid.octaves < 4:
        raise InsufficientResolution(
            "energy estimate needs >= 4 octaves at >= 8 voices per octave"
        )
    cg = m.wavelet.admissibility_constant if admissibility is None else admissibility
    e = scalogram(m).energy
    n = e.shape[1]
    dt = 1.0 / m.fs
    if exclude_edges:
        keep = ~m.edge_mask
        counts = keep.sum(axis=1)
        sums = np.where(keep, e, 0.0).sum(axis=1)
        row_time = np.divide(sums * n, counts, out=np.zeros_like(sums), where=counts > 0)
    else:
        row_time = e.sum(axis=1)
    da = grid.scales * np.log(2.0) / grid.voices_per_octave
    integral = np.sum(row_time * dt * da / grid.scales ** 2) / dt ** 2
    return float(2.0 * integral / cg)
