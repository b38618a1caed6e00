"""ECG ingestion: WFDB format 212, one-column CSV, annotation text dumps,
and a seeded synthetic ECG generator with exact R-peak ground truth."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    EmptyInputError,
    InvalidRange,
    OrderingError,
    ParseError,
    TruncatedData,
    UnsupportedFormat,
)

BEAT_SYMBOLS = frozenset("NLRAaJSVFejE/fQ")


@dataclass(frozen=True, eq=False)
class Signal:
    samples: np.ndarray
    fs: float
    record_name: str = ""
    channel_name: str = ""

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim != 1:
            raise InvalidRange("samples must be one-dimensional")
        if not self.fs > 0:
            raise InvalidRange(f"fs must be positive, got {self.fs}")
        if not np.all(np.isfinite(arr)):
            raise InvalidRange("samples must be finite")
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "fs", float(self.fs))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size / self.fs


@dataclass(frozen=True)
class ChannelSpec:
    file_name: str
    format_code: int
    adc_gain: float
    adc_zero: int
    channel_name: str = ""
    initial_value: int | None = None


@dataclass(frozen=True)
class RecordHeader:
    record_name: str
    channel_count: int
    fs: float
    samples_per_channel: int
    channels: tuple[ChannelSpec, ...] = ()


@dataclass(frozen=True)
class AnnotationList:
    """Beat annotations ``(sample_index, symbol)`` in strictly increasing order."""

    entries: tuple[tuple[int, str], ...]
    fs: float | None = None

    def __post_init__(self):
        entries = tuple((int(s), str(c)) for s, c in self.entries)
        for (prev, _), (cur, _) in zip(entries, entries[1:]):
            if cur <= prev:
                raise OrderingError(f"annotation samples not increasing: {prev} then {cur}")
        object.__setattr__(self, "entries", entries)

    @property
    def samples(self):
        return np.array([s for s, _ in self.entries], dtype=np.int64)

    def __len__(self):
        return len(self.entries)

    def in_window(self, start, stop, rebase=True):
        """Entries with ``start <= sample < stop``, optionally shifted by ``-start``."""
        off = start if rebase else 0
        kept = [(s - off, c) for s, c in self.entries if start <= s < stop]
        return AnnotationList(tuple(kept), self.fs)


def slice_annotations(ann, fs, t0, duration):
    """Annotations matching :func:`slice_seconds` for the same window."""
    start = int(round(t0 * fs))
    stop = int(round((t0 + duration) * fs))
    return ann.in_window(start, stop)


# --- WFDB header -------------------------------------------------------------

def _parse_gain(token, line_no):
    # "200", "200(0)", "200/mV", "200(-12)/mV"
    unit_split = token.split("/", 1)
    gain_part = unit_split[0]
    baseline = None
    if "(" in gain_part:
        gain_part, rest = gain_part.split("(", 1)
        try:
            baseline = int(rest.rstrip(")"))
        except ValueError as exc:
            raise ParseError(f"bad baseline in {token!r}", line_no) from exc
    try:
        gain = float(gain_part)
    except ValueError as exc:
        raise ParseError(f"bad ADC gain {token!r}", line_no) from exc
    return gain, baseline


def read_header(text):
    """Parse a WFDB ``.hea`` header. Only format 212 signals are accepted."""
    lines = [
        (i, ln.strip())
        for i, ln in enumerate(text.splitlines(), start=1)
        if ln.strip() and not ln.lstrip().startswith("#")
    ]
    if not lines:
        raise EmptyInputError("empty header")
    line_no, first = lines[0]
    parts = first.split()
    if len(parts) < 4:
        raise ParseError("record line needs: name nsig fs nsamples", line_no)
    name = parts[0]
    if "/" in name:
        raise UnsupportedFormat("multi-segment records are not supported")
    try:
        nsig = int(parts[1])
        fs = float(parts[2].split("/")[0].split("(")[0])
        nsamp = int(parts[3])
    except ValueError as exc:
        raise ParseError(f"bad record line {first!r}", line_no) from exc
    if nsig not in (1, 2):
        raise UnsupportedFormat(f"only 1 or 2 channels supported, header declares {nsig}")
    if fs <= 0 or nsamp < 0:
        raise ParseError("fs must be positive and sample count nonnegative", line_no)
    if len(lines) < 1 + nsig:
        raise ParseError(f"expected {nsig} signal lines, found {len(lines) - 1}", lines[-1][0])

    channels = []
    for line_no, ln in lines[1:1 + nsig]:
        cols = ln.split()
        if len(cols) < 2:
            raise ParseError("signal line needs at least file name and format", line_no)
        fmt_token = cols[1].split("x")[0].split(":")[0].split("+")[0]
        try:
            fmt = int(fmt_token)
        except ValueError as exc:
            raise ParseError(f"bad format field {cols[1]!r}", line_no) from exc
        if fmt != 212:
            raise UnsupportedFormat(f"format {fmt} not supported (only 212)")
        gain, zero, init, desc = 200.0, 0, None, ""
        if len(cols) > 2:
            gain, _ = _parse_gain(cols[2], line_no)
        try:
            if len(cols) > 4:
                zero = int(cols[4])
            if len(cols) > 5:
                init = int(cols[5])
        except ValueError as exc:
            raise ParseError(f"bad integer field in {ln!r}", line_no) from exc
        if len(cols) > 8:
            desc = " ".join(cols[8:])
        if gain == 0:
            gain = 200.0  # WFDB convention: 0 means uncalibrated, default 200
        if gain < 0:
            raise ParseError("ADC gain must be positive", line_no)
        channels.append(ChannelSpec(cols[0], fmt, gain, zero, desc, init))
    return RecordHeader(name, nsig, fs, nsamp, tuple(channels))


def write_header(header):
    out = [f"{header.record_name} {header.channel_count} {header.fs:g} {header.samples_per_channel}"]
    for ch in header.channels:
        init = 0 if ch.initial_value is None else ch.initial_value
        out.append(
            f"{ch.file_name} {ch.format_code} {ch.adc_gain:g} 12 {ch.adc_zero} {init} 0 0 {ch.channel_name}".rstrip()
        )
    return "\n".join(out) + "\n"


# --- format 212 --------------------------------------------------------------

def unpack_212(data, n_values):
    """Unpack ``n_values`` signed 12-bit integers from format-212 bytes."""
    n_groups = math.ceil(n_values / 2)
    need = 3 * n_groups
    buf = np.frombuffer(bytes(data), dtype=np.uint8)
    if buf.size < need:
        raise TruncatedData(f"need {need} bytes for {n_values} samples, have {buf.size}")
    g = buf[:need].reshape(-1, 3).astype(np.int32)
    s1 = g[:, 0] | ((g[:, 1] & 0x0F) << 8)
    s2 = g[:, 2] | ((g[:, 1] & 0xF0) << 4)
    raw = np.empty(2 * n_groups, dtype=np.int32)
    raw[0::2] = s1
    raw[1::2] = s2
    raw[raw >= 2048] -= 4096
    return raw[:n_values]


def pack_212(values):
    """Inverse of :func:`unpack_212`; an odd count is padded with a zero."""
    v = np.asarray(values, dtype=np.int64)
    if v.size and (v.min() < -2048 or v.max() > 2047):
        raise InvalidRange("format 212 holds 12-bit values in [-2048, 2047]")
    if v.size % 2:
        v = np.append(v, 0)
    u = (v & 0xFFF).astype(np.uint16)
    s1, s2 = u[0::2], u[1::2]
    out = np.empty((s1.size, 3), dtype=np.uint8)
    out[:, 0] = s1 & 0xFF
    out[:, 1] = ((s1 >> 8) & 0x0F) | ((s2 >> 4) & 0xF0)
    out[:, 2] = s2 & 0xFF
    return out.tobytes()


def decode_212_raw(data, header):
    """Raw ADC values, shape ``(channel_count, samples_per_channel)``."""
    nch = header.channel_count
    n = header.samples_per_channel
    raw = unpack_212(data, n * nch)
    return raw.reshape(n, nch).T


def decode_212(data, header):
    """Decode format-212 bytes into one :class:`Signal` per channel (mV)."""
    raw = decode_212_raw(data, header)
    signals = []
    for ch_idx, spec in enumerate(header.channels):
        mv = (raw[ch_idx] - spec.adc_zero) / spec.adc_gain
        signals.append(Signal(mv, header.fs, header.record_name, spec.channel_name))
    return signals


def encode_212(raw):
    """Encode raw ADC values of shape ``(channels, samples)`` (or 1-D for one channel)."""
    raw = np.atleast_2d(np.asarray(raw))
    return pack_212(raw.T.reshape(-1))


def read_wfdb(header_path, channels=None):
    """Read a ``.hea``/``.dat`` pair; returns ``(header, [Signal, ...])``."""
    header_path = Path(header_path)
    header = read_header(header_path.read_text())
    files = {ch.file_name for ch in header.channels}
    if len(files) != 1:
        raise UnsupportedFormat("channels must share one .dat file")
    data = (header_path.parent / files.pop()).read_bytes()
    signals = decode_212(data, header)
    if channels is not None:
        signals = [signals[c] for c in channels]
    return header, signals


# --- CSV ---------------------------------------------------------------------

def read_csv_signal(text, fs, record_name="", channel_name=""):
    """One sample (mV) per line, with an optional non-numeric header line."""
    lines = text.splitlines()
    values = []
    for i, ln in enumerate(lines, start=1):
        tok = ln.strip()
        if not tok:
            continue
        tok = tok.split(",")[0].strip()
        try:
            values.append(float(tok))
        except ValueError:
            if i == 1:
                continue
            raise ParseError(f"non-numeric sample {tok!r}", i) from None
    if not values:
        raise EmptyInputError("CSV contains no samples")
    return Signal(np.array(values), fs, record_name, channel_name)


def write_csv_signal(signal, header="mV"):
    buf = io.StringIO()
    if header:
        buf.write(header + "\n")
    for v in signal.samples:
        buf.write(f"{v:.6f}\n")
    return buf.getvalue()


# --- annotations -------------------------------------------------------------

def read_annotations(text, fs=None, beats_only=True):
    """Parse a ``time sample symbol ...`` annotation dump.

    Non-beat symbols (rhythm changes, noise markers, ...) are dropped unless
    ``beats_only`` is False. A leading column-title line is skipped.
    """
    entries = []
    for i, ln in enumerate(text.splitlines(), start=1):
        cols = ln.split()
        if not cols:
            continue
        if len(cols) < 3:
            raise ParseError("expected columns: time sample symbol", i)
        try:
            sample = int(cols[1])
        except ValueError:
            if not entries and "sample" in ln.lower():
                continue
            raise ParseError(f"bad sample index {cols[1]!r}", i) from None
        symbol = cols[2]
        if beats_only and symbol not in BEAT_SYMBOLS:
            continue
        if entries and sample <= entries[-1][0]:
            raise OrderingError(f"line {i}: sample {sample} does not follow {entries[-1][0]}")
        entries.append((sample, symbol))
    return AnnotationList(tuple(entries), fs)


def _format_time(seconds):
    minutes, sec = divmod(seconds, 60.0)
    return f"{int(minutes)}:{sec:06.3f}"


def write_annotations(ann, fs):
    rows = ["      Time   Sample #  Type  Sub Chan  Num"]
    for sample, symbol in ann.entries:
        rows.append(f"{_format_time(sample / fs):>12} {sample:>8} {symbol:>5} {0:>4} {0:>4} {0:>4}")
    return "\n".join(rows) + "\n"


# --- windows -----------------------------------------------------------------

def slice_seconds(signal, t0, duration):
    """Samples ``[round(t0*fs), round((t0+duration)*fs))``."""
    if t0 < 0 or duration <= 0:
        raise InvalidRange(f"invalid window t0={t0}, duration={duration}")
    start = int(round(t0 * signal.fs))
    stop = int(round((t0 + duration) * signal.fs))
    if stop > len(signal):
        raise InvalidRange(
            f"window [{t0}, {t0 + duration}) s exceeds signal duration {signal.duration:g} s"
        )
    return replace(signal, samples=signal.samples[start:stop].copy())


# --- synthetic ECG -----------------------------------------------------------

@dataclass(frozen=True)
class SyntheticEcgSpec:
    duration_s: float = 10.0
    fs: float = 360.0
    heart_rate_bpm: float = 60.0
    qrs_width_s: float = 0.08
    qrs_amplitude_mv: float = 1.0
    p_amplitude_mv: float = 0.15
    t_amplitude_mv: float = 0.3
    noise_std_mv: float = 0.05
    baseline_drift_amplitude_mv: float = 0.0
    baseline_drift_freq_hz: float = 0.3
    rr_jitter_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.duration_s <= 0:
            raise InvalidRange("duration must be positive")
        if self.fs <= 200:
            raise InvalidRange("fs must exceed 200 Hz to cover the ECG band")
        if self.heart_rate_bpm <= 0:
            raise InvalidRange("heart rate must be positive")
        if not 0.06 <= self.qrs_width_s <= 0.1:
            raise InvalidRange("QRS width must lie in [0.06, 0.1] s")
        amps = (
            self.qrs_amplitude_mv, self.p_amplitude_mv, self.t_amplitude_mv,
            self.noise_std_mv, self.baseline_drift_amplitude_mv,
        )
        if any(a < 0 for a in amps):
            raise InvalidRange("amplitudes and noise level must be nonnegative")
        if self.baseline_drift_freq_hz < 0:
            raise InvalidRange("drift frequency must be nonnegative")
        if not 0 <= self.rr_jitter_fraction < 0.5:
            raise InvalidRange("RR jitter fraction must lie in [0, 0.5)")


# P and T: (offset from R in s, Gaussian sigma in s); "width" spans +-1 sigma
_P_WAVE = (-0.16, 0.025)
_T_WAVE = (0.25, 0.06)


def _gauss(t, center, sigma):
    return np.exp(-0.5 * ((t - center) / sigma) ** 2)


def _beat_times(spec, rng):
    """R-peak times of a beat train centred in the record.

    ``round(duration / RR)`` beats are laid out (jittered if requested) and
    the train is centred, so with zero jitter each end keeps at least a
    quarter RR interval. Beats pushed closer than that to either end by
    jitter are dropped.
    """
    rr = 60.0 / spec.heart_rate_bpm
    n = max(1, int(math.floor(spec.duration_s / rr + 0.5)))
    intervals = np.full(n - 1, rr)
    if spec.rr_jitter_fraction:
        intervals = intervals * (1.0 + spec.rr_jitter_fraction * rng.uniform(-1.0, 1.0, n - 1))
    times = np.concatenate(([0.0], np.cumsum(intervals)))
    times += 0.5 * (spec.duration_s - times[-1])
    guard = min(0.25 * rr, 0.5 * spec.duration_s)
    return times[(times >= guard - 1e-12) & (times <= spec.duration_s - guard + 1e-12)]


def synthesize_clean(spec, r_times):
    """Noise-free, drift-free ECG for the given R-peak times."""
    n = int(round(spec.duration_s * spec.fs))
    t = np.arange(n) / spec.fs
    x = np.zeros(n)
    w = spec.qrs_width_s
    a = spec.qrs_amplitude_mv
    for r in r_times:
        # evaluate only near the beat; tails beyond 1 s are < 1e-30
        lo = max(0, int((r - 1.0) * spec.fs))
        hi = min(n, int((r + 1.0) * spec.fs) + 1)
        tt = t[lo:hi]
        beat = a * _gauss(tt, r, w / 10)
        beat -= 0.15 * a * _gauss(tt, r - 0.3 * w, w / 12)
        beat -= 0.25 * a * _gauss(tt, r + 0.3 * w, w / 12)
        beat += spec.p_amplitude_mv * _gauss(tt, r + _P_WAVE[0], _P_WAVE[1])
        beat += spec.t_amplitude_mv * _gauss(tt, r + _T_WAVE[0], _T_WAVE[1])
        x[lo:hi] += beat
    return x


def synthesize_ecg(spec):
    """Seeded synthetic ECG and its exact R-peak annotations.

    Beats follow the nominal RR interval ``60 / bpm`` with uniform
    multiplicative jitter, centred in the record (see ``_beat_times``). Each beat is a Q-R-S
    Gaussian triplet spanning ``qrs_width_s`` plus Gaussian P and T waves;
    white noise and a sinusoidal baseline drift are added on top.

    Returns
    -------
    (Signal, AnnotationList)
    """
    rng = np.random.default_rng(spec.seed)
    r_times = _beat_times(spec, rng)
    x = synthesize_clean(spec, r_times)
    n = x.size
    t = np.arange(n) / spec.fs
    if spec.baseline_drift_amplitude_mv:
        phase = rng.uniform(0, 2 * np.pi)
        x = x + spec.baseline_drift_amplitude_mv * np.sin(2 * np.pi * spec.baseline_drift_freq_hz * t + phase)
    if spec.noise_std_mv:
        x = x + rng.normal(0.0, spec.noise_std_mv, n)
    r_samples = np.round(r_times * spec.fs).astype(np.int64)
    r_samples = r_samples[r_samples < n]
    ann = AnnotationList(tuple((int(s), "N") for s in r_samples), spec.fs)
    return Signal(x, spec.fs, f"synthetic-{spec.seed}", "synthetic"), ann
