"""QRS detection from the band of high scalogram energy around 10-25 Hz.

Pipeline: cwt -> scalogram -> band energy -> adaptive threshold ->
supra-threshold peaks -> refractory merge (strongest first).
"""
from __future__ import annotations

import bisect

from dataclasses import dataclass, field

import numpy as np

from .errors import CalibrationError, IncompatibleInputs, InvalidRange
from .wavelet_core import WaveletSpec, cwt, grid_for_frequencies, scale_to_pseudofrequency, scalogram

# window over which the threshold percentile is taken; longer inputs slide it
PERCENTILE_WINDOW_S = 10.0
SLIDING_THRESHOLD_ABOVE_S = 30.0
ENERGY_PERCENTILE = 95.0


@dataclass(frozen=True)
class BandSpec:
    f_lo: float = 10.0
    f_hi: float = 25.0
    j_lo: int | None = None
    j_hi: int | None = None

    def __post_init__(self):
        if not 0 < self.f_lo < self.f_hi:
            raise InvalidRange(f"need 0 < f_lo < f_hi, got {self.f_lo}, {self.f_hi}")

    @property
    def resolved(self):
        return self.j_lo is not None and self.j_hi is not None

    @property
    def indices(self):
        return np.arange(self.j_lo, self.j_hi + 1)


@dataclass(frozen=True)
class DetectorConfig:
    band: BandSpec = field(default_factory=BandSpec)
    threshold_fraction: float = 0.25
    refractory_s: float = 0.2
    aggregation: str = "mean"
    exclude_edges: bool = True

    def __post_init__(self):
        if not 0 < self.threshold_fraction < 1:
            raise InvalidRange("threshold_fraction must lie in (0, 1)")
        if self.refractory_s < 0.1:
            raise InvalidRange("refractory_s must be at least 0.1 s")
        if self.aggregation not in ("mean", "max"):
            raise InvalidRange(f"aggregation must be 'mean' or 'max', got {self.aggregation!r}")


@dataclass(frozen=True)
class BeatList:
    indices: np.ndarray
    scores: np.ndarray
    fs: float

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        sc = np.asarray(self.scores, dtype=float)
        if idx.shape != sc.shape:
            raise InvalidRange("indices and scores must have the same length")
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            raise InvalidRange("beat indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "scores", sc)

    def __len__(self):
        return self.indices.size

    @property
    def times(self):
        return self.indices / self.fs

    def __eq__(self, other):
        if not isinstance(other, BeatList):
            return NotImplemented
        return (
            self.fs == other.fs
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.scores, other.scores)
        )


@dataclass(frozen=True)
class EvaluationReport:
    true_positives: int
    false_positives: int
    false_negatives: int
    match_window_s: float

    @property
    def sensitivity(self):
        denom = self.true_positives + self.false_negatives
        return self.true_positives / denom if denom else 1.0

    @property
    def positive_predictivity(self):
        denom = self.true_positives + self.false_positives
        return self.true_positives / denom if denom else 1.0

    def as_dict(self):
        return {
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "sensitivity": self.sensitivity,
            "positive_predictivity": self.positive_predictivity,
            "match_window_s": self.match_window_s,
        }


def calibrate_band(grid, fs, wavelet, f_lo=10.0, f_hi=25.0):
    """Resolve a pseudo-frequency band to a contiguous range of grid indices."""
    BandSpec(f_lo, f_hi)  # validates the range
    freqs = scale_to_pseudofrequency(grid.scales, fs, wavelet)
    tol = 1e-9 * f_hi
    if f_hi > freqs[0] + tol or f_lo < freqs[-1] - tol:
        raise CalibrationError(
            f"band {f_lo}-{f_hi} Hz outside grid span {freqs[-1]:.4g}-{freqs[0]:.4g} Hz"
        )
    inside = np.flatnonzero((freqs >= f_lo - tol) & (freqs <= f_hi + tol))
    if inside.size == 0:
        raise CalibrationError(f"no grid scale falls in {f_lo}-{f_hi} Hz")
    return BandSpec(f_lo, f_hi, int(inside[0]), int(inside[-1]))


def band_energy(s, band, aggregation="mean", exclude_edges=True):
    """Per-sample band energy, aggregated over the band's scales.

    Masked entries are left out of the mean (or max); samples whose band
    entries are all masked get 0.
    """
    if not band.resolved:
        band = calibrate_band(s.grid, s.fs, s.wavelet, band.f_lo, band.f_hi)
    rows = s.energy[band.j_lo:band.j_hi + 1]
    if not exclude_edges:
        return rows.mean(axis=0) if aggregation == "mean" else rows.max(axis=0)
    keep = ~s.edge_mask[band.j_lo:band.j_hi + 1]
    counts = keep.sum(axis=0)
    if aggregation == "mean":
        sums = np.where(keep, rows, 0.0).sum(axis=0)
        return np.divide(sums, counts, out=np.zeros(rows.shape[1]), where=counts > 0)
    return np.where(keep, rows, 0.0).max(axis=0)


def _window_starts(n, win, hop):
    starts = list(range(0, max(n - win, 0) + 1, hop))
    if starts[-1] + win < n:
        starts.append(n - win)
    return starts


def adaptive_threshold(e, fs, fraction):
    """Per-sample threshold ``fraction * p95(e)``.

    Up to 30 s the percentile covers the whole input; beyond that it is taken
    over 10 s windows with 50% overlap and each sample uses the window whose
    centre is nearest.
    """
    n = e.size
    if n <= int(round(SLIDING_THRESHOLD_ABOVE_S * fs)):
        return np.full(n, fraction * np.percentile(e, ENERGY_PERCENTILE))
    win = int(round(PERCENTILE_WINDOW_S * fs))
    starts = _window_starts(n, win, win // 2)
    levels = np.array([np.percentile(e[s:s + win], ENERGY_PERCENTILE) for s in starts])
    centres = np.array(starts) + win / 2.0
    nearest = np.abs(np.arange(n)[:, None] - centres[None, :]).argmin(axis=1)
    return fraction * levels[nearest]


def _peak_candidates(e, threshold):
    """Supra-threshold local maxima; a plateau is represented by its first sample."""
    padded = np.concatenate(([-np.inf], e, [-np.inf]))
    rising = padded[1:-1] > padded[:-2]
    not_falling_next = padded[1:-1] >= padded[2:]
    return np.flatnonzero(rising & not_falling_next & (e > threshold))


def pick_beats(e, threshold, fs, refractory_s):
    """Beats from a band-energy series and per-sample threshold.

    Candidates are the supra-threshold local maxima, so every run yields at
    least its argmax (earliest sample on ties). Peaks are accepted in
    decreasing score order (earliest first on ties) and any peak within
    ``refractory_s`` of an accepted one is merged into it. Because a peak's
    fate depends only on higher-scoring peaks, raising the threshold can
    only remove beats.
    """
    refractory = refractory_s * fs
    cand = _peak_candidates(e, threshold)
    order = cand[np.lexsort((cand, -e[cand]))]
    accepted = []  # kept sorted
    for idx in order.tolist():
        k = bisect.bisect_left(accepted, idx)
        if k > 0 and idx - accepted[k - 1] < refractory:
            continue
        if k < len(accepted) and accepted[k] - idx < refractory:
            continue
        accepted.insert(k, idx)
    idx = np.array(accepted, dtype=np.int64)
    return BeatList(idx, e[idx].astype(float), fs)


def default_grid(fs, wavelet, f_min=2.0, f_max=40.0, voices_per_octave=16):
    return grid_for_frequencies(f_min, f_max, fs, wavelet, voices_per_octave)


def detect_qrs(signal, wavelet=None, grid=None, config=None):
    """Locate QRS complexes in a :class:`~qrswave.signal_io.Signal`.

    Constant or silent input yields an empty :class:`BeatList`.
    """
    wavelet = wavelet or WaveletSpec()
    config = config or DetectorConfig()
    fs = signal.fs
    grid = grid or default_grid(fs, wavelet)
    x = np.asarray(signal.samples, dtype=float)
    empty = BeatList(np.zeros(0, dtype=np.int64), np.zeros(0), fs)
    if x.size / fs < 2.0:
        raise InvalidRange("detection needs at least 2 s of signal")
    if np.ptp(x) == 0:
        return empty
    band = config.band
    if not band.resolved:
        band = calibrate_band(grid, fs, wavelet, band.f_lo, band.f_hi)
    s = scalogram(cwt(signal, wavelet, grid))
    e = band_energy(s, band, config.aggregation, config.exclude_edges)
    theta = adaptive_threshold(e, fs, config.threshold_fraction)
    if not np.any(theta > 0):
        return empty
    return pick_beats(e, theta, fs, config.refractory_s)


def evaluate(detected, reference, match_window_s=0.15, fs=None):
    """Score detections against reference beats with one-to-one matching.

    References are visited in time order; each takes the nearest still
    unmatched detection within ``match_window_s`` (earlier one on ties).
    """
    ref_fs = reference.fs if reference.fs is not None else fs
    if ref_fs is not None and not np.isclose(ref_fs, detected.fs, rtol=0, atol=1e-9):
        raise IncompatibleInputs(f"sampling rates differ: {detected.fs} vs {ref_fs}")
    window = match_window_s * detected.fs
    det = detected.indices
    used = np.zeros(det.size, dtype=bool)
    tp = 0
    for r in reference.samples:
        lo = np.searchsorted(det, r - window, side="left")
        hi = np.searchsorted(det, r + window, side="right")
        best, best_d = -1, None
        for k in range(lo, hi):
            if used[k]:
                continue
            d = abs(int(det[k]) - int(r))
            if best_d is None or d < best_d:
                best, best_d = k, d
        if best >= 0:
            used[best] = True
            tp += 1
    return EvaluationReport(
        true_positives=tp,
        false_positives=int(det.size - tp),
        false_negatives=int(len(reference) - tp),
        match_window_s=float(match_window_s),
    )


def beat_count_in_window(detections, t0, duration):
    """Number of beats with ``t0 <= index/fs < t0 + duration``."""
    if duration < 0 or t0 < 0:
        raise InvalidRange("window must have t0 >= 0 and duration >= 0")
    t = detections.indices / detections.fs
    return int(np.count_nonzero((t >= t0) & (t < t0 + duration)))
