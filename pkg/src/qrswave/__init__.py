"""Morlet continuous wavelet transform and scalogram-band QRS detection."""

__version__ = "0.1.0"

from .wavelet_core import (  # noqa: E402
    CwtMatrix,
    ScaleGrid,
    Scalogram,
    WaveletSpec,
    admissibility_constant,
    cwt,
    grid_for_frequencies,
    make_scale_grid,
    morlet,
    pseudofrequency_to_scale,
    scale_to_pseudofrequency,
    scalogram,
    total_energy_estimate,
    wavelet_energy,
)
from .signal_io import (  # noqa: E402
    AnnotationList,
    RecordHeader,
    Signal,
    SyntheticEcgSpec,
    decode_212,
    encode_212,
    read_annotations,
    read_csv_signal,
    read_header,
    read_wfdb,
    slice_seconds,
    synthesize_ecg,
)
from .qrs_detector import (  # noqa: E402
    BandSpec,
    BeatList,
    DetectorConfig,
    EvaluationReport,
    band_energy,
    beat_count_in_window,
    calibrate_band,
    detect_qrs,
    evaluate,
)
