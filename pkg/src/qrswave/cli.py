"""Command-line front end.

Every command writes its data to files (never stdout) plus a JSON run
manifest holding the fully resolved configuration. ``qrswave replay
MANIFEST`` re-executes a run from its manifest.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InvalidRange, ParseError, QrsWaveError
from .qrs_detector import (
    BandSpec,
    BeatList,
    DetectorConfig,
    calibrate_band,
    default_grid,
    detect_qrs,
    evaluate,
)
from .signal_io import (
    SyntheticEcgSpec,
    read_annotations,
    read_csv_signal,
    read_wfdb,
    slice_seconds,
    synthesize_ecg,
    write_annotations,
    write_csv_signal,
)
from .wavelet_core import WaveletSpec, cwt, scalogram

PGM_MAX = 65535


class OutputSet:
    """Tracks written files so a failed run can remove its partial outputs."""

    def __init__(self):
        self.paths = []

    def write_text(self, path, text):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.paths.append(path)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        return path

    def write_bytes(self, path, data):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.paths.append(path)
        path.write_bytes(data)
        return path

    def discard(self):
        for p in self.paths:
            try:
                p.unlink()
            except FileNotFoundError:
                pass


# --- loading -----------------------------------------------------------------

def _input_format(path, declared):
    if declared != "auto":
        return declared
    return "wfdb" if Path(path).suffix.lower() == ".hea" else "csv"


def load_window(cfg):
    """Signal for the configured input, channel and time window."""
    path = cfg["input"]
    if _input_format(path, cfg["input_format"]) == "wfdb":
        _, signals = read_wfdb(path)
        if not 0 <= cfg["channel"] < len(signals):
            raise InvalidRange(f"channel {cfg['channel']} not in record ({len(signals)} channels)")
        sig = signals[cfg["channel"]]
    else:
        if cfg["fs"] is None:
            raise InvalidRange("--fs is required for CSV input")
        sig = read_csv_signal(Path(path).read_text(), cfg["fs"], record_name=Path(path).stem)
    duration = cfg["duration"]
    if duration is None:
        duration = sig.duration - cfg["t0"]
        cfg["duration"] = duration
    if cfg["t0"] == 0 and duration == sig.duration:
        return sig, 0
    return slice_seconds(sig, cfg["t0"], duration), int(round(cfg["t0"] * sig.fs))


def _wavelet_and_grid(cfg, fs):
    wavelet = WaveletSpec(cfg["omega0"])
    grid = default_grid(fs, wavelet, cfg["fmin"], cfg["fmax"], cfg["voices"])
    return wavelet, grid


# --- output formats ----------------------------------------------------------

def format_scalogram_csv(s, t0=0.0):
    """Rows are samples, columns are scales in grid order."""
    freqs = s.pseudofrequencies
    lines = ["time_s," + ",".join(f"{f:.6f}" for f in freqs)]
    times = t0 + np.arange(s.energy.shape[1]) / s.fs
    for n, t in enumerate(times):
        lines.append(f"{t:.6f}," + ",".join(f"{v:.6e}" for v in s.energy[:, n]))
    return "\n".join(lines) + "\n"


def scalogram_to_pgm(energy, log=False):
    """16-bit binary PGM; one row per scale, coarsest scale on top."""
    e = np.asarray(energy, dtype=float)[::-1]
    peak = e.max() if e.size else 0.0
    if peak > 0:
        u = e / peak
        if log:
            u = np.log10(1.0 + 9999.0 * u) / 4.0
        pix = np.round(np.clip(u, 0.0, 1.0) * PGM_MAX).astype(">u2")
    else:
        pix = np.zeros(e.shape, dtype=">u2")
    height, width = e.shape
    return f"P5\n{width} {height}\n{PGM_MAX}\n".encode("ascii") + pix.tobytes()


def read_pgm(data):
    """Parse a 16-bit PGM produced by :func:`scalogram_to_pgm`."""
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ParseError("not a binary PGM")
    width, height = map(int, parts[1].split())
    maxval = int(parts[2])
    pix = np.frombuffer(parts[3], dtype=">u2" if maxval > 255 else np.uint8)
    return pix.reshape(height, width), maxval


def format_scales(s):
    lines = ["index,dilation,pseudo_frequency_hz"]
    for j, (a, f) in enumerate(zip(s.grid.scales, s.pseudofrequencies)):
        lines.append(f"{j},{a:.6f},{f:.6f}")
    return "\n".join(lines) + "\n"


def format_beats(beats, offset=0):
    lines = ["sample,time_s,score"]
    for idx, score in zip(beats.indices, beats.scores):
        sample = int(idx) + offset
        lines.append(f"{sample},{sample / beats.fs:.6f},{score:.6e}")
    return "\n".join(lines) + "\n"


def read_beats(text, fs):
    """Parse a ``sample,time_s,score`` beat file."""
    rows = text.splitlines()
    if not rows or rows[0].strip() != "sample,time_s,score":
        raise ParseError("missing header 'sample,time_s,score'", 1)
    idx, scores = [], []
    for i, ln in enumerate(rows[1:], start=2):
        if not ln.strip():
            continue
        cols = ln.split(",")
        if len(cols) != 3:
            raise ParseError("expected 3 columns", i)
        try:
            idx.append(int(cols[0]))
            scores.append(float(cols[2]))
        except ValueError:
            raise ParseError(f"bad beat row {ln!r}", i) from None
    try:
        return BeatList(np.array(idx, dtype=np.int64), np.array(scores), fs)
    except InvalidRange as exc:
        raise ParseError(str(exc)) from exc


def format_report(report, reference_count, detected_count):
    d = report.as_dict()
    d["reference_beats"] = reference_count
    d["detected_beats"] = detected_count
    lines = []
    for key, val in d.items():
        lines.append(f"{key}={val:.6f}" if isinstance(val, float) else f"{key}={val}")
    return "\n".join(lines) + "\n"


def parse_report(text):
    out = {}
    for ln in text.splitlines():
        if "=" in ln:
            k, v = ln.split("=", 1)
            out[k] = float(v) if "." in v else int(v)
    return out


# --- commands ----------------------------------------------------------------

def run_transform(cfg, outputs):
    sig, offset = load_window(cfg)
    wavelet, grid = _wavelet_and_grid(cfg, sig.fs)
    s = scalogram(cwt(sig, wavelet, grid))
    out_dir = Path(cfg["out_dir"])
    written = []
    if cfg["format"] in ("csv", "both"):
        written.append(outputs.write_text(out_dir / "scalogram.csv", format_scalogram_csv(s, offset / sig.fs)))
    if cfg["format"] in ("pgm", "both"):
        written.append(outputs.write_bytes(out_dir / "scalogram.pgm", scalogram_to_pgm(s.energy, cfg["log"])))
    written.append(outputs.write_text(out_dir / "scales.csv", format_scales(s)))
    return [cfg["input"]], written, out_dir / "manifest.json"


def detector_config(cfg):
    return DetectorConfig(
        band=BandSpec(cfg["f_lo"], cfg["f_hi"]),
        threshold_fraction=cfg["threshold"],
        refractory_s=cfg["refractory"],
        aggregation=cfg["aggregation"],
        exclude_edges=not cfg["include_edges"],
    )


def run_detect(cfg, outputs):
    sig, offset = load_window(cfg)
    wavelet, grid = _wavelet_and_grid(cfg, sig.fs)
    config = detector_config(cfg)
    calibrate_band(grid, sig.fs, wavelet, config.band.f_lo, config.band.f_hi)
    beats = detect_qrs(sig, wavelet, grid, config)
    out = Path(cfg["out"])
    written = [outputs.write_text(out, format_beats(beats, offset))]
    return [cfg["input"]], written, out.with_name(out.stem + ".manifest.json")


def run_evaluate(cfg, outputs):
    fs = cfg["fs"]
    beats = read_beats(Path(cfg["beats"]).read_text(), fs)
    ann = read_annotations(Path(cfg["annotations"]).read_text(), fs)
    report = evaluate(beats, ann, cfg["window_ms"] / 1000.0)
    out = Path(cfg["out"])
    written = [outputs.write_text(out, format_report(report, len(ann), len(beats)))]
    return [cfg["beats"], cfg["annotations"]], written, out.with_name(out.stem + ".manifest.json")


def synth_spec(cfg):
    return SyntheticEcgSpec(
        duration_s=cfg["duration"],
        fs=cfg["fs"],
        heart_rate_bpm=cfg["bpm"],
        qrs_width_s=cfg["qrs_width"],
        qrs_amplitude_mv=cfg["qrs_amp"],
        p_amplitude_mv=cfg["p_amp"],
        t_amplitude_mv=cfg["t_amp"],
        noise_std_mv=cfg["noise"],
        baseline_drift_amplitude_mv=cfg["drift"],
        baseline_drift_freq_hz=cfg["drift_freq"],
        rr_jitter_fraction=cfg["jitter"],
        seed=cfg["seed"],
    )


def run_synth(cfg, outputs):
    spec = synth_spec(cfg)
    sig, ann = synthesize_ecg(spec)
    prefix = cfg["out_prefix"]
    written = [
        outputs.write_text(prefix + ".csv", write_csv_signal(sig)),
        outputs.write_text(prefix + ".ann.txt", write_annotations(ann, spec.fs)),
    ]
    return [], written, Path(prefix + ".manifest.json")


COMMANDS = {
    "transform": run_transform,
    "detect": run_detect,
    "evaluate": run_evaluate,
    "synth": run_synth,
}

PATH_KEYS = ("input", "out_dir", "out", "beats", "annotations", "out_prefix")


def execute(command, cfg):
    """Run ``command`` with a resolved config; returns the manifest dict."""
    cfg = dict(cfg)
    for key in PATH_KEYS:
        if cfg.get(key) is not None:
            cfg[key] = os.path.abspath(cfg[key])
    outputs = OutputSet()
    start = time.perf_counter()
    try:
        inputs, written, manifest_path = COMMANDS[command](cfg, outputs)
        manifest = {
            "command": command,
            "inputs": [str(p) for p in inputs],
            "outputs": [str(p) for p in written],
            "config": cfg,
            "tool_version": __version__,
            "wall_clock_s": round(time.perf_counter() - start, 6),
        }
        outputs.write_text(manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except BaseException:
        outputs.discard()
        raise
    return manifest


def replay(manifest_path):
    manifest = json.loads(Path(manifest_path).read_text())
    return execute(manifest["command"], manifest["config"])


# --- argument parsing --------------------------------------------------------

def _add_input_args(p):
    p.add_argument("input", help=".hea header (WFDB 212) or one-column CSV in mV")
    p.add_argument("--input-format", choices=["auto", "wfdb", "csv"], default="auto")
    p.add_argument("--fs", type=float, default=None, help="sampling rate in Hz (CSV input)")
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--t0", type=float, default=0.0, help="window start in seconds")
    p.add_argument("--duration", type=float, default=None, help="window length in seconds")
    p.add_argument("--fmin", type=float, default=2.0, help="lowest pseudo-frequency (Hz)")
    p.add_argument("--fmax", type=float, default=40.0, help="highest pseudo-frequency (Hz)")
    p.add_argument("--voices", type=int, default=16, help="voices per octave")
    p.add_argument("--omega0", type=float, default=6.0)


def build_parser():
    parser = argparse.ArgumentParser(prog="qrswave", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="write the scalogram of a signal window")
    _add_input_args(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--format", choices=["csv", "pgm", "both"], default="csv")
    p.add_argument("--log", action="store_true", help="logarithmic PGM intensity")

    p = sub.add_parser("detect", help="detect QRS complexes")
    _add_input_args(p)
    p.add_argument("--f-lo", type=float, default=10.0)
    p.add_argument("--f-hi", type=float, default=25.0)
    p.add_argument("--threshold", type=float, default=0.25, help="fraction of the 95th percentile")
    p.add_argument("--refractory", type=float, default=0.2, help="seconds")
    p.add_argument("--aggregation", choices=["mean", "max"], default="mean")
    p.add_argument("--include-edges", action="store_true", help="do not mask the cone of influence")
    p.add_argument("--out", required=True, help="beat CSV path")

    p = sub.add_parser("evaluate", help="score beats against annotations")
    p.add_argument("beats")
    p.add_argument("annotations")
    p.add_argument("--fs", type=float, required=True)
    p.add_argument("--window-ms", type=float, default=150.0)
    p.add_argument("--out", required=True, help="report path (key=value lines)")

    d = SyntheticEcgSpec()
    p = sub.add_parser("synth", help="generate a synthetic ECG with ground truth")
    p.add_argument("--duration", type=float, default=d.duration_s)
    p.add_argument("--fs", type=float, default=d.fs)
    p.add_argument("--bpm", type=float, default=d.heart_rate_bpm)
    p.add_argument("--qrs-width", type=float, default=d.qrs_width_s)
    p.add_argument("--qrs-amp", type=float, default=d.qrs_amplitude_mv)
    p.add_argument("--p-amp", type=float, default=d.p_amplitude_mv)
    p.add_argument("--t-amp", type=float, default=d.t_amplitude_mv)
    p.add_argument("--noise", type=float, default=d.noise_std_mv)
    p.add_argument("--drift", type=float, default=d.baseline_drift_amplitude_mv)
    p.add_argument("--drift-freq", type=float, default=d.baseline_drift_freq_hz)
    p.add_argument("--jitter", type=float, default=d.rr_jitter_fraction)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--out-prefix", required=True)

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            replay(args.manifest)
        else:
            cfg = {k: v for k, v in vars(args).items() if k != "command"}
            execute(args.command, cfg)
    except (QrsWaveError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"qrswave {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
