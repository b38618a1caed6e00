import json
from pathlib import Path

import numpy as np
import pytest

from qrswave import cli
from qrswave.cli import main, parse_report, read_pgm
from qrswave.signal_io import SyntheticEcgSpec, encode_212, read_annotations, synthesize_ecg

from conftest import mitdb_dir

GOLDEN = Path(__file__).parent / "golden"


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def synth_files(tmp_path):
    prefix = tmp_path / "rec"
    assert run("synth", "--bpm", 60, "--duration", 10, "--seed", 1, "--out-prefix", prefix) == 0
    return tmp_path, prefix.with_suffix(".csv"), Path(str(prefix) + ".ann.txt")


def write_wfdb(tmp_path, sig, name="syn"):
    raw = np.round(sig.samples * 200).astype(int) + 1024
    (tmp_path / f"{name}.dat").write_bytes(encode_212(raw[None, :]))
    (tmp_path / f"{name}.hea").write_text(
        f"{name} 1 {sig.fs:g} {raw.size}\n{name}.dat 212 200 12 1024 {raw[0]} 0 0 MLII\n"
    )
    return tmp_path / f"{name}.hea"


# --- synth -------------------------------------------------------------------

def test_synth_is_deterministic(tmp_path):
    for d in ("a", "b"):
        assert run("synth", "--bpm", 60, "--duration", 10, "--seed", 1, "--out-prefix", tmp_path / d / "x") == 0
    for suffix in (".csv", ".ann.txt"):
        assert (tmp_path / "a" / f"x{suffix}").read_bytes() == (tmp_path / "b" / f"x{suffix}").read_bytes()


@pytest.mark.parametrize("bpm", [60, 72, 110])
def test_synth_annotation_count(tmp_path, bpm):
    run("synth", "--bpm", bpm, "--duration", 10, "--jitter", 0, "--out-prefix", tmp_path / "s")
    ann = read_annotations((tmp_path / "s.ann.txt").read_text())
    assert len(ann) == round(10 * bpm / 60)


def test_synth_invalid_spec(tmp_path, capsys):
    assert run("synth", "--qrs-width", 0.3, "--out-prefix", tmp_path / "s") == 1
    assert "QRS width" in capsys.readouterr().err
    assert not list(tmp_path.iterdir())


def test_pipeline_end_to_end(synth_files, capsys):
    d, csv, ann = synth_files
    assert run("detect", csv, "--fs", 360, "--out", d / "beats.csv") == 0
    assert run("evaluate", d / "beats.csv", ann, "--fs", 360, "--out", d / "report.txt") == 0
    report = parse_report((d / "report.txt").read_text())
    assert report["sensitivity"] >= 0.99
    assert report["true_positives"] + report["false_negatives"] == report["reference_beats"]
    out = capsys.readouterr()
    assert out.out == "" and out.err == ""


# --- detect ------------------------------------------------------------------

def test_detect_output_format(synth_files):
    d, csv, _ = synth_files
    run("detect", csv, "--fs", 360, "--out", d / "beats.csv")
    lines = (d / "beats.csv").read_text().splitlines()
    assert lines[0] == "sample,time_s,score"
    assert len(lines) == 11
    sample, t, score = lines[1].split(",")
    assert float(t) == pytest.approx(int(sample) / 360, abs=1e-6)
    assert len(t.split(".")[1]) == 6
    manifest = json.loads((d / "beats.manifest.json").read_text())
    assert manifest["command"] == "detect"
    assert manifest["config"]["threshold"] == 0.25
    assert manifest["config"]["duration"] == pytest.approx(10.0)


def test_detect_constant_signal(tmp_path):
    (tmp_path / "flat.csv").write_text("0.25\n" * 3600)
    assert run("detect", tmp_path / "flat.csv", "--fs", 360, "--out", tmp_path / "b.csv") == 0
    assert (tmp_path / "b.csv").read_text() == "sample,time_s,score\n"


def test_detect_byte_identical(synth_files):
    d, csv, _ = synth_files
    run("detect", csv, "--fs", 360, "--out", d / "b1.csv")
    run("detect", csv, "--fs", 360, "--out", d / "b2.csv")
    assert (d / "b1.csv").read_bytes() == (d / "b2.csv").read_bytes()


def test_detect_window_reports_absolute_samples(synth_files):
    d, csv, _ = synth_files
    run("detect", csv, "--fs", 360, "--out", d / "all.csv")
    run("detect", csv, "--fs", 360, "--t0", 3, "--duration", 5, "--out", d / "part.csv")
    full = [int(r.split(",")[0]) for r in (d / "all.csv").read_text().splitlines()[1:]]
    part = [int(r.split(",")[0]) for r in (d / "part.csv").read_text().splitlines()[1:]]
    assert part and set(part) <= set(full)


def test_detect_wfdb_input(tmp_path):
    sig, ann = synthesize_ecg(SyntheticEcgSpec(heart_rate_bpm=80, noise_std_mv=0.05, seed=4))
    hea = write_wfdb(tmp_path, sig)
    assert run("detect", hea, "--out", tmp_path / "b.csv") == 0
    rows = (tmp_path / "b.csv").read_text().splitlines()[1:]
    assert len(rows) == len(ann)


def test_csv_needs_fs(synth_files, capsys):
    d, csv, _ = synth_files
    assert run("detect", csv, "--out", d / "b.csv") == 1
    assert "--fs" in capsys.readouterr().err
    assert not (d / "b.csv").exists()


def test_missing_input(tmp_path, capsys):
    assert run("detect", tmp_path / "nope.csv", "--fs", 360, "--out", tmp_path / "b.csv") == 1
    err = capsys.readouterr().err
    assert "error" in err and "nope.csv" in err


def test_invalid_window(synth_files):
    d, csv, _ = synth_files
    assert run("detect", csv, "--fs", 360, "--t0", 8, "--duration", 5, "--out", d / "b.csv") == 1
    assert not (d / "b.csv").exists()


# --- evaluate ----------------------------------------------------------------

def _beats_from_ann(ann_path, out):
    ann = read_annotations(Path(ann_path).read_text())
    rows = ["sample,time_s,score"] + [f"{s},{s / 360:.6f},1.000000e+00" for s in ann.samples]
    Path(out).write_text("\n".join(rows) + "\n")


def test_evaluate_perfect(synth_files):
    d, _, ann = synth_files
    _beats_from_ann(ann, d / "b.csv")
    run("evaluate", d / "b.csv", ann, "--fs", 360, "--out", d / "r.txt")
    r = parse_report((d / "r.txt").read_text())
    assert r["sensitivity"] == 1.0 and r["positive_predictivity"] == 1.0


def test_evaluate_empty_beats(synth_files):
    d, _, ann = synth_files
    (d / "b.csv").write_text("sample,time_s,score\n")
    assert run("evaluate", d / "b.csv", ann, "--fs", 360, "--out", d / "r.txt") == 0
    r = parse_report((d / "r.txt").read_text())
    assert r["false_negatives"] == 10
    assert r["true_positives"] + r["false_negatives"] == r["reference_beats"]


def test_evaluate_parse_failure(synth_files):
    d, _, ann = synth_files
    (d / "b.csv").write_text("sample,time_s,score\n12,abc\n")
    assert run("evaluate", d / "b.csv", ann, "--fs", 360, "--out", d / "r.txt") == 1
    assert not (d / "r.txt").exists()


# --- transform ---------------------------------------------------------------

def test_transform_zero_signal_pgm(tmp_path):
    (tmp_path / "z.csv").write_text("0\n" * 1440)
    assert run("transform", tmp_path / "z.csv", "--fs", 360, "--out-dir", tmp_path / "o", "--format", "pgm") == 0
    pix, maxval = read_pgm((tmp_path / "o" / "scalogram.pgm").read_bytes())
    assert maxval == 65535
    assert not pix.any()


def test_transform_csv_shape(synth_files):
    d, csv, _ = synth_files
    run("transform", csv, "--fs", 360, "--t0", 1, "--duration", 4, "--out-dir", d / "o", "--format", "both")
    lines = (d / "o" / "scalogram.csv").read_text().splitlines()
    scales = (d / "o" / "scales.csv").read_text().splitlines()
    n_scales = len(scales) - 1
    assert len(lines) == 1 + 4 * 360
    assert all(len(ln.split(",")) == 1 + n_scales for ln in lines)
    assert lines[0].startswith("time_s,40.000000,")
    assert lines[1].split(",")[0] == "1.000000"
    pix, _ = read_pgm((d / "o" / "scalogram.pgm").read_bytes())
    assert pix.shape == (n_scales, 4 * 360)
    assert pix.max() == 65535


def test_transform_pgm_coarse_on_top(tmp_path):
    fs = 360
    t = np.arange(4 * fs) / fs
    (tmp_path / "s.csv").write_text("".join(f"{v:.6f}\n" for v in np.sin(2 * np.pi * 3 * t)))
    run("transform", tmp_path / "s.csv", "--fs", fs, "--out-dir", tmp_path / "o", "--format", "pgm")
    pix, _ = read_pgm((tmp_path / "o" / "scalogram.pgm").read_bytes())
    row_energy = pix[:, 700].astype(float)
    # 3 Hz sits near the coarse (top) end of the 2-40 Hz grid
    assert np.argmax(row_energy) < pix.shape[0] // 4


def test_transform_log_scale(synth_files):
    d, csv, _ = synth_files
    run("transform", csv, "--fs", 360, "--out-dir", d / "lin", "--format", "pgm")
    run("transform", csv, "--fs", 360, "--out-dir", d / "log", "--format", "pgm", "--log")
    lin, _ = read_pgm((d / "lin" / "scalogram.pgm").read_bytes())
    log, _ = read_pgm((d / "log" / "scalogram.pgm").read_bytes())
    assert lin.max() == log.max() == 65535
    assert log.mean() > lin.mean()


def test_partial_outputs_removed(synth_files, monkeypatch):
    d, csv, _ = synth_files

    def boom(*a, **k):
        raise OSError("disk full")

    monkeypatch.setattr(cli, "scalogram_to_pgm", boom)
    assert run("transform", csv, "--fs", 360, "--out-dir", d / "o", "--format", "both") == 1
    assert not list((d / "o").iterdir())


# --- manifests ---------------------------------------------------------------

def test_replay_reproduces_outputs(synth_files):
    d, csv, ann = synth_files
    run("transform", csv, "--fs", 360, "--duration", 3, "--out-dir", d / "o", "--format", "both")
    run("detect", csv, "--fs", 360, "--out", d / "b.csv")
    run("evaluate", d / "b.csv", ann, "--fs", 360, "--out", d / "r.txt")
    manifests = [d / "o" / "manifest.json", d / "b.manifest.json", d / "r.manifest.json", d / "rec.manifest.json"]
    for m in manifests:
        outputs = json.loads(m.read_text())["outputs"]
        before = {p: Path(p).read_bytes() for p in outputs}
        assert run("replay", m) == 0
        assert {p: Path(p).read_bytes() for p in outputs} == before


def test_manifest_fields(synth_files):
    d, _, _ = synth_files
    m = json.loads((d / "rec.manifest.json").read_text())
    assert set(m) == {"command", "inputs", "outputs", "config", "tool_version", "wall_clock_s"}
    assert m["config"]["seed"] == 1 and m["config"]["noise"] == 0.05


# --- golden files ------------------------------------------------------------

def test_golden_synth_and_detect(tmp_path):
    run("synth", "--bpm", 75, "--duration", 4, "--noise", 0.05, "--seed", 3, "--out-prefix", tmp_path / "g")
    run("detect", tmp_path / "g.csv", "--fs", 360, "--out", tmp_path / "beats.csv")
    assert (tmp_path / "g.ann.txt").read_text() == (GOLDEN / "g.ann.txt").read_text()
    assert (tmp_path / "beats.csv").read_text() == (GOLDEN / "beats.csv").read_text()
    assert (tmp_path / "g.csv").read_text() == (GOLDEN / "g.csv").read_text()


def test_golden_scales_sidecar(tmp_path):
    (tmp_path / "z.csv").write_text("0\n" * 800)
    run("transform", tmp_path / "z.csv", "--fs", 360, "--fmin", 5, "--fmax", 40, "--voices", 4,
        "--out-dir", tmp_path / "o", "--format", "pgm")
    assert (tmp_path / "o" / "scales.csv").read_text() == (GOLDEN / "scales.csv").read_text()
    head = (tmp_path / "o" / "scalogram.pgm").read_bytes()[:20]
    assert head.startswith(b"P5\n800 13\n65535\n")


# --- MIT-BIH record 100 ------------------------------------------------------

@pytest.mark.skipif(mitdb_dir() is None, reason="MIT-BIH records not available")
def test_record_100_heatmap_tracks_beats(tmp_path):
    d = mitdb_dir()
    run("transform", d / "100.hea", "--t0", 0, "--duration", 10, "--out-dir", tmp_path, "--format", "csv")
    rows = (tmp_path / "scalogram.csv").read_text().splitlines()[1:]
    energy = np.array([[float(v) for v in r.split(",")[1:]] for r in rows])
    column_max = energy.max(axis=1)
    ann = read_annotations((d / "100.ann.txt").read_text())
    impulses = np.zeros(column_max.size)
    for s in ann.samples[ann.samples < impulses.size]:
        impulses[max(s - 18, 0):s + 19] = 1.0  # +-50 ms around each beat
    assert np.corrcoef(column_max, impulses)[0, 1] > 0.5
