import csv

import numpy as np
import pytest

from ebda.codec import CodecConfig
from ebda.dataset import read_dataset
from ebda.errors import ConfigurationError, ParameterError
from ebda.flow import FlowParams
from ebda.network import NetworkConfig, save_weights, zero_model
from ebda.pipeline import (
    DEFAULT_THRESHOLDS,
    ModelSelector,
    PipelineConfig,
    run_gen_dataset,
    run_pipeline,
    select_model,
)
from ebda.video import BitDepthConfig, Chroma, VideoFormat, write_yuv


TINY = NetworkConfig(base_features=8, num_blocks=2,
                     dense_layers_per_block=2, growth=4)
FAST_FLOW = FlowParams(pyramid_levels=2, patch_size=8, patch_stride=4,
                       iterations_per_patch=4)


def test_select_model_band_table():
    table = {22: "M1", 24.5: "M1", 27: "M2", 29.5: "M2",
             32: "M3", 34.5: "M3", 37: "M4"}
    for qp, expected in table.items():
        assert select_model(qp) == expected


def test_select_model_is_a_step_function():
    prev = "M1"
    order = {"M1": 0, "M2": 1, "M3": 2, "M4": 3}
    for qp in np.arange(0, 63.5, 0.5):
        cur = select_model(float(qp))
        assert order[cur] >= order[prev]
        prev = cur
    assert select_model(0) == "M1"
    assert select_model(63) == "M4"


def test_selector_validation():
    with pytest.raises(ConfigurationError, match="increasing"):
        ModelSelector(thresholds=(30.0, 25.0, 35.0))
    with pytest.raises(ConfigurationError, match="unknown"):
        ModelSelector(model_paths={"M9": "x.mfmr"})
    sel = ModelSelector(model_paths={"M1": "a.mfmr"})
    assert sel.path_for("M1") == "a.mfmr"
    with pytest.raises(ConfigurationError, match="M2"):
        sel.path_for("M2")


def test_pipeline_config_validation(tmp_path):
    fmt = VideoFormat(16, 16, Chroma.C420, BitDepthConfig(10, 9), 1)
    with pytest.raises(ConfigurationError):
        PipelineConfig(video=fmt, qp_list=())
    with pytest.raises(ConfigurationError):
        PipelineConfig(video=fmt, workers=0)


@pytest.fixture(scope="module")
def tiny_setup(tmp_path_factory, sequence_factory):
    root = tmp_path_factory.mktemp("pipe")
    frames = sequence_factory(count=4, width=48, height=48)
    seq = root / "seq.yuv"
    write_yuv(seq, frames)
    weights = root / "tiny.mfmr"
    save_weights(weights, zero_model(TINY))
    fmt = frames[0].format
    selector = ModelSelector(
        model_paths={m: str(weights) for m in ("M1", "M2", "M3", "M4")})
    return root, seq, fmt, selector


def test_pipeline_missing_model_fails_before_encode(tiny_setup):
    root, seq, fmt, _ = tiny_setup
    config = PipelineConfig(
        video=fmt, network=TINY, flow=FAST_FLOW,
        selector=ModelSelector(model_paths={"M1": str(root / "tiny.mfmr")}),
        qp_list=(22, 37), output_dir=root / "out-missing")
    with pytest.raises(ConfigurationError, match="M4"):
        run_pipeline(config, seq)
    assert not (root / "out-missing" / "rd_points.csv").exists()


def test_pipeline_smoke_outputs(tiny_setup):
    root, seq, fmt, selector = tiny_setup
    config = PipelineConfig(
        video=fmt, network=TINY, flow=FAST_FLOW, selector=selector,
        qp_list=(22, 27, 32, 37), output_dir=root / "out")
    report = run_pipeline(config, seq)
    assert report.complete
    assert report.bd_rate_percent is not None
    assert len(report.qp_results) == 4
    assert [r.qp_base for r in report.qp_results] == [22, 27, 32, 37]
    assert [r.model_id for r in report.qp_results] == ["M1", "M2", "M3", "M4"]
    for r in report.qp_results:
        assert r.effective_qp == r.qp_base - 6
        # Zero weights: adapted quality equals the naive up-shift quality.
        assert r.ebda.quality == pytest.approx(r.naive.quality, abs=1e-9)

    with open(root / "out" / "rd_points.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8
    assert {row["codec"] for row in rows} == {"mock-anchor", "mock-ebda"}
    with open(root / "out" / "bd_summary.csv", newline="") as fh:
        bd_rows = list(csv.DictReader(fh))
    assert len(bd_rows) == 1
    assert bd_rows[0]["anchor"] == "mock-anchor"
    assert bd_rows[0]["test"] == "mock-ebda"
    summary = (root / "out" / "summary.txt").read_text()
    assert "status: complete" in summary
    assert (root / "out" / "rd_plot.svg").read_text().startswith("<svg")


def test_pipeline_worker_count_does_not_change_output(tiny_setup):
    root, seq, fmt, selector = tiny_setup
    outputs = []
    for workers, name in ((1, "w1"), (3, "w3")):
        config = PipelineConfig(
            video=fmt, network=TINY, flow=FAST_FLOW, selector=selector,
            qp_list=(22, 27, 32, 37), output_dir=root / name, workers=workers)
        run_pipeline(config, seq)
        outputs.append(((root / name / "rd_points.csv").read_bytes(),
                        (root / name / "bd_summary.csv").read_bytes()))
    assert outputs[0] == outputs[1]


def test_pipeline_rerun_byte_identical(tiny_setup):
    root, seq, fmt, selector = tiny_setup
    blobs = []
    for name in ("r1", "r2"):
        config = PipelineConfig(
            video=fmt, network=TINY, flow=FAST_FLOW, selector=selector,
            qp_list=(22, 27, 32, 37), output_dir=root / name)
        run_pipeline(config, seq)
        blobs.append((root / name / "rd_points.csv").read_bytes())
    assert blobs[0] == blobs[1]


@pytest.mark.filterwarnings("ignore:anchor curve")
def test_pipeline_bad_qp_reported_not_raised(tiny_setup):
    # qp 4 with the -6 offset goes negative inside the mock encoder; the
    # point must fail in isolation and the report must say incomplete.
    root, seq, fmt, selector = tiny_setup
    config = PipelineConfig(
        video=fmt, network=TINY, flow=FAST_FLOW, selector=selector,
        qp_list=(4, 27), output_dir=root / "out-bad")
    report = run_pipeline(config, seq)
    assert not report.complete
    bad = report.qp_results[0]
    assert bad.error is not None and "qp" in bad.error
    good = report.qp_results[1]
    assert good.error is None and good.ebda is not None
    assert "INCOMPLETE" in (root / "out-bad" / "summary.txt").read_text()


@pytest.fixture(scope="module")
def big_seq(tmp_path_factory, sequence_factory):
    # Triplet extraction needs at least one 96x96 block inside the frame.
    root = tmp_path_factory.mktemp("gen")
    frames = sequence_factory(count=4, width=112, height=112)
    path = root / "big.yuv"
    write_yuv(path, frames)
    return path, frames[0].format


def test_gen_dataset_counts_and_determinism(tmp_path, big_seq):
    seq, fmt = big_seq
    root = tmp_path
    config = PipelineConfig(video=fmt, network=TINY, output_dir=root)
    out_a = run_gen_dataset(config, [seq, seq], qp_group=32,
                            count_per_sequence=5, seed=77,
                            output_path=root / "a.ebds")
    samples, manifest = read_dataset(out_a)
    assert len(samples) == 2 * 5 * 4
    assert manifest.qp_group == 32
    assert manifest.seed == 77
    assert {s.sequence_id for s in samples} == {0, 1}
    rot = [s.rotation for s in samples[:4]]
    assert rot == [0, 1, 2, 3]

    run_gen_dataset(config, [seq, seq], qp_group=32, count_per_sequence=5,
                    seed=77, output_path=root / "b.ebds")
    assert (root / "a.ebds").read_bytes() == (root / "b.ebds").read_bytes()


def test_gen_dataset_rejects_bad_group(tmp_path, big_seq):
    seq, fmt = big_seq
    root = tmp_path
    config = PipelineConfig(video=fmt, output_dir=root)
    with pytest.raises(ParameterError, match="qp_group"):
        run_gen_dataset(config, [seq], qp_group=30, count_per_sequence=1,
                        seed=0, output_path=root / "x.ebds")
    with pytest.raises(ParameterError, match="rotations"):
        run_gen_dataset(config, [seq], qp_group=32, count_per_sequence=1,
                        seed=0, output_path=root / "x.ebds", rotations=0)
