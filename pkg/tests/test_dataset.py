import numpy as np
import pytest

from ebda.dataset import (
    DatasetManifest,
    TrainingSample,
    augment_rotate,
    extract_triplets,
    read_dataset,
    write_dataset,
    yuv420_to_444,
    yuv444_to_420,
)
from ebda.errors import (
    FormatError,
    ParameterError,
    ShapeError,
    UnusableSourceError,
)
from ebda.video import Chroma, extract_block, make_frame


def test_420_to_444_replicates_2x2(bd10):
    y = np.zeros((4, 4), dtype=np.uint16)
    cb = np.array([[1, 2], [3, 4]], dtype=np.uint16)
    cr = np.array([[5, 6], [7, 8]], dtype=np.uint16)
    up = yuv420_to_444(make_frame(y, cb, cr, bd10))
    assert up.format.chroma is Chroma.C444
    assert np.array_equal(up.cb.data, np.array([
        [1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]))
    assert up.cr.data[3, 3] == 8
    assert np.array_equal(up.y.data, y)


def test_constant_chroma_stays_constant(bd10):
    y = np.zeros((8, 8), dtype=np.uint16)
    c = np.full((4, 4), 77, dtype=np.uint16)
    up = yuv420_to_444(make_frame(y, c, c, bd10))
    assert (up.cb.data == 77).all()
    down = yuv444_to_420(up)
    assert (down.cb.data == 77).all()


def test_444_to_420_mean_rounds_half_away(bd10):
    y = np.zeros((2, 2), dtype=np.uint16)
    cb = np.array([[0, 1], [1, 2]], dtype=np.uint16)   # mean 1.0
    cr = np.array([[0, 1], [0, 0]], dtype=np.uint16)   # mean 0.25 -> 0
    down = yuv444_to_420(make_frame(y, cb, cr, bd10))
    assert down.cb.data[0, 0] == 1
    assert down.cr.data[0, 0] == 0
    # Exact half rounds up (away from zero).
    half = np.array([[0, 1], [1, 0]], dtype=np.uint16)
    down = yuv444_to_420(make_frame(y, half, half, bd10))
    assert down.cb.data[0, 0] == 1


def test_replicate_then_mean_is_identity(frame_factory):
    for seed in range(10):
        frame = frame_factory(seed, width=16, height=16)
        back = yuv444_to_420(yuv420_to_444(frame))
        for sel in ("y", "cb", "cr"):
            assert np.array_equal(back.plane(sel).data, frame.plane(sel).data)


def test_conversion_noops_warn(bd10, frame_factory):
    frame420 = frame_factory(0)
    with pytest.warns(UserWarning):
        again = yuv444_to_420(frame420)
    assert np.array_equal(again.cb.data, frame420.cb.data)
    frame444 = yuv420_to_444(frame420)
    with pytest.warns(UserWarning):
        yuv420_to_444(frame444)


def test_444_to_420_rejects_odd_dims(bd10):
    y = np.zeros((3, 4), dtype=np.uint16)
    frame = make_frame(y, y, y, bd10)
    with pytest.raises(ShapeError):
        yuv444_to_420(frame)


def make_pair(sequence_factory, count=4, size=112):
    original = sequence_factory(count, size, size, seed=20)
    recon = []
    for frame in original:
        noisy = (frame.y.data >> 1).astype(np.uint16)
        cb = (frame.cb.data >> 1).astype(np.uint16)
        cr = (frame.cr.data >> 1).astype(np.uint16)
        recon.append(make_frame(noisy, cb, cr, frame.format.bit_depth,
                                reduced=True))
    return original, recon


def test_extract_triplets_contract(sequence_factory):
    original, recon = make_pair(sequence_factory)
    samples = extract_triplets(original, recon, count=100, seed=42)
    assert len(samples) == 100
    fmt = original[0].format
    for s in samples:
        assert 1 <= s.frame_index <= len(original) - 2
        assert 0 <= s.x <= fmt.width - 96
        assert 0 <= s.y <= fmt.height - 96
        assert s.target.shape == (3, 96, 96)
        assert all(b.shape == (3, 96, 96) for b in s.inputs)
        assert s.target.max() <= fmt.bit_depth.cbd_max
        assert max(b.max() for b in s.inputs) <= fmt.bit_depth.ebd_max


def test_extract_triplets_deterministic(sequence_factory):
    original, recon = make_pair(sequence_factory)
    a = extract_triplets(original, recon, count=25, seed=7)
    b = extract_triplets(original, recon, count=25, seed=7)
    for s, t in zip(a, b):
        assert (s.frame_index, s.x, s.y) == (t.frame_index, t.x, t.y)
        assert np.array_equal(s.target, t.target)
    c = extract_triplets(original, recon, count=25, seed=8)
    assert any((s.frame_index, s.x, s.y) != (t.frame_index, t.x, t.y)
               for s, t in zip(a, c))


def test_extract_triplets_meta_rederives_target(sequence_factory):
    # target must equal a block cut from the 4:4:4 original at (x, y).
    original, recon = make_pair(sequence_factory)
    samples = extract_triplets(original, recon, count=10, seed=3)
    for s in samples:
        full = yuv420_to_444(original[s.frame_index])
        expect = np.stack([
            extract_block(full, sel, s.x, s.y, 96, 96).data
            for sel in ("y", "cb", "cr")
        ])
        assert np.array_equal(s.target, expect)
        center = yuv420_to_444(recon[s.frame_index])
        got = np.stack([
            extract_block(center, sel, s.x, s.y, 96, 96).data
            for sel in ("y", "cb", "cr")
        ])
        assert np.array_equal(s.inputs[1], got)


def test_extract_triplets_rejects_unusable_sources(sequence_factory):
    original, recon = make_pair(sequence_factory)
    with pytest.raises(UnusableSourceError, match="3 frames"):
        extract_triplets(original[:2], recon[:2], count=1, seed=0)
    with pytest.raises(UnusableSourceError, match="lengths"):
        extract_triplets(original, recon[:-1], count=1, seed=0)
    small_o = sequence_factory(4, 64, 64, seed=1)
    with pytest.raises(UnusableSourceError, match="smaller"):
        extract_triplets(small_o, small_o, count=1, seed=0)


def sample_fixture(seed=0):
    rng = np.random.default_rng(seed)
    blocks = [rng.integers(0, 512, (3, 96, 96), dtype=np.uint16)
              for _ in range(3)]
    target = rng.integers(0, 1024, (3, 96, 96), dtype=np.uint16)
    return TrainingSample(inputs=tuple(blocks), target=target,
                          sequence_id=2, frame_index=5, x=16, y=8)


def test_rotate_identity_and_group_property():
    sample = sample_fixture()
    same = augment_rotate(sample, 0)
    assert np.array_equal(same.target, sample.target)
    assert same.rotation == 0

    turned = sample
    for _ in range(4):
        turned = augment_rotate(turned, 1)
    assert np.array_equal(turned.target, sample.target)
    for a, b in zip(turned.inputs, sample.inputs):
        assert np.array_equal(a, b)


def test_rotate_k2_reverses_ramp():
    sample = sample_fixture()
    ramp = np.tile(np.arange(96, dtype=np.uint16), (96, 1))
    sample.target[0] = ramp
    rotated = augment_rotate(sample, 2)
    # Index map for a half turn: (r, c) -> (H-1-r, W-1-c).
    assert np.array_equal(rotated.target[0], ramp[::-1, ::-1])
    assert rotated.rotation == 2


def test_rotate_mod_four():
    sample = sample_fixture()
    assert augment_rotate(sample, 5).rotation == 1
    a = augment_rotate(sample, 5)
    b = augment_rotate(sample, 1)
    assert np.array_equal(a.target, b.target)


def test_dataset_round_trip(tmp_path):
    samples = [augment_rotate(sample_fixture(s), s % 4) for s in range(6)]
    manifest = DatasetManifest(qp_group=27, sample_count=6, seed=99)
    path = tmp_path / "train.ebds"
    write_dataset(samples, manifest, path)
    back, mf = read_dataset(path)
    assert mf.qp_group == 27 and mf.seed == 99 and mf.sample_count == 6
    assert len(back) == 6
    for a, b in zip(samples, back):
        assert (a.sequence_id, a.frame_index, a.x, a.y, a.rotation) \
            == (b.sequence_id, b.frame_index, b.x, b.y, b.rotation)
        assert np.array_equal(a.target, b.target)
        for x, y in zip(a.inputs, b.inputs):
            assert np.array_equal(x, y)


def test_manifest_validates_qp_group():
    with pytest.raises(ParameterError):
        DatasetManifest(qp_group=25, sample_count=0, seed=0)


def test_write_rejects_count_mismatch(tmp_path):
    manifest = DatasetManifest(qp_group=22, sample_count=3, seed=0)
    with pytest.raises(ParameterError, match="3 samples"):
        write_dataset([sample_fixture()], manifest, tmp_path / "x.ebds")


def test_read_rejects_corruption(tmp_path):
    samples = [sample_fixture(0)]
    manifest = DatasetManifest(qp_group=22, sample_count=1, seed=0)
    path = tmp_path / "x.ebds"
    write_dataset(samples, manifest, path)
    blob = path.read_bytes()

    path.write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(FormatError, match="magic"):
        read_dataset(path)

    path.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(FormatError, match="truncated"):
        read_dataset(path)

    path.write_bytes(blob + b"\x00")
    with pytest.raises(FormatError, match="trailing"):
        read_dataset(path)
