"""Training loop tests: config contract, normalization, logging, checkpoints."""

import csv

import numpy as np
import pytest

from ebda_trainer.errors import ConfigMismatchError
from ebda_trainer.formats import NetConfig, read_mfmr
from ebda_trainer.train import TrainConfig, prepare_batches, train

MICRO = NetConfig(base_features=8, num_blocks=1, dense_layers_per_block=1,
                  growth=4)


def test_train_config_defaults():
    cfg = TrainConfig()
    assert cfg.lr == 1e-4
    assert cfg.lr_decay == 0.1
    assert cfg.lr_decay_epochs == 100
    assert cfg.epochs == 200
    assert cfg.batch_size == 16
    assert (cfg.adam_beta1, cfg.adam_beta2) == (0.9, 0.999)
    assert cfg.checkpoint_every == 10
    assert (cfg.cbd, cfg.ebd) == (10, 9)
    assert cfg.shift == 1


@pytest.mark.parametrize("kwargs", [
    {"epochs": 0},
    {"batch_size": 0},
    {"lr_decay": 0.0},
    {"lr_decay": 1.5},
    {"cbd": 10, "ebd": 12},
    {"cbd": 17, "ebd": 9},
    {"ebd": 0},
])
def test_train_config_rejects_bad_values(kwargs):
    with pytest.raises(ConfigMismatchError):
        TrainConfig(**kwargs)


def test_normalization_matches_inference_convention(tmp_path, ebds_writer,
                                                    sample_factory):
    # inputs: naive up-shift clipped to the coded range, then / (2^cbd - 1);
    # targets: / (2^cbd - 1); baseline is the normalized center block
    sample = sample_factory(seed=2, size=16)
    path = tmp_path / "d.ebds"
    ebds_writer(path, [sample])
    inputs, baselines, targets = prepare_batches(path, MICRO, TrainConfig())
    assert inputs.shape == (1, 9, 16, 16)
    assert baselines.shape == (1, 3, 16, 16)
    assert targets.shape == (1, 3, 16, 16)
    for slot, block in enumerate(sample.inputs):
        up = np.minimum(block.astype(np.uint32) << 1, 1023)
        want = up.astype(np.float32) / 1023
        assert np.array_equal(inputs[0, 3 * slot:3 * slot + 3].numpy(), want)
    assert np.array_equal(baselines[0].numpy(), inputs[0, 3:6].numpy())
    assert np.array_equal(targets[0].numpy(),
                          sample.target.astype(np.float32) / 1023)


def test_up_shift_stays_within_coded_range(tmp_path, ebds_writer,
                                           sample_factory):
    # a full-scale reduced input lands at 2^cbd - 2^shift, never above
    sample = sample_factory(size=16)
    sample.inputs[1][:] = 511
    path = tmp_path / "d.ebds"
    ebds_writer(path, [sample])
    inputs, _, _ = prepare_batches(path, MICRO, TrainConfig())
    assert float(inputs[0, 3:6].max()) == np.float32(1022) / 1023
    sample8 = sample_factory(size=16)
    for block in sample8.inputs:
        block[:] = 255
    path8 = tmp_path / "d8.ebds"
    ebds_writer(path8, [sample8])
    inputs8, _, _ = prepare_batches(path8, MICRO, TrainConfig(cbd=10, ebd=8))
    assert float(inputs8[0, 3:6].max()) == np.float32(1020) / 1023


def test_rejects_inputs_beyond_reduced_range(tmp_path, ebds_writer,
                                             sample_factory):
    sample = sample_factory(size=16)
    sample.inputs[0][0, 0, 0] = 600
    path = tmp_path / "d.ebds"
    ebds_writer(path, [sample])
    with pytest.raises(ConfigMismatchError, match="wrong cbd/ebd"):
        prepare_batches(path, MICRO, TrainConfig())


def test_rejects_targets_beyond_coded_range(tmp_path, ebds_writer,
                                            sample_factory):
    sample = sample_factory(size=16)
    sample.target[0, 0, 0] = 2000
    path = tmp_path / "d.ebds"
    ebds_writer(path, [sample])
    with pytest.raises(ConfigMismatchError, match="target"):
        prepare_batches(path, MICRO, TrainConfig())


def test_rejects_network_with_wrong_frame_count(tmp_path, ebds_writer,
                                                sample_factory):
    five = NetConfig(base_features=8, num_blocks=1, dense_layers_per_block=1,
                     growth=4, input_frames=5)
    path = tmp_path / "d.ebds"
    ebds_writer(path, [sample_factory(size=16)])
    with pytest.raises(ConfigMismatchError, match="frames"):
        prepare_batches(path, five, TrainConfig())


def test_rejects_empty_dataset(tmp_path, ebds_writer):
    path = tmp_path / "d.ebds"
    ebds_writer(path, [])
    with pytest.raises(ConfigMismatchError, match="empty"):
        prepare_batches(path, MICRO, TrainConfig())


def test_rejects_mixed_block_sizes(tmp_path, ebds_writer, sample_factory):
    path = tmp_path / "d.ebds"
    ebds_writer(path, [sample_factory(size=16), sample_factory(size=32)])
    with pytest.raises(ConfigMismatchError, match="block size"):
        prepare_batches(path, MICRO, TrainConfig())


@pytest.fixture(scope="module")
def micro_run(tmp_path_factory, ebds_writer, sample_factory):
    root = tmp_path_factory.mktemp("micro")
    path = root / "d.ebds"
    ebds_writer(path, [sample_factory(seed=i, size=16) for i in range(8)])
    cfg = TrainConfig(lr=1e-3, epochs=3, batch_size=4, seed=4,
                      checkpoint_every=2, lr_decay=0.1, lr_decay_epochs=2)
    result = train(path, MICRO, cfg, root / "out.mfmr")
    return root, path, cfg, result


def test_train_writes_weights_best_and_checkpoints(micro_run):
    root, _, _, result = micro_run
    assert result.weight_path == root / "out.mfmr"
    assert result.best_path == root / "out.best.mfmr"
    assert result.weight_path.exists()
    assert result.best_path.exists()
    assert result.checkpoints == [root / "out.ep0002.mfmr"]
    assert result.checkpoints[0].exists()
    config, tensors = read_mfmr(result.weight_path)
    assert config == MICRO
    assert tensors["head.weight"].any()


def test_loss_log_schema_and_lr_decay(micro_run):
    _, _, cfg, result = micro_run
    with open(result.log_path, newline="") as fin:
        rows = list(csv.reader(fin))
    assert rows[0] == ["epoch", "lr", "mean_l1"]
    assert len(rows) == 1 + cfg.epochs
    epochs = [int(r[0]) for r in rows[1:]]
    lrs = [float(r[1]) for r in rows[1:]]
    losses = [float(r[2]) for r in rows[1:]]
    assert epochs == [1, 2, 3]
    # decay by 0.1 every 2 epochs: the logged lr is the one used that epoch
    assert lrs == pytest.approx([1e-3, 1e-3, 1e-4])
    assert losses == pytest.approx(result.epoch_losses, abs=1e-8)


def test_fixed_seed_reproduces_loss_curve(micro_run):
    root, path, cfg, result = micro_run
    again = train(path, MICRO, cfg, root / "again.mfmr")
    assert again.epoch_losses == pytest.approx(result.epoch_losses,
                                               abs=1e-9, rel=0)
    config_a, tensors_a = read_mfmr(result.weight_path)
    config_b, tensors_b = read_mfmr(again.weight_path)
    assert config_a == config_b
    for name in tensors_a:
        np.testing.assert_allclose(tensors_a[name], tensors_b[name],
                                   rtol=0, atol=1e-7)


def test_best_checkpoint_tracks_lowest_loss(micro_run):
    _, _, _, result = micro_run
    config, best_tensors = read_mfmr(result.best_path)
    assert config == MICRO
    _, final_tensors = read_mfmr(result.weight_path)
    best_epoch = int(np.argmin(result.epoch_losses)) + 1
    same = all(np.array_equal(final_tensors[name], best_tensors[name])
               for name in final_tensors)
    # deterministic run: best equals final exactly when the last epoch won
    assert same == (best_epoch == len(result.epoch_losses))
