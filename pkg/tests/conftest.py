import numpy as np
import pytest
import torch

from saldepth import ToyDatasetSpec, TrainingConfig, generate_toy_dataset

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def toy_root(tmp_path_factory):
    """A small deterministic toy dataset shared by the whole suite."""
    root = tmp_path_factory.mktemp("toy")
    generate_toy_dataset(ToyDatasetSpec(n_rgb=12, n_rgbd=12, image_size=64, seed=11), root)
    return root


@pytest.fixture
def tiny_config(tmp_path):
    def make(**overrides):
        defaults = dict(seed=5, steps=2, batch_size=2,
                        checkpoint_dir=tmp_path / "ckpt",
                        checkpoint_every=0, torch_threads=1)
        defaults.update(overrides)
        return TrainingConfig.tiny(**defaults)
    return make


def identity_conv_(conv):
    """Make a KxK conv the identity map (requires square in/out channels)."""
    with torch.no_grad():
        conv.weight.zero_()
        cy = conv.kernel_size[0] // 2
        cx = conv.kernel_size[1] // 2
        for i in range(conv.out_channels):
            conv.weight[i, i, cy, cx] = 1.0
        if conv.bias is not None:
            conv.bias.zero_()


def params_snapshot(module):
    return [p.detach().clone() for p in module.parameters()]


def params_equal(module, snapshot) -> bool:
    return all(torch.equal(p.detach(), s) for p, s in zip(module.parameters(), snapshot))


def rand_unit_image(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.random((3, size, size), dtype=np.float32)
