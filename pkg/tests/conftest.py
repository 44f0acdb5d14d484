import shutil

import pytest

from caveline.data import (Background, Split, SyntheticSpec, assign_splits,
                           generate_synthetic, leave_one_out_split, merge_manifests)
from caveline.losses import LossWeights
from caveline.model import ModelConfig
from caveline.trainer import Augmentation, OptimizerConfig, TrainConfig
from caveline.weaksup import WeaksupConfig, start_phase


def micro_train_config(max_epochs: int = 1, lr: float = 1e-3, seed: int = 0) -> TrainConfig:
    return TrainConfig(
        optimizer=OptimizerConfig(learning_rate=lr),
        batch_size=2,
        max_epochs=max_epochs,
        loss_weights=LossWeights(),
        augmentation=Augmentation(hflip=False, brightness_jitter=0.0),
        early_stop_patience=50,
        seed=seed,
    )


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """14 flat-background curved-line samples, 10 train / 2 val / 2 test."""
    root = tmp_path_factory.mktemp("ds_small")
    manifest = generate_synthetic(
        SyntheticSpec(count=14, background=Background.FLAT, line_thickness_range=(3, 7), seed=11),
        root,
    )
    manifest = assign_splits(manifest, val_fraction=2 / 14, test_fraction=2 / 14, seed=3)
    manifest.save(root / "manifest.json")
    return manifest


@pytest.fixture(scope="session")
def three_location_dataset(tmp_path_factory):
    """Three small location sets merged, held-out third marked TEST."""
    root = tmp_path_factory.mktemp("ds_loc")
    parts = []
    for i, loc in enumerate(["alpha", "beta", "gamma"]):
        parts.append(
            generate_synthetic(
                SyntheticSpec(count=5, background=Background.FLAT, line_thickness_range=(4, 8), seed=100 + i),
                root / loc,
                name=loc,
                location_tag=loc,
            )
        )
    merged = merge_manifests("three-loc", parts, root)
    merged = leave_one_out_split(merged, held_out_location="gamma", val_fraction=0.2, seed=5)
    merged.save(root / "manifest.json")
    return merged


@pytest.fixture(scope="session")
def micro_ws_config():
    return WeaksupConfig(model=ModelConfig.micro(), train=micro_train_config())


@pytest.fixture(scope="session")
def _seeded_phase_dir(tmp_path_factory, small_dataset, micro_ws_config):
    """Phase-1 state trained once per session; tests copy it before mutating."""
    root = tmp_path_factory.mktemp("phases_template")
    train_ids = sorted(small_dataset.split_ids(Split.TRAIN))
    seed_labels = set(train_ids[:4])
    start_phase(small_dataset.root / "manifest.json", seed_labels, micro_ws_config, root / "phases")
    return root / "phases"


@pytest.fixture
def phase_dir(_seeded_phase_dir, tmp_path):
    dst = tmp_path / "phases"
    shutil.copytree(_seeded_phase_dir, dst)
    return dst
