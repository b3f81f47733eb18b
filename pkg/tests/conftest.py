"""Pytest configuration and shared fixtures."""
import numpy as np
import pytest

from data.config_manager import PipelineConfig
from data.logger import TrainingLogger
from data.session import RUNS_ROOT_ENV
from diffusion.model import DenoiserModel
from diffusion.schedule import NoiseSchedule
from phantom.dataset import build_dataset
from phantom.geometry import PhantomParams
from style.conv_stack import ConvStack

# Overrides shrinking every stage to a few seconds of CPU.
TINY_OVERRIDES = [
    'phantom.canvas=[32, 32]',
    'phantom.speckle_scale_max=2',
    'dataset.n=16',
    'style.channels=[4, 8]',
    'style.layer_ids=[0, 1]',
    'diffusion.timesteps=8',
    'diffusion.base_channels=4',
    'diffusion.levels=2',
    'diffusion.steps=4',
    'diffusion.batch_size=4',
    'diffusion.log_every=2',
    'maskgen.timesteps=8',
    'maskgen.base_channels=4',
    'maskgen.levels=2',
    'maskgen.steps=4',
    'maskgen.batch_size=4',
    'maskgen.n=3',
    'maskgen.min_ditf_fraction=0',
    'maskgen.sample_batch=4',
    'generate.n=6',
    'generate.batch_size=4',
    'evaluate.n=3',
    'evaluate.grid=32',
    'evaluate.min_samples_ratio=0',
    'evaluate.batch_size=4',
    'segval.real_train_limit=6',
    'segval.epochs=1',
    'segval.batch_size=4',
    'segval.base_channels=4',
    'segval.levels=2',
]


@pytest.fixture
def tiny_params():
    """Fixture providing small, fast phantom parameters."""
    return PhantomParams(rng_seed=0, canvas=(32, 32), speckle_scale=1.0,
                         speckle_scale_max=2.0, pathology_rate=0.5)


@pytest.fixture
def tiny_dataset(tmp_path, tiny_params):
    """Fixture providing a written 10-phantom dataset."""
    return build_dataset(tiny_params, 10, (0.8, 0.2), tmp_path / 'dataset', config_hash='abc123')


@pytest.fixture
def tiny_stack():
    """Fixture providing a two-layer conv stack."""
    return ConvStack(seed=0, channels=(4, 8))


@pytest.fixture
def tiny_schedule():
    """Fixture providing an 8-step noise schedule."""
    return NoiseSchedule.linear(8)


@pytest.fixture
def tiny_denoiser():
    """Fixture providing a small conditioned denoiser."""
    return DenoiserModel.from_config({
        'image_channels': 1, 'semantic_channels': 8, 'context_channels': 1,
        'time_channels': 4, 'base_channels': 4, 'levels': 2, 'timesteps': 8,
    }, seed=0)


@pytest.fixture
def training_logger():
    """Fixture providing a training logger."""
    logger = TrainingLogger()
    yield logger
    if logger.is_logging:
        logger.stop_logging()


@pytest.fixture
def pipeline_config(tmp_path):
    """Fixture providing a default config manager."""
    yield PipelineConfig()


@pytest.fixture
def tiny_config():
    """Fixture providing a config shrunk for end-to-end runs."""
    return PipelineConfig(overrides=TINY_OVERRIDES)


@pytest.fixture
def runs_root(tmp_path, monkeypatch):
    """Fixture pointing the run-directory root at a temp dir."""
    root = tmp_path / 'runs'
    monkeypatch.setenv(RUNS_ROOT_ENV, str(root))
    return root


@pytest.fixture
def rng():
    """Fixture providing a seeded numpy generator."""
    return np.random.default_rng(1234)
