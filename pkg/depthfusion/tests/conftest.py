import numpy as np
import pytest
from click.testing import CliRunner

from app import create_app
from models.intrinsics import Intrinsics
from models.pipeline_config import PipelineConfig
from services.oracle_service import OracleService


@pytest.fixture
def intrinsics():
    return OracleService.default_intrinsics()


@pytest.fixture
def tiny_intrinsics():
    return Intrinsics(fx=20.0, fy=20.0, cx=8.0, cy=8.0, width=16, height=16)


@pytest.fixture(scope='session')
def scene():
    return OracleService.default_scene(frame_count=4)


@pytest.fixture(scope='session')
def pair(scene):
    return OracleService.render_frame_pair(scene, 1)


@pytest.fixture
def config():
    return PipelineConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def cli():
    return create_app()


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture(scope='session')
def sequence_dir(tmp_path_factory):
    directory = tmp_path_factory.mktemp('sequence')
    OracleService.dump_sequence(OracleService.default_scene(frame_count=5), str(directory))
    return directory
