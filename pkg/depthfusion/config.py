# config.py
import json
import os
import tomllib

from dotenv import load_dotenv
from marshmallow import ValidationError

from schemas import PipelineConfigSchema
from utils.exceptions import ConfigError

load_dotenv()
BASE_DIR = os.path.abspath(os.path.dirname(__file__))


class Config:
    LOG_LEVEL = os.getenv('DEPTHFUSION_LOG_LEVEL', 'INFO')
    SEED = int(os.getenv('DEPTHFUSION_SEED', '0'))
    OUTPUT_DIR = os.getenv('DEPTHFUSION_OUTPUT_DIR', os.path.join(os.getcwd(), 'out'))
    OUTPUT_FORMAT = os.getenv('DEPTHFUSION_FORMAT', 'pfm')

    # Odometry records further than this from a frame are logged (seconds)
    ODOMETRY_TOLERANCE = float(os.getenv('DEPTHFUSION_ODOMETRY_TOLERANCE', '0.05'))


class DevelopmentConfig(Config):
    DEBUG = True
    LOG_LEVEL = os.getenv('DEPTHFUSION_LOG_LEVEL', 'DEBUG')


class ProductionConfig(Config):
    DEBUG = False


_CONFIGS = {
    'development': DevelopmentConfig,
    'production': ProductionConfig
}

current_config = _CONFIGS.get(os.getenv('DEPTHFUSION_ENV', 'production'), ProductionConfig)


def read_config_file(path):
    """Parse a TOML or JSON config file into a plain dict"""
    try:
        if str(path).endswith('.json'):
            with open(path, encoding='utf-8') as f:
                return json.load(f)
        with open(path, 'rb') as f:
            return tomllib.load(f)
    except (OSError, ValueError) as e:
        raise ConfigError(f'{path}: {e}') from e


def load_pipeline_config(path=None, seed=None, output_format=None):
    """PipelineConfig from an optional file, with CLI overrides applied last"""
    data = read_config_file(path) if path else {}
    if not isinstance(data, dict):
        raise ConfigError(f'{path}: top level must be a table')

    # CLI flag, then file, then environment
    if seed is not None:
        data['seed'] = seed
    data.setdefault('seed', current_config.SEED)
    output = data.setdefault('output', {})
    if not isinstance(output, dict):
        raise ConfigError(f'{path}: output must be a table')
    if output_format is not None:
        output['format'] = output_format
    output.setdefault('format', current_config.OUTPUT_FORMAT)

    try:
        return PipelineConfigSchema().load(data)
    except ValidationError as e:
        raise ConfigError(json.dumps(e.messages, sort_keys=True)) from e
