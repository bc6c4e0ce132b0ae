import functools
import math

import click
from marshmallow import ValidationError

from config import load_pipeline_config
from utils.constants import FRAME_STATUSES, OUTPUT_FORMATS
from utils.exceptions import DepthFusionError


def reports_errors(command):
    """Turn library errors into a clean non-zero exit with the message on stderr"""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except DepthFusionError as e:
            raise click.ClickException(str(e)) from e
        except ValidationError as e:
            raise click.ClickException(str(e.messages)) from e
        except OSError as e:
            raise click.ClickException(f'{e.filename or ""}: {e.strerror or e}') from e
    return wrapper


def config_options(command):
    command = click.option('--seed', type=int, default=None, help='RANSAC / oracle seed')(command)
    command = click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
                           default=None, help='TOML or JSON pipeline config')(command)
    return command


def output_options(command):
    command = click.option('--metrics-out', type=click.Path(dir_okay=False), default=None,
                           help='Line-delimited JSON records, one per frame')(command)
    command = click.option('--format', 'fmt', type=click.Choice(OUTPUT_FORMATS), default=None,
                           help='Depth raster format')(command)
    command = click.option('--out', 'out_dir', type=click.Path(file_okay=False), default=None,
                           help='Output directory')(command)
    return command


def load_config(config_path, seed=None, fmt=None):
    return load_pipeline_config(config_path, seed=seed, output_format=fmt)


def format_value(value, digits=4):
    if value is None or (isinstance(value, float) and not math.isfinite(value)):
        return '-'
    if isinstance(value, float):
        return f'{value:.{digits}g}'
    return str(value)


def echo_record(record):
    mark = '✓' if record.status in (FRAME_STATUSES['OK'], FRAME_STATUSES['OBSERVATION_ONLY']) else '✗'
    detail = f' ({record.reason})' if record.reason else ''
    click.echo(f'{mark} frame {record.index:4d} {record.status}{detail}  '
               f'inliers={format_value(record.inlier_ratio)} alpha={format_value(record.alpha)} '
               f'rho={format_value(record.rho_median)} scale={format_value(record.global_scale)} '
               f'gate_reject={format_value(record.gate_rejection_rate)}')
