import click
import numpy as np

from commands.common import config_options, load_config, reports_errors
from services.io_service import IOService
from services.oracle_service import OracleService
from services.pipeline_service import PipelineService
from utils.constants import STAGE_NAMES


@click.command('bench')
@click.argument('sequence', type=click.Path(exists=True, file_okay=False), required=False)
@config_options
@click.option('--frames', type=click.IntRange(min=2), default=50, show_default=True,
              help='Synthetic frames when no sequence is given')
@click.option('--width', type=click.IntRange(min=8), default=1241, show_default=True)
@click.option('--height', type=click.IntRange(min=8), default=376, show_default=True)
@reports_errors
def bench_cmd(sequence, config_path, seed, frames, width, height):
    """Median per-frame runtime of each pipeline stage.

    Seg+Flow times segmentation only; optical flow is computed outside the pipeline.
    """
    cfg = load_config(config_path, seed)
    if sequence:
        intrinsics, inputs, _, _ = IOService.load_sequence(sequence)
    else:
        spec = OracleService.default_scene(frame_count=frames, width=width, height=height, seed=cfg.seed)
        intrinsics = spec.intrinsics
        inputs = PipelineService.frames_from_pairs(OracleService.render_sequence(spec))

    timings = [output.record.timings for output in PipelineService.iter_sequence(inputs, intrinsics, cfg)][1:]
    if not timings:
        click.echo('✗ No frames to time')
        return

    click.echo(f'Runtime per frame at {intrinsics.width}x{intrinsics.height}, median of {len(timings)} frames')
    for name in STAGE_NAMES + ['total']:
        values = [t.get(name, 0.0) for t in timings]
        label = f'{name} (flow external)' if name == 'Seg+Flow' else name
        click.echo(f'{label:<26} {float(np.median(values)):10.2f} ms')
