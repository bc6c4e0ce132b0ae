import os

import click

from commands.common import config_options, echo_record, load_config, output_options, reports_errors
from config import current_config
from models.pose import Pose
from services.io_service import IOService
from services.pipeline_service import PipelineService


@click.command('run')
@click.argument('sequence', type=click.Path(exists=True, file_okay=False))
@config_options
@output_options
@reports_errors
def run_cmd(sequence, config_path, seed, out_dir, fmt, metrics_out):
    """Process a sequence directory into metric depth maps."""
    cfg = load_config(config_path, seed, fmt)
    out_dir = out_dir or current_config.OUTPUT_DIR

    intrinsics, frames, gt_depths, poses = IOService.load_sequence(sequence)
    has_gt = any(gt is not None for gt in gt_depths)
    outputs = PipelineService.run_sequence(frames, intrinsics, cfg, gt_depths if has_gt else None, poses)

    for output in outputs:
        IOService.write_depth(out_dir, output.index, output.depth, cfg.output.format)
        echo_record(output.record)

    if cfg.output.metrics or metrics_out:
        path = metrics_out or os.path.join(out_dir, 'metrics.jsonl')
        IOService.write_records(path, [output.record for output in outputs])
        click.echo(f'✓ Metrics records written to {path}')

    if cfg.output.pointcloud:
        estimated = [output.pose or Pose.identity() for output in outputs[1:]]
        path = os.path.join(out_dir, 'pointcloud.ply')
        count = IOService.export_pointcloud([o.depth for o in outputs], [f.image for f in frames],
                                            intrinsics, estimated, path)
        click.echo(f'✓ {count} points written to {path}')

    click.echo(f'✓ {len(outputs)} depth maps written to {os.path.join(out_dir, "depth")}')
