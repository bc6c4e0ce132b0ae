import os

import click

from commands.common import config_options, format_value, load_config, reports_errors
from models.frame import FrameRecord
from services.evaluation_service import EvaluationService
from services.io_service import IOService
from utils.constants import FRAME_STATUSES
from utils.exceptions import InsufficientFramesError


def _load_predictions(pred_dir, count):
    predictions = []
    for index in range(count):
        for fmt in ('pfm', 'png16'):
            path = IOService.depth_path(pred_dir, index, fmt)
            if os.path.exists(path):
                predictions.append(IOService.read_depth(path))
                break
        else:
            predictions.append(None)
    return predictions


def _table_row(name, metrics):
    if metrics is None:
        return f'{name:<5} -'
    return (f'{name:<5} AbsRel={metrics.abs_rel:.6f} d1={metrics.delta1:.4f} d2={metrics.delta2:.4f} '
            f'd3={metrics.delta3:.4f} n={metrics.count}')


@click.command('eval')
@click.argument('pred_dir', type=click.Path(exists=True, file_okay=False))
@click.argument('sequence', type=click.Path(exists=True, file_okay=False))
@click.option('--poses', 'poses_path', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Relative poses for TAE; defaults to the sequence poses')
@config_options
@click.option('--metrics-out', type=click.Path(dir_okay=False), default=None)
@reports_errors
def eval_cmd(pred_dir, sequence, poses_path, config_path, seed, metrics_out):
    """Compare predicted depth maps against the sequence ground truth."""
    cfg = load_config(config_path, seed)
    intrinsics, entries, _, poses = IOService.load_manifest(sequence)
    if poses_path:
        poses = IOService.load_poses(poses_path)

    gts = [IOService.load_gt_depth(sequence, entry) for entry in entries]
    preds = _load_predictions(pred_dir, len(entries))

    if poses is not None and len(poses) < len(entries) - 1:
        poses = None
    result = EvaluationService.evaluate_sequence(preds, gts, poses, intrinsics, cfg.evaluation)

    for name in ('all', 'near', 'far'):
        click.echo(_table_row(name, result[name]))
    tae = result['tae']
    if tae is not None:
        click.echo(f'TAE   {tae.tae:.6f} over {tae.pair_count} pairs')
    else:
        click.echo('TAE   - (needs 3+ predicted frames and relative poses)')

    if metrics_out:
        records_path = os.path.join(pred_dir, 'metrics.jsonl')
        if os.path.exists(records_path):
            records = IOService.read_records(records_path)
        else:
            records = [FrameRecord(index=i, status=FRAME_STATUSES['EVALUATED']) for i in range(len(entries))]
        for record, metrics in zip(records, result['frames']):
            record.abs_rel = metrics.abs_rel if metrics is not None else None
            record.delta1 = metrics.delta1 if metrics is not None else None
        if tae is not None:
            for k, error in enumerate(tae.pair_errors):
                records[k + 1].tae_pair = error
        IOService.write_records(metrics_out, records)
        click.echo(f'✓ Metrics records written to {metrics_out}')

    if result['all'] is None:
        raise InsufficientFramesError('no frame has both a prediction and ground truth')
    click.echo(f'✓ Evaluated {sum(1 for m in result["frames"] if m is not None)} frames, '
               f'AbsRel {format_value(result["all"].abs_rel, 6)}')
