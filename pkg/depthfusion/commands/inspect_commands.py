import os

import click

from commands.common import config_options, echo_record, load_config, reports_errors
from services.io_service import IOService
from services.pipeline_service import PipelineService


@click.command('inspect')
@click.argument('source', type=click.Path(exists=True))
@config_options
@reports_errors
def inspect_cmd(source, config_path, seed):
    """Per-frame diagnostics from a metrics file, or from a fresh run over a sequence directory."""
    if os.path.isdir(source):
        cfg = load_config(config_path, seed)
        intrinsics, frames, _, _ = IOService.load_sequence(source)
        records = [output.record for output in PipelineService.iter_sequence(frames, intrinsics, cfg)]
    else:
        records = IOService.read_records(source)

    for record in records:
        echo_record(record)
    degraded = [r.index for r in records if r.reason]
    if degraded:
        click.echo(f'✗ {len(degraded)} degraded frames: {", ".join(str(i) for i in degraded)}')
    else:
        click.echo(f'✓ {len(records)} frames, none degraded')
