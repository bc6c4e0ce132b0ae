from .run_commands import run_cmd
from .eval_commands import eval_cmd
from .synth_commands import synth_cmd
from .bench_commands import bench_cmd
from .inspect_commands import inspect_cmd

__all__ = ['run_cmd', 'eval_cmd', 'synth_cmd', 'bench_cmd', 'inspect_cmd']

# Command name -> click command, registered by create_app
commands = {
    'run': run_cmd,
    'eval': eval_cmd,
    'synth': synth_cmd,
    'bench': bench_cmd,
    'inspect': inspect_cmd
}
