# app.py
import click

from config import current_config
from extensions import init_logging


def create_app():
    """Build the depthfusion command group with every subcommand registered"""

    @click.group(name='depthfusion')
    @click.option('--log-level', type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False),
                  default=None, help=f'Defaults to {current_config.LOG_LEVEL}')
    def app(log_level):
        """Temporally consistent metric depth from relative depth, flow and odometry."""
        init_logging(log_level)

    from commands import commands
    for name, command in commands.items():
        app.add_command(command, name)

    return app
