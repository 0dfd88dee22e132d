import logging


log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3


class EcosimError(Exception):
    pass


class DescriptionError(EcosimError, ValueError):
    pass


class UnknownAgentError(EcosimError, KeyError):
    def __init__(self, agent_id):
        super(UnknownAgentError, self).__init__(f'Unknown agent: {agent_id}')
        self.agent_id = agent_id

    def __str__(self):
        return self.args[0]


class UnknownHabitatError(EcosimError, KeyError):
    def __init__(self, habitat_id):
        super(UnknownHabitatError, self).__init__(f'Unknown habitat: {habitat_id}')
        self.habitat_id = habitat_id

    def __str__(self):
        return self.args[0]


class SeedingError(EcosimError):
    pass


class OracleSizeError(EcosimError, ValueError):
    pass


class ConfigError(EcosimError, ValueError):
    """Configuration error, carrying the dotted key it concerns."""
    def __init__(self, field: str, message: str):
        super(ConfigError, self).__init__(f'{field}: {message}')
        self.field = field


class CommandError(Exception):
    def __init__(self, status: int, message: str = ''):
        super(CommandError, self).__init__(message)
        self.status = status


def reraise_command_error(e):
    log.error('Command failed: %s', e, exc_info=True)
    if isinstance(e, CommandError):
        raise e
    if isinstance(e, (ConfigError, OracleSizeError, DescriptionError,
                      UnknownHabitatError, ValueError)):
        raise CommandError(EXIT_USAGE, str(e))
    if isinstance(e, OSError):
        raise CommandError(EXIT_IO, str(e))
    raise CommandError(EXIT_USAGE, str(e))
