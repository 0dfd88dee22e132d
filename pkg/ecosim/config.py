import dataclasses
import logging
import os
import re
from typing import IO, Any, Dict, Optional, Tuple

from .ecosystem import EcosystemConfig, JoinConfig, WorkloadConfig
from .evolution import GAConfig
from .exception import ConfigError
from .habitat import HabitatConfig, Strategy


log = logging.getLogger(__name__)
THREADS_ENV = 'ECOSIM_THREADS'

SECTIONS = {
    'ga': GAConfig,
    'habitat': HabitatConfig,
    'workload': WorkloadConfig,
    'join': JoinConfig,
}
TOP_LEVEL = ('alphabet_size', 'agents_per_user', 'execution_threshold', 'migration_enabled')
TRUE_VALUES = ('true', 'yes', 'on', '1')
FALSE_VALUES = ('false', 'no', 'off', '0')


def parse_bool(value: str, field: str = 'value') -> bool:
    v = value.strip().lower()
    if v in TRUE_VALUES:
        return True
    if v in FALSE_VALUES:
        return False
    raise ConfigError(field, f'expected a boolean, got {value!r}')


def parse_tokens(value: str, field: str = 'tokens') -> Tuple[int, ...]:
    try:
        return tuple(int(t) for t in re.split(r'[\s,]+', value.strip()) if t)
    except ValueError:
        raise ConfigError(field, f'expected comma-separated integers, got {value!r}')


def _coerce(field: str, annotation: Any, value: str) -> Any:
    text = str(annotation)
    try:
        if annotation is bool or text == 'bool':
            return parse_bool(value, field)
        if annotation is int or text == 'int':
            return int(value)
        if annotation is float or 'float' in text:
            if value.strip() == '' and 'Optional' in text:
                return None
            return float(value)
        if annotation is Strategy or 'Strategy' in text:
            return Strategy(value.strip().lower())
    except ValueError:
        raise ConfigError(field, f'cannot parse {value!r}')
    raise ConfigError(field, f'unsupported setting type {text}')


class ConfigFile:
    """Flat `key = value` settings, `#` comments ignored."""
    values: Dict[str, str]

    def __init__(self, file: IO[str]):
        self.values = {}
        comment_pattern = re.compile(r'^\s*(\#.*)?$')
        entry_pattern = re.compile(r'^\s*([A-Za-z_][A-Za-z0-9_.]*)\s*=\s*(.*?)\s*$')
        for number, line in enumerate(file.readlines(), start=1):
            if comment_pattern.match(line):
                continue
            m = entry_pattern.match(line.split(' #')[0])
            if not m:
                raise ConfigError(f'line {number}', f'malformed line: {line.strip()!r}')
            self.values[m.group(1)] = m.group(2)

    def build(self, base: Optional[EcosystemConfig] = None) -> EcosystemConfig:
        cfg = base or EcosystemConfig()
        sections: Dict[str, Dict[str, Any]] = {name: {} for name in SECTIONS}
        top: Dict[str, Any] = {}
        community_tokens: Dict[int, Tuple[int, ...]] = {}
        for key in sorted(self.values):
            value = self.values[key]
            m = re.match(r'^workload\.community\.(\d+)\.tokens$', key)
            if m:
                community_tokens[int(m.group(1))] = parse_tokens(value, key)
                continue
            section, _, name = key.partition('.')
            if not name:
                if key not in TOP_LEVEL:
                    raise ConfigError(key, 'unknown setting')
                top[key] = _coerce(key, _field_type(EcosystemConfig, key), value)
                continue
            if section not in SECTIONS or name == 'community_tokens' or \
                    name not in _field_names(SECTIONS[section]):
                raise ConfigError(key, 'unknown setting')
            sections[section][name] = _coerce(key, _field_type(SECTIONS[section], name), value)
        if community_tokens:
            size = max(community_tokens) + 1
            sections['workload']['community_tokens'] = tuple(
                community_tokens.get(i, ()) for i in range(size))
        return dataclasses.replace(
            cfg,
            ga=dataclasses.replace(cfg.ga, **sections['ga']),
            habitat=dataclasses.replace(cfg.habitat, **sections['habitat']),
            workload=dataclasses.replace(cfg.workload, **sections['workload']),
            join=dataclasses.replace(cfg.join, **sections['join']),
            **top).validate()


def _field_names(cls) -> Tuple[str, ...]:
    return tuple(f.name for f in dataclasses.fields(cls))


def _field_type(cls, name: str) -> Any:
    for f in dataclasses.fields(cls):
        if f.name == name:
            return f.type
    raise ConfigError(name, 'unknown setting')


def load_config(path: Optional[str] = None) -> EcosystemConfig:
    if path is None:
        return EcosystemConfig().validate()
    log.debug(f'loading config: {path}')
    with open(path, 'r', encoding='utf-8') as f:
        return ConfigFile(f).build()


def flatten(cfg: EcosystemConfig) -> Dict[str, Any]:
    """The configuration as the dotted keys it is written with."""
    flat: Dict[str, Any] = {key: getattr(cfg, key) for key in TOP_LEVEL}
    for section in SECTIONS:
        for name, value in dataclasses.asdict(getattr(cfg, section)).items():
            if name == 'community_tokens':
                for i, tokens in enumerate(value):
                    flat[f'workload.community.{i}.tokens'] = list(tokens)
                continue
            flat[f'{section}.{name}'] = value.value if isinstance(value, Strategy) else value
    return flat


def threads_from_env(environ=os.environ) -> int:
    value = environ.get(THREADS_ENV)
    if value is None or value.strip() == '':
        return 1
    try:
        threads = int(value)
    except ValueError:
        threads = 0
    if threads < 1:
        raise ConfigError(THREADS_ENV, f'must be a positive integer, got {value!r}')
    return threads
