"""
Configuration for the VANET Sybil-detection simulator
Reference experiment defaults, scenario presets, YAML scenario files and logging setup
"""

import os
import logging
from dataclasses import dataclass, field, fields, asdict, replace
from typing import List, Optional

import yaml
from dotenv import load_dotenv

from models import AttackerPolicy

logger = logging.getLogger(__name__)

SECTIONS = ('scenario', 'road', 'channel', 'trust', 'challenge', 'attack', 'metrics')
AGGREGATION_MODES = ('identity', 'per_observer')


class ConfigValidationError(ValueError):
    """Raised when a configuration violates one or more invariants"""

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__('Invalid configuration: ' + '; '.join(self.violations))


class ConfigParseError(ValueError):
    """Raised when a scenario file cannot be parsed"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        where = f" (line {line})" if line is not None else ''
        super().__init__(f"{message}{where}")


class Config:
    """Base configuration: evaluation parameters of the reference experiments"""
    # Scenario
    VEHICLES = 100
    SYBIL_FRACTION = 0.10
    DURATION_EPOCHS = 600
    EPOCH_DURATION = 0.1
    NOISE_SIGMA = 0.5
    SEED = 0

    # Road: 2 km two-lane loop
    ROAD_LENGTH = 2000.0
    ROAD_LANES = 2
    LANE_OFFSET = 3.5
    SPEED_LIMIT = 15.0
    MIN_SPACING = 5.0

    # Radio
    OMNI_RANGE = 300.0
    BEAM_RANGE = 300.0
    BEAM_HALF_ANGLE = 15.0
    BEAM_FOCUS_RADIUS = 20.0
    DELIVERY_DELAY = 0

    # Trust assessment
    TRUST_ALPHA = 0.01
    TRUST_BETA = 0.1
    TRUST_DELTA = 0.4
    TRUST_LAMBDA = 0.15
    TRUST_MIN = -5.0
    TRUST_MAX = 5.0
    WINDOW_SIZE = 20
    MIN_T_SAMPLES = 3
    HONEST_GRACE_EPOCHS = 50
    COLOCATION_EPSILON = 2.0

    # Challenge series
    MAX_ATTEMPTS = 3
    PER_ATTEMPT_TIMEOUT = 2

    # Attacker
    ATTACKER_POLICY = 'silent'
    SYBIL_CLAIMED_SPEED = 2.0
    GHOST_OFFSET_MIN = 50.0
    GHOST_OFFSET_MAX = 150.0
    GHOSTS_PER_ATTACKER = 1
    COLOCATE_GHOSTS = False

    # Evaluation
    AGGREGATION = 'identity'


class DeskScaleConfig(Config):
    """Desk-scale configuration (100 vehicles, 60 s)"""


class FullScaleConfig(Config):
    """Full-scale configuration (500 vehicles)"""
    VEHICLES = 500


class TestingConfig(Config):
    """Small, fast configuration for the test suite"""
    VEHICLES = 30
    DURATION_EPOCHS = 120


# Configuration dictionary
config = {
    'desk': DeskScaleConfig,
    'full': FullScaleConfig,
    'testing': TestingConfig,
    'default': DeskScaleConfig
}


@dataclass(frozen=True)
class TrustParams:
    alpha: float = Config.TRUST_ALPHA
    beta: float = Config.TRUST_BETA
    delta: float = Config.TRUST_DELTA
    lambda_: float = Config.TRUST_LAMBDA
    trust_min: float = Config.TRUST_MIN
    trust_max: float = Config.TRUST_MAX
    window_size: int = Config.WINDOW_SIZE
    min_t_samples: int = Config.MIN_T_SAMPLES
    honest_grace_epochs: int = Config.HONEST_GRACE_EPOCHS
    colocation_epsilon: float = Config.COLOCATION_EPSILON

    def validate(self) -> List[str]:
        problems = []
        if not 0 < self.alpha < 1:
            problems.append('trust.alpha: must satisfy 0 < alpha < 1')
        for name in ('beta', 'delta', 'lambda_', 'colocation_epsilon'):
            if getattr(self, name) < 0:
                problems.append(f"trust.{name.rstrip('_')}: must be >= 0")
        if not self.trust_min < self.trust_max:
            problems.append('trust.trust_min: must be < trust_max')
        if self.beta * max(abs(self.trust_min), abs(self.trust_max)) >= 1:
            problems.append('trust.beta: beta * max(|trust_min|, |trust_max|) must be < 1')
        if self.window_size < 1:
            problems.append('trust.window_size: must be >= 1')
        if self.min_t_samples < 2:
            problems.append('trust.min_t_samples: must be >= 2')
        if self.honest_grace_epochs < 0:
            problems.append('trust.honest_grace_epochs: must be >= 0')
        return problems


@dataclass(frozen=True)
class RoadConfig:
    length: float = Config.ROAD_LENGTH
    lanes: int = Config.ROAD_LANES
    lane_offset: float = Config.LANE_OFFSET
    speed_limit: float = Config.SPEED_LIMIT
    min_spacing: float = Config.MIN_SPACING

    def validate(self) -> List[str]:
        problems = []
        if self.length <= 0:
            problems.append('road.length: must be > 0')
        if self.lanes < 1:
            problems.append('road.lanes: must be >= 1')
        if self.lane_offset < 0:
            problems.append('road.lane_offset: must be >= 0')
        if self.speed_limit <= 0:
            problems.append('road.speed_limit: must be > 0')
        if self.min_spacing < 0:
            problems.append('road.min_spacing: must be >= 0')
        return problems


@dataclass(frozen=True)
class ChannelConfig:
    omni_range: float = Config.OMNI_RANGE
    beam_range: float = Config.BEAM_RANGE
    beam_half_angle: float = Config.BEAM_HALF_ANGLE
    beam_focus_radius: float = Config.BEAM_FOCUS_RADIUS
    delivery_delay: int = Config.DELIVERY_DELAY

    def validate(self) -> List[str]:
        problems = []
        if self.omni_range <= 0:
            problems.append('channel.omni_range: must be > 0')
        if self.beam_range <= 0:
            problems.append('channel.beam_range: must be > 0')
        if not 0 < self.beam_half_angle < 90:
            problems.append('channel.beam_half_angle: must satisfy 0 < angle < 90')
        if self.beam_focus_radius <= 0:
            problems.append('channel.beam_focus_radius: must be > 0')
        if self.delivery_delay < 0:
            problems.append('channel.delivery_delay: must be >= 0')
        return problems


@dataclass(frozen=True)
class ChallengeConfig:
    max_attempts: int = Config.MAX_ATTEMPTS
    per_attempt_timeout: int = Config.PER_ATTEMPT_TIMEOUT

    def validate(self) -> List[str]:
        problems = []
        if self.max_attempts < 1:
            problems.append('challenge.max_attempts: must be >= 1')
        if self.per_attempt_timeout < 1:
            problems.append('challenge.per_attempt_timeout: must be >= 1')
        return problems


@dataclass(frozen=True)
class AttackConfig:
    policy: AttackerPolicy = AttackerPolicy(Config.ATTACKER_POLICY)
    claimed_speed: float = Config.SYBIL_CLAIMED_SPEED
    ghost_offset_min: float = Config.GHOST_OFFSET_MIN
    ghost_offset_max: float = Config.GHOST_OFFSET_MAX
    ghosts_per_attacker: int = Config.GHOSTS_PER_ATTACKER
    colocate_ghosts: bool = Config.COLOCATE_GHOSTS

    def validate(self) -> List[str]:
        problems = []
        if self.claimed_speed < 0:
            problems.append('attack.claimed_speed: must be >= 0')
        if not 0 <= self.ghost_offset_min <= self.ghost_offset_max:
            problems.append('attack.ghost_offset_min: must satisfy 0 <= min <= ghost_offset_max')
        if self.ghosts_per_attacker < 1:
            problems.append('attack.ghosts_per_attacker: must be >= 1')
        return problems


@dataclass(frozen=True)
class MetricsConfig:
    aggregation: str = Config.AGGREGATION

    def validate(self) -> List[str]:
        if self.aggregation not in AGGREGATION_MODES:
            return [f"metrics.aggregation: must be one of {', '.join(AGGREGATION_MODES)}"]
        return []


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one simulation run"""
    vehicles: int = Config.VEHICLES
    sybil_fraction: float = Config.SYBIL_FRACTION
    duration_epochs: int = Config.DURATION_EPOCHS
    epoch_duration: float = Config.EPOCH_DURATION
    noise_sigma: float = Config.NOISE_SIGMA
    seed: int = Config.SEED
    road: RoadConfig = field(default_factory=RoadConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    trust: TrustParams = field(default_factory=TrustParams)
    challenge: ChallengeConfig = field(default_factory=ChallengeConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def validate(self) -> List[str]:
        problems = []
        if self.vehicles < 0:
            problems.append('scenario.vehicles: must be >= 0')
        if not 0 <= self.sybil_fraction <= 1:
            problems.append('scenario.sybil_fraction: must satisfy 0 <= fraction <= 1')
        if self.duration_epochs < 0:
            problems.append('scenario.duration_epochs: must be >= 0')
        if self.epoch_duration <= 0:
            problems.append('scenario.epoch_duration: must be > 0')
        if self.noise_sigma < 0:
            problems.append('scenario.noise_sigma: must be >= 0')
        if not 0 <= self.seed < 2 ** 64:
            problems.append('scenario.seed: must be a 64-bit unsigned integer')
        for section in SECTIONS[1:]:
            problems.extend(getattr(self, section).validate())
        if self.challenge.per_attempt_timeout <= 2 * self.channel.delivery_delay:
            problems.append('challenge.per_attempt_timeout: must exceed the round trip 2 * channel.delivery_delay')
        return problems

    def ensure_valid(self) -> 'ScenarioConfig':
        problems = self.validate()
        if problems:
            raise ConfigValidationError(problems)
        return self


def scenario_from_preset(name: str = 'default') -> ScenarioConfig:
    """
    Build a scenario from one of the preset classes

    Args:
        name (str): Key of the `config` dictionary (desk, full, testing, default)

    Returns:
        ScenarioConfig: Validated scenario
    """
    if name not in config:
        raise ValueError(f"Unknown preset: {name}")
    preset = config[name]
    return ScenarioConfig(
        vehicles=preset.VEHICLES,
        sybil_fraction=preset.SYBIL_FRACTION,
        duration_epochs=preset.DURATION_EPOCHS,
        epoch_duration=preset.EPOCH_DURATION,
        noise_sigma=preset.NOISE_SIGMA,
        seed=preset.SEED
    ).ensure_valid()


# ============================================
# SCENARIO FILES
# ============================================

_SECTION_TYPES = {
    'road': RoadConfig,
    'channel': ChannelConfig,
    'trust': TrustParams,
    'challenge': ChallengeConfig,
    'attack': AttackConfig,
    'metrics': MetricsConfig
}
_SCENARIO_KEYS = ('vehicles', 'sybil_fraction', 'duration_epochs', 'epoch_duration', 'noise_sigma', 'seed')


def _file_key(name: str) -> str:
    return 'lambda' if name == 'lambda_' else name


def _field_name(key: str) -> str:
    return 'lambda_' if key == 'lambda' else key


def _coerce(section: str, key: str, value, default):
    """Coerce a YAML scalar to the type of the field default"""
    where = f"{section}.{key}"
    if isinstance(default, AttackerPolicy):
        try:
            return AttackerPolicy(str(value).lower())
        except ValueError:
            choices = ', '.join(p.value for p in AttackerPolicy)
            raise ConfigValidationError([f"{where}: must be one of {choices}"])
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigValidationError([f"{where}: must be true or false"])
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigValidationError([f"{where}: must be an integer"])
        if isinstance(value, float) and not value.is_integer():
            raise ConfigValidationError([f"{where}: must be an integer"])
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigValidationError([f"{where}: must be a number"])
        return float(value)
    if not isinstance(value, str):
        raise ConfigValidationError([f"{where}: must be a string"])
    return value


def _build_section(section: str, cls, values) -> object:
    if not isinstance(values, dict):
        raise ConfigValidationError([f"{section}: must be a mapping"])
    defaults = cls()
    known = {_file_key(f.name): f.name for f in fields(cls)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigValidationError([f"{section}.{key}: unknown key" for key in unknown])
    kwargs = {
        known[key]: _coerce(section, key, value, getattr(defaults, known[key]))
        for key, value in values.items()
    }
    return cls(**kwargs)


def config_from_dict(data: Optional[dict]) -> ScenarioConfig:
    """
    Build a validated scenario from a parsed mapping

    Args:
        data (dict): Sections (scenario, road, ...) and/or top-level scenario keys

    Returns:
        ScenarioConfig: Validated scenario
    """
    data = dict(data or {})
    unknown = sorted(k for k in data if k not in SECTIONS and k not in _SCENARIO_KEYS)
    if unknown:
        raise ConfigValidationError([f"{key}: unknown key" for key in unknown])

    scenario_values = {k: data.pop(k) for k in list(data) if k in _SCENARIO_KEYS}
    section = data.pop('scenario', None) or {}
    if not isinstance(section, dict):
        raise ConfigValidationError(['scenario: must be a mapping'])
    duplicated = sorted(set(section) & set(scenario_values))
    if duplicated:
        raise ConfigValidationError([f"scenario.{key}: given twice" for key in duplicated])
    scenario_values.update(section)

    defaults = ScenarioConfig()
    unknown = sorted(k for k in scenario_values if k not in _SCENARIO_KEYS)
    if unknown:
        raise ConfigValidationError([f"scenario.{key}: unknown key" for key in unknown])
    kwargs = {
        key: _coerce('scenario', key, value, getattr(defaults, key))
        for key, value in scenario_values.items()
    }
    for name, cls in _SECTION_TYPES.items():
        if name in data and data[name] is not None:
            kwargs[name] = _build_section(name, cls, data[name])
    return ScenarioConfig(**kwargs).ensure_valid()


def parse_config(path: str) -> ScenarioConfig:
    """
    Read and validate a YAML scenario file

    Args:
        path (str): Scenario file path

    Returns:
        ScenarioConfig: Validated scenario with reference defaults for omitted keys
    """
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            text = handle.read()
    except OSError as e:
        logger.error(f"Error reading config {path}: {str(e)}")
        raise

    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, 'problem_mark', None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(e, 'problem', None) or str(e)
        logger.error(f"Error parsing config {path}: {problem}")
        raise ConfigParseError(f"{path}: {problem}", line)

    if data is not None and not isinstance(data, dict):
        raise ConfigParseError(f"{path}: top level must be a mapping", 1)

    scenario = config_from_dict(data)
    logger.info(f"Config loaded: {path} ({scenario.vehicles} vehicles, {scenario.duration_epochs} epochs)")
    return scenario


def config_to_dict(scenario: ScenarioConfig) -> dict:
    """Canonical nested mapping of a scenario"""
    raw = asdict(scenario)
    out = {'scenario': {key: raw[key] for key in _SCENARIO_KEYS}}
    for name in _SECTION_TYPES:
        out[name] = {
            _file_key(key): (value.value if isinstance(value, AttackerPolicy) else value)
            for key, value in raw[name].items()
        }
    return out


def dump_config(scenario: ScenarioConfig) -> str:
    """Canonical YAML text; parse_config on it reproduces the same scenario"""
    return yaml.safe_dump(config_to_dict(scenario), sort_keys=False, default_flow_style=False)


def with_parameter(scenario: ScenarioConfig, param: str, value) -> ScenarioConfig:
    """
    Return a copy of the scenario with one sweepable parameter replaced

    Args:
        scenario (ScenarioConfig): Base scenario
        param (str): One of SWEEP_PARAMETERS
        value: New value

    Returns:
        ScenarioConfig: Validated copy
    """
    if param not in SWEEP_PARAMETERS:
        raise ConfigValidationError([f"{param}: not a sweepable parameter"])
    section, name = SWEEP_PARAMETERS[param]
    if section == 'scenario':
        value = int(value) if name == 'seed' else float(value)
        updated = replace(scenario, **{name: value})
    else:
        updated = replace(scenario, **{section: replace(getattr(scenario, section), **{name: float(value)})})
    return updated.ensure_valid()


SWEEP_PARAMETERS = {
    'sybil_fraction': ('scenario', 'sybil_fraction'),
    'lambda': ('trust', 'lambda_'),
    'delta': ('trust', 'delta'),
    'beta': ('trust', 'beta'),
    'alpha': ('trust', 'alpha'),
    'seed': ('scenario', 'seed'),
    'noise_sigma': ('scenario', 'noise_sigma'),
    'beam_half_angle': ('channel', 'beam_half_angle'),
    'beam_focus_radius': ('channel', 'beam_focus_radius')
}


# ============================================
# ENVIRONMENT & LOGGING
# ============================================

def default_output_dir() -> str:
    """Output directory from TASER_SIM_OUT (a .env file is honoured) or 'results'"""
    load_dotenv()
    return os.environ.get('TASER_SIM_OUT') or 'results'


def configure_logging(level: str = 'INFO', json_format: bool = False):
    """
    Configure root logging for command-line entry points

    Args:
        level (str): Logging level name
        json_format (bool): Emit JSON records through python-json-logger
    """
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)

    handler = logging.StreamHandler()
    if json_format:
        try:
            from pythonjsonlogger.json import JsonFormatter
        except ImportError:
            from pythonjsonlogger.jsonlogger import JsonFormatter
        handler.setFormatter(JsonFormatter('%(asctime)s %(levelname)s %(name)s %(message)s'))
    else:
        handler.setFormatter(logging.Formatter('%(asctime)s %(levelname)s %(name)s: %(message)s'))
    root.addHandler(handler)
    root.setLevel(getattr(logging, str(level).upper(), logging.INFO))
