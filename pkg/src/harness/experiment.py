"""
Experiment configuration files: JSON parsing, validation and sweep expansion.
"""

import json
import re
import logging
from itertools import product
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from ..analysis import theory
from ..data.models import (
    Algorithm, CompressorSpec, ExperimentConfig, LibSVMSource, PartitionKind, RunConfig,
    ShuffleMode, SyntheticSource,
)
from ..optim.compressors import make_compressor
from ..optim.problem import FederatedProblem
from ..utils.config import Config
from ..utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

TOP_LEVEL_KEYS = {
    'name', 'output', 'repeats', 'seed', 'epochs', 'algorithm', 'shuffle', 'gamma',
    'alpha', 'eta', 'compressor', 'x0', 'problem',
}
COMPRESSOR_KEYS = {'kind', 'k', 'levels'}
SYNTHETIC_KEYS = {
    'source', 'M', 'n', 'd', 'noise', 'heterogeneity', 'lambda', 'identical_clients',
    'normalize_rows', 'seed',
}
LIBSVM_KEYS = {'source', 'path', 'M', 'partition', 'lambda', 'n_features', 'normalize_rows', 'seed'}
SWEEP_FIELDS = {'algorithm', 'gamma', 'compressor.k'}
GAMMA_RULE = re.compile(r'\s*([0-9]*\.?[0-9]+(?:[eE][+-]?[0-9]+)?)\s*/\s*L\s*')


def _check_keys(section: Dict[str, Any], allowed: set, prefix: str = ''):
    if not isinstance(section, dict):
        raise ConfigurationError("must be an object", prefix.rstrip('.') or None)
    for key in section:
        if key not in allowed:
            raise ConfigurationError("unknown key", f"{prefix}{key}")


def _integer(value, field: str, minimum: int = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError(f"must be an integer, got {value!r}", field)
    if minimum is not None and value < minimum:
        raise ConfigurationError(f"must be >= {minimum}, got {value}", field)
    return value


def _number(value, field: str, minimum: float = None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"must be a number, got {value!r}", field)
    if minimum is not None and value < minimum:
        raise ConfigurationError(f"must be >= {minimum}, got {value}", field)
    return float(value)


def _boolean(value, field: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigurationError(f"must be true or false, got {value!r}", field)
    return value


def _as_list(value, field: str) -> List[Any]:
    """Sweep-capable fields accept a scalar or a non-empty list."""
    if isinstance(value, list):
        if not value:
            raise ConfigurationError("list must not be empty", field)
        return value
    return [value]


def _no_list(value, field: str):
    if isinstance(value, list) and field not in SWEEP_FIELDS:
        raise ConfigurationError("only algorithm, gamma and compressor.k may be lists", field)
    return value


def _gamma_spec(value, field: str = 'gamma') -> Union[float, str]:
    if isinstance(value, str):
        if value == 'thm4' or GAMMA_RULE.fullmatch(value):
            return value
        raise ConfigurationError(f"expected a number, '<c>/L' or 'thm4', got '{value}'", field)
    gamma = _number(value, field)
    if gamma <= 0:
        raise ConfigurationError(f"must be positive, got {value}", field)
    return gamma


def _unit_interval(value, field: str) -> Union[float, str]:
    if value == 'auto':
        return value
    number = _number(value, field)
    if not 0 < number <= 1:
        raise ConfigurationError(f"must lie in (0, 1] or be 'auto', got {value}", field)
    return number


def _parse_problem(section: Dict[str, Any]) -> Union[SyntheticSource, LibSVMSource]:
    if not isinstance(section, dict):
        raise ConfigurationError("must be an object", 'problem')
    source = section.get('source', 'synthetic')
    for key, value in section.items():
        _no_list(value, f'problem.{key}')

    lam = section.get('lambda')
    if lam is not None:
        lam = _number(lam, 'problem.lambda', 0.0)

    if source == 'synthetic':
        _check_keys(section, SYNTHETIC_KEYS, 'problem.')
        for key in ('M', 'n', 'd'):
            if key not in section:
                raise ConfigurationError("required", f'problem.{key}')
        return SyntheticSource(
            M=_integer(section['M'], 'problem.M', 1),
            n=_integer(section['n'], 'problem.n', 1),
            d=_integer(section['d'], 'problem.d', 1),
            noise=_number(section.get('noise', 0.0), 'problem.noise', 0.0),
            heterogeneity=_number(section.get('heterogeneity', 0.0), 'problem.heterogeneity', 0.0),
            lam=lam,
            identical_clients=_boolean(section.get('identical_clients', False), 'problem.identical_clients'),
            normalize_rows=_boolean(section.get('normalize_rows', False), 'problem.normalize_rows'),
            seed=_integer(section.get('seed', 0), 'problem.seed', 0),
        )
    if source == 'libsvm':
        _check_keys(section, LIBSVM_KEYS, 'problem.')
        if not isinstance(section.get('path'), str):
            raise ConfigurationError("required path string", 'problem.path')
        if 'M' not in section:
            raise ConfigurationError("required", 'problem.M')
        try:
            partition = PartitionKind(section.get('partition', 'iid'))
        except ValueError:
            raise ConfigurationError(f"unknown partition '{section.get('partition')}'", 'problem.partition')
        n_features = section.get('n_features')
        return LibSVMSource(
            path=section['path'],
            M=_integer(section['M'], 'problem.M', 1),
            partition=partition,
            lam=lam,
            n_features=None if n_features is None else _integer(n_features, 'problem.n_features', 1),
            normalize_rows=_boolean(section.get('normalize_rows', False), 'problem.normalize_rows'),
            seed=_integer(section.get('seed', 0), 'problem.seed', 0),
        )
    raise ConfigurationError(f"expected 'synthetic' or 'libsvm', got {source!r}", 'problem.source')


def parse_experiment_config(raw: Dict[str, Any], default_name: str = 'experiment') -> ExperimentConfig:
    """
    Validate a decoded experiment document.

    Raises:
        ConfigurationError: unknown keys, wrong types, out-of-range values or misplaced lists,
            always naming the offending field path
    """
    _check_keys(raw, TOP_LEVEL_KEYS)
    for key, value in raw.items():
        if key not in ('algorithm', 'gamma', 'x0', 'problem', 'compressor'):
            _no_list(value, key)
    if 'problem' not in raw:
        raise ConfigurationError("required", 'problem')

    algorithms = []
    for value in _as_list(raw.get('algorithm', 'FedCRR'), 'algorithm'):
        try:
            algorithms.append(Algorithm(value))
        except ValueError:
            raise ConfigurationError(f"unknown algorithm {value!r}", 'algorithm')
    try:
        shuffle = ShuffleMode(raw.get('shuffle', 'RR'))
    except ValueError:
        raise ConfigurationError(f"unknown shuffle mode {raw.get('shuffle')!r}", 'shuffle')
    if 'gamma' not in raw:
        raise ConfigurationError("required", 'gamma')
    gammas = [_gamma_spec(value) for value in _as_list(raw['gamma'], 'gamma')]

    compressor = raw.get('compressor', {'kind': 'identity'})
    _check_keys(compressor, COMPRESSOR_KEYS, 'compressor.')
    kind = _no_list(compressor.get('kind', 'identity'), 'compressor.kind')
    if kind not in ('identity', 'randk', 'dithering'):
        raise ConfigurationError(f"unknown compressor kind {kind!r}", 'compressor.kind')
    _no_list(compressor.get('levels'), 'compressor.levels')
    if kind == 'randk':
        if 'k' not in compressor:
            raise ConfigurationError("required for randk", 'compressor.k')
        ks = [_integer(k, 'compressor.k', 1) for k in _as_list(compressor['k'], 'compressor.k')]
    else:
        ks = [None]
    levels = None
    if kind == 'dithering':
        levels = _integer(compressor.get('levels'), 'compressor.levels', 1)

    x0 = raw.get('x0', 'zeros')
    if isinstance(x0, list):
        x0 = tuple(_number(v, 'x0') for v in x0)
    elif x0 != 'zeros':
        raise ConfigurationError(f"must be 'zeros' or a list of numbers, got {x0!r}", 'x0')

    name = raw.get('name', default_name)
    if not isinstance(name, str) or not name:
        raise ConfigurationError("must be a non-empty string", 'name')
    output = raw.get('output')
    if output is None:
        output = str(Path(Config().output_config.get('directory', 'results')) / name)
    elif not isinstance(output, str):
        raise ConfigurationError("must be a path string", 'output')

    config = ExperimentConfig(
        name=name,
        problem=_parse_problem(raw['problem']),
        algorithms=algorithms,
        shuffle=shuffle,
        gammas=gammas,
        alpha=_unit_interval(raw.get('alpha', 1.0), 'alpha'),
        eta=_unit_interval(raw.get('eta', 1.0), 'eta'),
        epochs=_integer(raw.get('epochs', 100), 'epochs', 1),
        compressor_kind=kind,
        ks=ks,
        levels=levels,
        seed=_integer(raw.get('seed', 0), 'seed', 0),
        repeats=_integer(raw.get('repeats', 1), 'repeats', 1),
        x0=x0,
        output=output,
        raw=raw,
    )
    if Algorithm.FED_RR in algorithms and kind != 'identity':
        raise ConfigurationError("FedRR runs without compression", 'compressor.kind')
    return config


def load_experiment_config(path: Union[str, Path], seed: Optional[int] = None) -> ExperimentConfig:
    """Read and validate a JSON experiment file; seed overrides the file's seed."""
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as file:
            raw = json.load(file)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}")
    if seed is not None:
        if not isinstance(raw, dict):
            raise ConfigurationError("must be an object")
        raw = dict(raw, seed=seed)
    config = parse_experiment_config(raw, default_name=path.stem)
    logger.info(f"Loaded experiment '{config.name}' from {path} ({config.grid_size} grid points)")
    return config


def expand_grid(config: ExperimentConfig) -> List[Tuple[Algorithm, Union[float, str], Optional[int]]]:
    """Cartesian product of the sweep fields in (algorithm, gamma, k) order."""
    return list(product(config.algorithms, config.gammas, config.ks))


def resolve_gamma(spec: Union[float, str], problem: FederatedProblem) -> float:
    """Turn a number, '<c>/L' or 'thm4' into a stepsize for problem."""
    if isinstance(spec, str):
        if spec == 'thm4':
            return theory.theorem4_stepsize(problem)
        match = GAMMA_RULE.fullmatch(spec)
        if match is None:
            raise ConfigurationError(f"cannot resolve '{spec}'", 'gamma')
        return float(match.group(1)) / problem.smoothness_constants().L
    return float(spec)


def resolve_run_config(config: ExperimentConfig, problem: FederatedProblem, algorithm: Algorithm,
                       gamma_spec: Union[float, str], k: Optional[int], seed: int) -> RunConfig:
    """
    Concrete RunConfig for one grid point and seed.

    alpha 'auto' is 1/(omega+1); eta 'auto' is the largest value the convergence
    condition for algorithm allows.
    """
    spec = CompressorSpec(config.compressor_kind, k, config.levels)
    omega = make_compressor(spec, problem.d).omega()
    gamma = resolve_gamma(gamma_spec, problem)
    alpha = 1.0 / (omega + 1.0) if config.alpha == 'auto' else config.alpha
    if config.eta == 'auto':
        eta = theory.eta_limit(problem, gamma, omega, half_epoch=algorithm == Algorithm.FED_CRR_VR2)
    else:
        eta = config.eta
    return RunConfig(
        algorithm=algorithm,
        shuffle=config.shuffle,
        gamma=gamma,
        alpha=alpha,
        eta=eta,
        epochs=config.epochs,
        compressor=spec,
        seed=seed,
        x0=config.x0,
    )
