import json
import os
import re
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum

import numpy as np

from xgfem.core.constants import Constants
from xgfem.core.exceptions import ConfigError
from xgfem.core.xg_debug import logger

"""
Method and experiment configuration
"""


class Regime(str, Enum):
    GRAD = 'grad'  # tau = (rho h_e)^-1, eta = c_eta rho h_e
    DIV = 'div'  # eta = (rho h_e)^-1, tau = c_tau rho h_e
    MANUAL = 'manual'


SOLVE_PATHS = ('full', 'pcheck', 'ucheck', 'both', 'hybridize', 'wg_phat')
COMMANDS = ('solve', 'eoc', 'infsup', 'limit', 'zoo')
ACCEPTANCE_KEYS = {'eoc_tolerance', 'slope_min', 'infsup_ratio_max', 'beta_min', 'stability_spread_max',
                   'elimination_tol', 'exactness_tol'}


def _fail(message: str):
    logger.error(message)
    raise ConfigError(message)


@dataclass(frozen=True)
class MethodConfig:
    k_p: int
    k_u: int
    k_pcheck: int | None
    k_ucheck: int | None
    q_family: str = 'vector'
    regime: Regime = Regime.GRAD
    rho: float = Constants.DEFAULT_RHO.value
    c_eta: float = Constants.DEFAULT_C_ETA.value
    c_tau: float = Constants.DEFAULT_C_TAU.value
    tau: float | None = None
    eta: float | None = None
    norm_regime: Regime | None = None
    solve: str = 'full'
    quad_degree: int | None = None
    name: str = 'custom'
    label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, 'regime', Regime(self.regime))
        if self.norm_regime is not None:
            object.__setattr__(self, 'norm_regime', Regime(self.norm_regime))
        for name in ('k_p', 'k_u'):
            if not isinstance(getattr(self, name), (int, np.integer)) or getattr(self, name) < 0:
                _fail('Degree ' + name + ' must be an integer >= 0, got ' + str(getattr(self, name)))
        for name in ('k_pcheck', 'k_ucheck'):
            value = getattr(self, name)
            if value is not None and (not isinstance(value, (int, np.integer)) or value < 0):
                _fail('Degree ' + name + ' must be an integer >= 0 or "none", got ' + str(value))
        if self.q_family not in ('vector', 'rt'):
            _fail('Flux family must be "vector" or "rt", got ' + str(self.q_family))
        if self.solve not in SOLVE_PATHS:
            _fail('Unknown solve path: ' + str(self.solve))
        for name in ('rho', 'c_eta', 'c_tau'):
            if not getattr(self, name) > 0:
                _fail(name + ' must be positive, got ' + str(getattr(self, name)))
        if self.regime == Regime.MANUAL:
            if self.tau is None or self.eta is None or not (self.tau > 0 and self.eta > 0):
                _fail('Manual regime needs positive tau and eta')
        if self.norm_regime == Regime.MANUAL:
            _fail('Norm regime must be grad or div')

    def __repr__(self) -> str:
        return ('<MethodConfig ' + self.name + ': Q' + ('RT' if self.q_family == 'rt' else '') + str(self.k_p)
                + ' Qc' + str(self.k_pcheck) + ' V' + str(self.k_u) + ' Vc' + str(self.k_ucheck)
                + ' ' + self.regime.value + ' rho=' + format(self.rho, 'g') + '>')

    @property
    def infsup_regime(self) -> Regime:
        if self.regime != Regime.MANUAL:
            return self.regime
        return self.norm_regime or Regime.GRAD

    @property
    def flux_poly_degree(self) -> int:
        return self.k_p + 1 if self.q_family == 'rt' else self.k_p

    @property
    def quadrature_degree(self) -> int:
        if self.quad_degree is not None:
            return self.quad_degree
        degrees = [self.flux_poly_degree, self.k_u, self.k_pcheck or 0, self.k_ucheck or 0]
        return 2 * max(degrees) + Constants.QUAD_EXTRA_DEGREE.value

    def penalties(self, edge_lengths: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        :return: (tau, eta), constant on every edge
        """
        rho_h = self.rho * np.asarray(edge_lengths, dtype=float)
        if self.regime == Regime.GRAD:
            return 1.0 / rho_h, self.c_eta * rho_h
        if self.regime == Regime.DIV:
            return self.c_tau * rho_h, 1.0 / rho_h
        return np.full_like(rho_h, self.tau), np.full_like(rho_h, self.eta)

    def with_rho(self, rho: float) -> 'MethodConfig':
        return replace(self, rho=rho)

    def to_dict(self) -> dict:
        d = asdict(self)
        d['regime'] = self.regime.value
        d['norm_regime'] = self.norm_regime.value if self.norm_regime else None
        return d

    @classmethod
    def from_preset(cls, name: str, k: int | None = None, **overrides) -> 'MethodConfig':
        """
        :param name: preset name, optionally suffixed with -k<k> (e.g. grad-k0)
        :param k: base degree, required unless given in the name
        """
        match = re.fullmatch(r'(.+)-k(\d+)', name)
        base = name
        if match and match.group(1) in Constants.PRESETS.value:
            base, k = match.group(1), int(match.group(2))
        if base not in Constants.PRESETS.value:
            _fail('Unknown preset: ' + name)
        if k is None:
            _fail('Preset ' + name + ' needs a degree k')
        entry = dict(Constants.PRESETS.value[base])
        if k < entry.pop('min_k', 0):
            _fail('Preset ' + base + ' needs k >= ' + str(Constants.PRESETS.value[base]['min_k']))
        entry.pop('table', None)
        for key in ('k_p', 'k_u', 'k_pcheck', 'k_ucheck'):
            if entry[key] is not None:
                entry[key] = entry[key] + k
        entry['name'] = base + '-k' + str(k)
        entry.update(overrides)
        return cls(**entry)


def table_presets() -> list[str]:
    return [name for name, entry in Constants.PRESETS.value.items() if entry.get('table')]


@dataclass
class ExperimentConfig:
    command: str
    case: str = 'C1'
    levels: list[int] = field(default_factory=lambda: [2, 4, 8])
    preset: str | None = None
    k: int = 0
    method: dict = field(default_factory=dict)
    rho: float = Constants.DEFAULT_RHO.value
    rhos: list[float] = field(default_factory=list)
    neumann: list[str] = field(default_factory=list)
    elimination: str | None = None
    reference: str | None = None
    acceptance: dict = field(default_factory=dict)
    threads: int | None = None
    vtk: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            _fail('Unknown command: ' + str(self.command))
        if not self.levels or any(not isinstance(n, int) or n < 1 for n in self.levels):
            _fail('Levels must be a non-empty list of positive integers')
        if any(side not in Constants.BOUNDARY_SIDES.value for side in self.neumann):
            _fail('Unknown Neumann side in ' + str(self.neumann))
        if self.reference not in (None, 'primal', 'mixed'):
            _fail('Reference must be "primal" or "mixed"')
        if any(not r > 0 for r in self.rhos) or not self.rho > 0:
            _fail('rho values must be positive')
        unknown = set(self.acceptance) - ACCEPTANCE_KEYS
        if unknown:
            _fail('Unknown acceptance keys: ' + ', '.join(sorted(unknown)))

    def method_config(self, preset: str | None = None) -> MethodConfig:
        name = preset or self.preset
        overrides = dict(self.method)
        overrides.setdefault('rho', self.rho)
        if self.elimination is not None:
            overrides['solve'] = self.elimination
        try:
            if name is not None:
                return MethodConfig.from_preset(name, self.k, **overrides)
            return MethodConfig(**overrides)
        except TypeError as e:
            _fail('Invalid method fields: ' + str(e))

    def acceptance_value(self, key: str, default: Constants):
        return self.acceptance.get(key, default.value)


def _decode_degree(value):
    return None if value == 'none' else value


def load_config(path: str, command: str | None = None) -> ExperimentConfig:
    """
    Read an experiment from a JSON file.
    :param command: command given on the command line; overrides the file's, which must agree if present
    """
    if not os.path.exists(path):
        _fail('No config file: ' + path)
    try:
        with open(path, encoding='utf-8') as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        _fail('Cannot parse config ' + path + ': ' + str(e))
    if not isinstance(raw, dict):
        _fail('Config root must be an object')
    if command is not None:
        if raw.get('command', command) != command:
            _fail('Config command ' + str(raw['command']) + ' does not match ' + command)
        raw['command'] = command
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        _fail('Unknown config keys: ' + ', '.join(sorted(unknown)))
    method = raw.get('method', {})
    if not isinstance(method, dict):
        _fail('"method" must be an object')
    raw['method'] = {key: _decode_degree(value) if key.startswith('k_') else value for key, value in method.items()}
    try:
        config = ExperimentConfig(**raw)
    except TypeError as e:
        _fail('Invalid config: ' + str(e))
    logger.info('Loaded ' + config.command + ' config from ' + path)
    return config
