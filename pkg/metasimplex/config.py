"""
Experiment configuration documents.

An experiment is a JSON document validated against ``experiment.schema.json``:

.. code-block:: json

    {
        "title": "EGN on two nodes",
        "dims": {"n": 2, "c": 2},
        "payoff": {"kind": "egn", "omega": [[0, 1], [1, 0]], "b": [[1, 0], [0, 1]]},
        "initial": {"kind": "random-interior"},
        "integrator": {"scheme": "rk4-tangent", "h": 0.001, "t_end": 5},
        "analysis": {"nash": true, "embedding_check": true}
    }

Documents shipped with the package can be referenced by name, see :func:`bundled_configs`.
"""

import dataclasses
import glob
import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence

import jsonschema
import numpy as np
from dataclasses_json import dataclass_json

from metasimplex.dynamics import IntegratorConfig
from metasimplex.errors import ConfigError, MetasimplexError
from metasimplex.meta import check_size
from metasimplex.payoff import GameMatrix, GraphWeights, PayoffModel
from metasimplex.simplex import AssignmentState, barycenter_W, random_assignment, random_near_vertex

__all__ = [
    'SCHEMA_PATH', 'CONFIG_DIR',
    'Dims', 'PayoffSpec', 'InitialSpec', 'AnalysisSpec', 'ExperimentConfig',
    'load_config', 'parse_config', 'bundled_configs', 'resolve_config_path',
]

SCHEMA_PATH = os.path.join(os.path.dirname(__file__), 'experiment.schema.json')
CONFIG_DIR = os.path.join(os.path.dirname(__file__), 'configs')


@dataclass_json
@dataclass(frozen=True)
class Dims:
    n: int
    c: int


@dataclass_json
@dataclass(frozen=True)
class PayoffSpec:
    kind: str
    graph: Optional[str] = None
    omega: Optional[List[List[float]]] = None
    b: Optional[List[List[float]]] = None
    a_bar: Optional[List[List[float]]] = None
    games: Optional[List[List[List[float]]]] = None


@dataclass_json
@dataclass(frozen=True)
class InitialSpec:
    kind: str = 'barycenter'
    state: Optional[List[List[float]]] = None
    concentration: float = 1.0
    vertex_weight: float = 0.9


@dataclass_json
@dataclass(frozen=True)
class AnalysisSpec:
    nash: bool = True
    ess: bool = False
    wright: bool = False
    embedding_check: bool = False
    ess_radius: float = 0.1
    ess_samples: int = 1000

    @property
    def embedded(self) -> bool:
        return self.wright or self.embedding_check


@dataclass_json
@dataclass(frozen=True)
class ExperimentConfig:
    title: str
    dims: Dims
    payoff: PayoffSpec
    description: Optional[str] = None
    tags: List[str] = field(default_factory=list)
    initial: InitialSpec = field(default_factory=InitialSpec)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    analysis: AnalysisSpec = field(default_factory=AnalysisSpec)
    output_dir: Optional[str] = None
    seed: int = 0
    size_cap: Optional[int] = None

    def selection_labels(self) -> Mapping[str, Sequence[str]]:
        return {'tag': self.tags, 'kind': [self.payoff.kind], 'scheme': [self.integrator.scheme],
                'name': [self.title]}

    def selection_values(self) -> Mapping[str, Sequence[float]]:
        n, c = self.dims.n, self.dims.c
        return {'n': [n], 'c': [c], 'N': [c ** n], 'h': [self.integrator.h], 't_end': [self.integrator.t_end]}

    def with_overrides(self, *, seed: Optional[int] = None, output_dir: Optional[str] = None,
                       size_cap: Optional[int] = None, h: Optional[float] = None,
                       t_end: Optional[float] = None) -> 'ExperimentConfig':
        """Returns a copy with every given value replaced."""
        integrator = self.integrator
        if h is not None:
            integrator = dataclasses.replace(integrator, h=h)
        if t_end is not None:
            integrator = dataclasses.replace(integrator, t_end=t_end)
        config = dataclasses.replace(
            self,
            integrator=integrator,
            seed=self.seed if seed is None else seed,
            output_dir=self.output_dir if output_dir is None else output_dir,
            size_cap=self.size_cap if size_cap is None else size_cap,
        )
        config.validate()
        return config

    def validate(self):
        """
        Checks what the schema cannot express: matrix shapes against the dimensions and the size cap.

        :raises ConfigError: With the path of the offending field.
        """
        try:
            self.build_model()
            if self.initial.kind == 'explicit':
                self.initial_state()
        except ConfigError:
            raise
        except MetasimplexError as e:
            raise ConfigError(str(e), field='payoff') from e
        if self.analysis.embedded:
            try:
                check_size(self.dims.n, self.dims.c, self.size_cap)
            except MetasimplexError as e:
                raise ConfigError(f'{e}; disable analysis.wright and analysis.embedding_check or raise size_cap',
                                  field='size_cap') from e

    def _matrix(self, values: Optional[List[List[float]]], shape, name: str) -> np.ndarray:
        if values is None:
            raise ConfigError(f'Payoff kind "{self.payoff.kind}" requires {name}', field=f'payoff.{name}')
        if any(len(row) != len(values[0]) for row in values):
            raise ConfigError(f'Rows of {name} have different lengths', field=f'payoff.{name}')
        matrix = np.array(values, dtype=float)
        if matrix.shape != shape:
            raise ConfigError(f'{name} must have shape {shape[0]} x {shape[1]}, got {matrix.shape[0]} x '
                              f'{matrix.shape[1]}', field=f'payoff.{name}')
        return matrix

    def _graph(self) -> GraphWeights:
        n = self.dims.n
        if self.payoff.omega is not None:
            return GraphWeights(self._matrix(self.payoff.omega, (n, n), 'omega'))
        if self.payoff.graph == 'identity':
            return GraphWeights.identity(n)
        if self.payoff.graph == 'path':
            return GraphWeights.path_graph(n)
        if self.payoff.graph == 'complete':
            return GraphWeights(np.full((n, n), 1.0 / n))
        raise ConfigError(f'Payoff kind "{self.payoff.kind}" requires omega or graph', field='payoff.omega')

    def build_model(self) -> PayoffModel:
        n, c = self.dims.n, self.dims.c
        kind = self.payoff.kind
        if kind == 'sflow':
            return PayoffModel.sflow(self._graph(), c)
        if kind == 'egn':
            return PayoffModel.egn(self._graph(), GameMatrix(self._matrix(self.payoff.b, (c, c), 'b')))
        if kind == 'linear':
            return PayoffModel.linear(self._matrix(self.payoff.a_bar, (n * c, n * c), 'a_bar'), n, c)
        if kind == 'potential':
            a_bar = self._matrix(self.payoff.a_bar, (n * c, n * c), 'a_bar')
            try:
                return PayoffModel.potential_quadratic(a_bar, n, c)
            except MetasimplexError as e:
                raise ConfigError(str(e), field='payoff.a_bar') from e
        if kind == 'multigame':
            games = self.payoff.games
            if games is None or len(games) != n:
                raise ConfigError(f'Payoff kind "multigame" requires {n} games', field='payoff.games')
            return PayoffModel.multigame([GameMatrix(self._matrix(game, (c, c), f'games[{i}]'))
                                          for i, game in enumerate(games)])
        if kind == 'zero':
            return PayoffModel.zero(n, c)
        raise ConfigError(f'Unknown payoff kind "{kind}"', field='payoff.kind')

    def initial_state(self, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """The initial assignment state; random kinds draw from `rng` (seeded with :attr:`seed` if omitted)."""
        n, c = self.dims.n, self.dims.c
        rng = np.random.default_rng(self.seed) if rng is None else rng
        kind = self.initial.kind
        if kind == 'barycenter':
            return barycenter_W(n, c)
        if kind == 'random-interior':
            return random_assignment(rng, n, c, self.initial.concentration)
        if kind == 'random-near-vertex':
            return random_near_vertex(rng, n, c, self.initial.vertex_weight)
        if kind == 'explicit':
            if self.initial.state is None:
                raise ConfigError('Initial kind "explicit" requires state', field='initial.state')
            state = np.array(self.initial.state, dtype=float)
            if state.shape != (n, c):
                raise ConfigError(f'Initial state must have shape {n} x {c}, got {state.shape}',
                                  field='initial.state')
            try:
                return np.array(AssignmentState(state))
            except MetasimplexError as e:
                raise ConfigError(str(e), field='initial.state') from e
        raise ConfigError(f'Unknown initial kind "{kind}"', field='initial.kind')


def _load_schema() -> Dict[str, Any]:
    with open(SCHEMA_PATH, 'r', encoding='UTF-8') as file:
        return json.load(file)


def parse_config(document: Dict[str, Any]) -> ExperimentConfig:
    """
    Validates a parsed JSON document and converts it to an :class:`ExperimentConfig`.

    :raises ConfigError: If the document violates the schema or is inconsistent.
    """
    validator = jsonschema.Draft7Validator(_load_schema())
    error = jsonschema.exceptions.best_match(validator.iter_errors(document))
    if error is not None:
        path = '.'.join(str(part) for part in error.absolute_path)
        raise ConfigError(error.message, field=path)
    config = ExperimentConfig.from_dict(document)
    config.validate()
    return config


def resolve_config_path(name_or_path: str) -> str:
    """Returns `name_or_path` if it is a file, else the path of the bundled config of that name."""
    if os.path.isfile(name_or_path):
        return name_or_path
    bundled = os.path.join(CONFIG_DIR, f'{name_or_path}.json')
    if os.path.isfile(bundled):
        return bundled
    raise ConfigError(f'"{name_or_path}" is neither a file nor a bundled config '
                      f'(available: {", ".join(bundled_configs())})')


def load_config(name_or_path: str) -> ExperimentConfig:
    """Loads an experiment from a file or by the name of a bundled config."""
    path = resolve_config_path(name_or_path)
    try:
        with open(path, 'r', encoding='UTF-8') as file:
            document = json.load(file)
    except json.JSONDecodeError as e:
        raise ConfigError(f'{os.path.basename(path)}: line {e.lineno}, column {e.colno}: {e.msg}') from e
    return parse_config(document)


def bundled_configs() -> List[str]:
    """Names of the configs shipped with the package."""
    return sorted(os.path.splitext(os.path.basename(path))[0]
                  for path in glob.glob(os.path.join(CONFIG_DIR, '*.json')))
