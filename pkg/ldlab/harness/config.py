"""
Experiment configuration: JSON decoded into frozen dataclasses with dacite.

JSON syntax errors carry line and column; schema errors carry the dotted
field path. Both surface as ConfigError.
"""
import enum
import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional

import dacite

from ..domain import DomainSpec, Shape
from ..energy import ModelParams
from ..errors import ConfigError
from ..minimize.descent import InitKind
from ..minimize.options import SolveOptions, StepRule

logger = logging.getLogger(__name__)


class Mode(str, enum.Enum):
    MINIMIZE_LD = 'minimize-ld'
    MINIMIZE_LIMIT = 'minimize-limit'
    RECOVER = 'recover'
    GAMMA_SWEEP = 'gamma-sweep'
    DIAGNOSE = 'diagnose'
    APPROX_CHECK = 'approx-check'


class FieldKind(str, enum.Enum):
    """Smooth planar fields v(x, y, z) used for recovery and approximation checks."""
    ZERO = 'zero'
    ROTATING = 'rotating'
    GRADIENT = 'gradient'
    JUMP = 'jump'


@dataclass(frozen=True)
class DomainConfig:
    shape: Shape = Shape.DISK
    radius: float = 1.0
    width: float = 1.0
    height: float = 1.0
    L: float = 1.0
    N: int = 2
    h_grid: Optional[float] = None
    h_box: float = 0.25
    R_box: Optional[float] = None


@dataclass(frozen=True)
class SchedulePoint:
    eps: float
    N: int


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 5000
    grad_tol: float = 1e-6
    step_rule: StepRule = StepRule.BARZILAI_BORWEIN
    inner_iters: int = 50
    limit_slices: int = 4
    coulomb: bool = True
    history_every: int = 1


@dataclass(frozen=True)
class ApproxConfig:
    target: float = 0.5
    max_radius: Optional[int] = 1
    slices: int = 8
    strip_widths: List[float] = field(default_factory=lambda: [0.2, 0.1, 0.05])


DEFAULT_EPS = (0.1, 0.07, 0.05, 0.035)
DEFAULT_COUPLING = (1.5, 2.2, 3.2, 4.7)


def default_schedule(L: float) -> List[SchedulePoint]:
    """Layer counts nearest the target s |ln eps| for each default eps.

    N never grows along the schedule, so s |ln eps| increases strictly even
    where L is too short to reach the targets.
    """
    points = []
    for eps, target in zip(DEFAULT_EPS, DEFAULT_COUPLING):
        N = max(1, int(round(L * abs(math.log(eps)) / target)))
        if points:
            N = min(N, points[-1].N)
        points.append(SchedulePoint(eps, N))
    return points


@dataclass(frozen=True)
class ExperimentConfig:
    mode: Mode
    domain: DomainConfig = field(default_factory=DomainConfig)
    eps: float = 0.1
    lam: float = 1.0
    h0: float = 0.0
    h_ex: Optional[float] = None
    schedule: Optional[List[SchedulePoint]] = None
    grid_points_per_eps: float = 3.0
    resolution_scale: float = 1.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    recovery_field: FieldKind = FieldKind.ROTATING
    init: str = InitKind.UNIFORM
    seed: int = 0
    output_dir: Optional[str] = None
    input_dir: Optional[str] = None
    point: Optional[int] = None
    dump_fields: bool = False
    threads: Optional[int] = None
    approx: ApproxConfig = field(default_factory=ApproxConfig)

    def points(self) -> List[SchedulePoint]:
        if self.mode == Mode.GAMMA_SWEEP:
            return list(self.schedule) if self.schedule is not None else default_schedule(self.domain.L)
        return [SchedulePoint(self.eps, self.domain.N)]

    def domain_spec(self, point: Optional[SchedulePoint] = None) -> DomainSpec:
        """DomainSpec for a schedule point; h_grid is h_box over an integer."""
        point = point or self.points()[0]
        d = self.domain
        target = d.h_grid if d.h_grid is not None else point.eps / self.grid_points_per_eps
        target /= self.resolution_scale
        h_grid = d.h_box / math.ceil(d.h_box / target - 1e-9)
        return DomainSpec(shape=d.shape, radius=d.radius, width=d.width, height=d.height, h_grid=h_grid,
                          L=d.L, N=point.N, R_box=d.R_box, h_box=d.h_box)

    def params(self, point: Optional[SchedulePoint] = None) -> ModelParams:
        """h_ex defaults to h0 |ln eps|."""
        point = point or self.points()[0]
        spec = self.domain_spec(point)
        h_ex = self.h_ex if self.h_ex is not None else self.h0 * abs(math.log(point.eps))
        return ModelParams(spec, point.eps, self.lam, h_ex, self.h0)

    def solve_options(self) -> SolveOptions:
        s = self.solver
        return SolveOptions(max_iters=s.max_iters, grad_tol=s.grad_tol, step_rule=s.step_rule,
                            inner_iters=s.inner_iters, limit_slices=s.limit_slices, coulomb=s.coulomb,
                            seed=self.seed, history_every=s.history_every)

    def with_overrides(self, **overrides) -> 'ExperimentConfig':
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def out_of_theory(point: SchedulePoint, L: float) -> bool:
    """s < eps: the anisotropic regime, outside the weak-coupling statements."""
    return L / point.N < point.eps


def validate(config: ExperimentConfig) -> ExperimentConfig:
    d = config.domain
    for name in ('radius', 'width', 'height', 'L', 'h_box'):
        if not getattr(d, name) > 0:
            raise ConfigError(f"domain.{name} must be positive", field=f"domain.{name}")
    if d.h_grid is not None and not d.h_grid > 0:
        raise ConfigError("domain.h_grid must be positive", field='domain.h_grid')
    if not config.resolution_scale > 0:
        raise ConfigError("resolution_scale must be positive", field='resolution_scale')
    if not config.grid_points_per_eps > 0:
        raise ConfigError("grid_points_per_eps must be positive", field='grid_points_per_eps')
    if config.init not in (InitKind.UNIFORM, InitKind.RANDOM, InitKind.ZERO):
        raise ConfigError(f"Unknown init '{config.init}'", field='init')
    points = config.points()
    for k, point in enumerate(points):
        where = f"schedule[{k}]" if config.mode == Mode.GAMMA_SWEEP else 'eps'
        if not 0 < point.eps < 1:
            raise ConfigError(f"eps must lie in (0, 1), got {point.eps}", field=where)
        if point.N < 1:
            raise ConfigError(f"N must be at least 1, got {point.N}", field=where)
    if config.mode == Mode.GAMMA_SWEEP:
        if not points:
            raise ConfigError("gamma-sweep needs a non-empty schedule", field='schedule')
        coupling = [d.L / p.N * abs(math.log(p.eps)) for p in points]
        for k in range(1, len(coupling)):
            if not coupling[k] > coupling[k - 1]:
                raise ConfigError(f"s |ln eps| must increase strictly along the schedule "
                                  f"({coupling[k - 1]:.4f} then {coupling[k]:.4f})", field=f"schedule[{k}]")
    if config.mode == Mode.DIAGNOSE and not config.input_dir:
        raise ConfigError("diagnose needs input_dir", field='input_dir')
    if config.point is not None and config.point < 0:
        raise ConfigError(f"point must be non-negative, got {config.point}", field='point')
    return config


def config_from_dict(data: dict) -> ExperimentConfig:
    try:
        config = dacite.from_dict(ExperimentConfig, data, config=dacite.Config(strict=True, cast=[enum.Enum, float]))
    except dacite.UnexpectedDataError as e:
        raise ConfigError(f"Unknown field(s): {', '.join(sorted(e.keys))}", field=','.join(sorted(e.keys)))
    except dacite.DaciteFieldError as e:
        raise ConfigError(str(e), field=e.field_path)
    except (dacite.DaciteError, ValueError) as e:
        raise ConfigError(str(e))
    return validate(config)


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a JSON experiment config; overrides with value None are ignored."""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON: {e.msg}", line=e.lineno, column=e.colno)
    if not isinstance(data, dict):
        raise ConfigError("Config must be a JSON object", line=1, column=1)
    extra = {k: v for k, v in overrides.items() if v is not None}
    data.update({k: v for k, v in extra.items() if k != 'mode'})
    if 'mode' in extra:
        data['mode'] = extra['mode'].value if isinstance(extra['mode'], Mode) else extra['mode']
    config = config_from_dict(data)
    logger.debug(f"Loaded {config.mode.value} config from {path}")
    return config
