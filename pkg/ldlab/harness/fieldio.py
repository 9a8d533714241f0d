"""
Field dumps of lattice states and their reassembly.

Every array is written as ``<name>.f64`` (little-endian float64, row-major)
with a sidecar naming its field kind and the lattice it lives on. A
``params.json`` next to the arrays holds the domain and model parameters the
lattices are rebuilt from.

Names inside one directory:

    u_re, u_im          order parameter on layer nodes, (N+1, nx, ny)
    A1, A2, A3          box potential on its staggered x-, y- and z-edges
    A0_1, A0_2, A0_3    the limit potential, field kinds A1..A3
    v1, v2              planar field stack on x-edge and y-edge midpoints
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..domain import BoxGrid, Domain, DomainSpec, LayerGrid, Shape, build_domain
from ..energy import ModelParams
from ..errors import ConfigError
from ..fields import MagneticPotential, OrderParameterStack, VectorField2DStack
from ..lib import dumps

logger = logging.getLogger(__name__)

PARAMS_FILE = 'params.json'
ROOT = '.'
POTENTIAL_KINDS = ('A1', 'A2', 'A3')
STAGGERING = {'A1': 'x-edges', 'A2': 'y-edges', 'A3': 'z-edges'}


def state_meta(p: ModelParams) -> Dict[str, Any]:
    spec = p.spec
    return {
        'shape': spec.shape.value, 'radius': spec.radius, 'width': spec.width, 'height': spec.height,
        'h_grid': spec.h_grid, 'L': spec.L, 'N': spec.N, 'R_box': spec.R_box, 'h_box': spec.h_box,
        'eps': p.eps, 'lam': p.lam, 'h_ex': p.h_ex, 'h0': p.h0,
    }


def params_from_meta(meta: Dict[str, Any]) -> ModelParams:
    spec = DomainSpec(shape=Shape(meta['shape']), radius=meta['radius'], width=meta['width'],
                      height=meta['height'], h_grid=meta['h_grid'], L=meta['L'], N=int(meta['N']),
                      R_box=meta['R_box'], h_box=meta['h_box'])
    return ModelParams(spec, meta['eps'], meta['lam'], meta['h_ex'], meta['h0'])


def layer_grid(grid: LayerGrid, staggering: str, **extra) -> Dict[str, Any]:
    return dict(grid.describe(), lattice='layer', staggering=staggering, **extra)


def box_grid(box: BoxGrid, staggering: str) -> Dict[str, Any]:
    return dict(box.describe(), lattice='box', staggering=staggering)


def _potential_names(name: str):
    return POTENTIAL_KINDS if name == 'A' else tuple(f"{name}_{k}" for k in (1, 2, 3))


@dataclass
class FieldSet:
    """Arrays bound for one dump directory, each with its field kind and grid"""
    params: Dict[str, Any]
    arrays: Dict[str, Tuple[np.ndarray, str, Dict[str, Any]]] = field(default_factory=dict)

    def add_order_parameter(self, u: OrderParameterStack) -> 'FieldSet':
        grid = layer_grid(u.grid, 'nodes')
        self.arrays['u_re'] = (u.u.real, 'u_re', grid)
        self.arrays['u_im'] = (u.u.imag, 'u_im', grid)
        return self

    def add_potential(self, A: MagneticPotential, name: str = 'A') -> 'FieldSet':
        components = (A.A1, A.A2, A.A3)
        for key, kind, array in zip(_potential_names(name), POTENTIAL_KINDS, components):
            self.arrays[key] = (array, kind, box_grid(A.box, STAGGERING[kind]))
        return self

    def add_stack(self, v: VectorField2DStack) -> 'FieldSet':
        extra = {'heights': v.heights, 'thickness': v.thickness}
        self.arrays['v1'] = (v.v1, 'v1', layer_grid(v.grid, 'x-edges', **extra))
        self.arrays['v2'] = (v.v2, 'v2', layer_grid(v.grid, 'y-edges', **extra))
        return self

    def write(self, directory) -> Path:
        directory = Path(directory)
        dumps.write_json(directory / PARAMS_FILE, self.params)
        for name, (array, kind, grid) in self.arrays.items():
            dumps.write_field(directory, name, array, kind, grid)
        logger.debug(f"Dumped {len(self.arrays)} fields to {directory}")
        return directory


def state_fields(p: ModelParams, u: OrderParameterStack, A: MagneticPotential) -> FieldSet:
    return FieldSet(state_meta(p)).add_order_parameter(u).add_potential(A)


@dataclass
class DumpedState:
    """A state read back from a dump directory; absent fields stay None."""
    params: ModelParams
    domain: Domain
    u: Optional[OrderParameterStack] = None
    A: Optional[MagneticPotential] = None
    A0: Optional[MagneticPotential] = None
    v: Optional[VectorField2DStack] = None

    @property
    def h0(self) -> float:
        """h0 as the recovery construction resolves it."""
        p = self.params
        return p.h0 if p.h0 is not None else p.h_ex / p.log_eps


def _present(directory: Path, name: str) -> bool:
    return (directory / f"{name}.f64").exists()


def _read(directory: Path, name: str, kind: str):
    array, sidecar = dumps.read_field(directory, name)
    if sidecar.get('field') != kind:
        raise ConfigError(f"{directory / name}.json declares field '{sidecar.get('field')}', expected '{kind}'",
                          field='input_dir')
    return array, sidecar


def _load_potential(directory: Path, name: str, box: BoxGrid, h_ex: float) -> Optional[MagneticPotential]:
    names = _potential_names(name)
    if not all(_present(directory, n) for n in names):
        return None
    parts = [_read(directory, n, kind)[0] for n, kind in zip(names, POTENTIAL_KINDS)]
    return MagneticPotential.from_components(box, *parts, h_ex=h_ex)


def load_state(directory) -> DumpedState:
    """Rebuild the lattices from ``params.json`` and attach every dumped field."""
    directory = Path(directory)
    if not (directory / PARAMS_FILE).exists():
        raise ConfigError(f"No field dumps under {directory}", field='input_dir')
    p = params_from_meta(dumps.read_json(directory / PARAMS_FILE))
    domain = build_domain(p.spec)
    state = DumpedState(p, domain)
    if _present(directory, 'u_re'):
        u_re, _ = _read(directory, 'u_re', 'u_re')
        u_im, _ = _read(directory, 'u_im', 'u_im')
        state.u = OrderParameterStack(domain.layer, u_re + 1j * u_im)
    state.A = _load_potential(directory, 'A', domain.box, p.h_ex)
    state.A0 = _load_potential(directory, 'A0', domain.box, state.h0)
    if _present(directory, 'v1'):
        v1, sidecar = _read(directory, 'v1', 'v1')
        v2, _ = _read(directory, 'v2', 'v2')
        grid = sidecar['grid']
        state.v = VectorField2DStack(domain.layer, v1, v2, np.asarray(grid['heights'], dtype=float),
                                     float(grid['thickness']))
    return state
