"""
Weighted symmetric-difference functionals

    d_G(C_n(c), C(c)) = ∫ |I{f_n ≥ c} - I{f ≥ c}| g dλ

between the plug-in level set of an estimate and the true level set.

Three integrators are available. The radial and crossing integrators scan lines
through the band E_n = {|f - c| ≤ w} around the true boundary and integrate the
weight exactly between the located crossings; the grid integrator is a plain
midpoint rule over a box and is the fallback for everything else.

A "field" is anything with `evaluate(x)` on arrays of shape (..., d); kernel
density estimates additionally carry n, h and their support box.
"""
import dataclasses
import logging
import math
import re
import typing
from enum import Enum

import numpy as np
from scipy import integrate as sp_integrate

from levelset_clt import quadrature
from levelset_clt.config import get_config
from levelset_clt.densities import DensityModel
from levelset_clt.errors import DimensionMismatchError, IntegratorError, UnsupportedModelError
from levelset_clt.kde import KdeField, KdeMode

_log = logging.getLogger(__name__)

SEGMENT_ORDER = 16
MAX_SCAN_POINTS = 4096
MIN_SCAN_POINTS = 16
BISECTION_STEPS = 48
GRID_CHUNK = 1 << 18  # points per slab


class WeightTag(Enum):
    LEBESGUE = 'lebesgue'
    EXCESS_POWER = 'excess_power'
    DENSITY = 'density'


_WEIGHT_PATTERN = re.compile(r'^excess_power\s*[(:=]\s*([0-9.eE+-]+)\s*\)?$')


@dataclasses.dataclass(frozen=True)
class WeightKind(object):
    """
    Weight g of the measure G: 1 (lebesgue), |f - c|^p (excess_power) or f (density).
    """
    tag: WeightTag
    power: float = 0.0

    def __post_init__(self):
        if self.power < 0:
            raise ValueError(f'Weight power must be nonnegative. (Given: {self.power})')
        if self.tag is not WeightTag.EXCESS_POWER and self.power:
            raise ValueError(f'Only excess_power weights take a power. (Given: {self.tag.value})')

    @classmethod
    def lebesgue(cls):
        return cls(WeightTag.LEBESGUE)

    @classmethod
    def excess_power(cls, p: float = 1.0):
        return cls(WeightTag.EXCESS_POWER, float(p))

    @classmethod
    def density(cls):
        return cls(WeightTag.DENSITY)

    @classmethod
    def parse(cls, text: str):
        """
        'lebesgue', 'density', 'excess' (p = 1) or 'excess_power(p)'.
        """
        text = text.strip().lower()
        if text == 'lebesgue':
            return cls.lebesgue()
        if text == 'density':
            return cls.density()
        if text in ('excess', 'excess_power'):
            return cls.excess_power(1.0)
        match = _WEIGHT_PATTERN.match(text)
        if match:
            return cls.excess_power(float(match.group(1)))
        raise ValueError(f'Unknown weight "{text}". Use lebesgue, density, excess '
                         f'or excess_power(p).')

    @property
    def inv_gamma(self) -> float:
        """ 1/γ_g: p for excess_power(p), 0 otherwise. """
        return self.power if self.tag is WeightTag.EXCESS_POWER else 0.0

    def __call__(self, f_values, c):
        """ g at points where the true density takes the values `f_values`. """
        f_values = np.asarray(f_values, dtype=float)
        if self.tag is WeightTag.LEBESGUE:
            return np.ones_like(f_values)
        if self.tag is WeightTag.DENSITY:
            return f_values
        return np.power(np.abs(f_values - c), self.power)

    def __str__(self):
        if self.tag is WeightTag.EXCESS_POWER:
            return f'excess_power({self.power:g})'
        return self.tag.value


@dataclasses.dataclass(frozen=True)
class SymmDiffResult(object):
    value: float
    weight: WeightKind
    c: float
    integrator: str
    diagnostics: dict = dataclasses.field(default_factory=dict)

    @property
    def flagged(self) -> bool:
        """ True if the integrator fell back or left band violations behind. """
        return bool(self.diagnostics.get('failover') or self.diagnostics.get('edge_violations'))


def band_halfwidth(n: int, h: float, sigma: float = None) -> float:
    """ w = ς sqrt(ln n) / sqrt(n h), half-width of E_n in density units. """
    if sigma is None:
        sigma = get_config()['band_sigma']
    if n < 2 or not h > 0:
        raise ValueError(f'Band needs n >= 2 and h > 0. (Given: n={n}, h={h})')
    return sigma * math.sqrt(math.log(n)) / math.sqrt(n * h)


def _resolve_band(field, band, sigma):
    if band is not None:
        return float(band)
    n, h = getattr(field, 'n', None), getattr(field, 'h', None)
    if n is None or h is None:
        raise ValueError('An explicit band is required for fields without n and h.')
    return band_halfwidth(n, h, sigma)


def _field_dimension(field, default):
    return getattr(field, 'dimension', default)


def _check_measure_bound(value, field, c, weight):
    """ λ(C_n Δ C) ≤ λ(C_n) + λ(C) ≤ 2/c for a fixed-n estimate. """
    if weight.tag is not WeightTag.LEBESGUE:
        return
    if not isinstance(field, KdeField) or field.mode is not KdeMode.FIXED_N:
        return
    bound = 2.0 / c
    if value > bound * (1.0 + 1e-9):
        raise IntegratorError(f'Lebesgue symmetric difference {value:.6g} exceeds the bound 2/c = {bound:.6g}.')


class SymmDiffIntegrator(object):
    """ Abstract d_G integrator """
    tag = None

    def __init__(self, band: float = None, band_sigma: float = None):
        self.band = band
        self.band_sigma = band_sigma

    def integrate(self, field, model: DensityModel, c: float, weight: WeightKind) -> SymmDiffResult:
        """
        Evaluate d_G(C_n(c), C(c)) for the level sets of `field` and `model`.

        :rtype: SymmDiffResult
        """
        raise NotImplementedError()


class LineScanIntegrator(SymmDiffIntegrator):
    """
    Integrates along lines leaving the center of a radially symmetric model.

    On every line the parameter t runs over the band [r(c + w), r(c - w)] (clipped
    to the estimate's reach). f_n - c is scanned with step h^{1/d}/4, sign changes
    are refined by bisection and the weight is integrated exactly, with a 16-node
    rule, over the pieces where the two indicators disagree.
    """
    jacobian_power = 0

    def __init__(self, band=None, band_sigma=None, step=None, allow_failover=True,
                 multi_crossing_tolerance=None, check_outside=None):
        super(LineScanIntegrator, self).__init__(band=band, band_sigma=band_sigma)
        self.step = step
        self.allow_failover = allow_failover
        if multi_crossing_tolerance is None:
            multi_crossing_tolerance = get_config()['multi_crossing_tolerance']
        self.multi_crossing_tolerance = multi_crossing_tolerance
        self.check_outside = check_outside

    def directions(self, dimension):
        raise NotImplementedError()

    def line_measure(self, count):
        raise NotImplementedError()

    def _check_inputs(self, field, model):
        if not hasattr(model, 'radius_at'):
            raise UnsupportedModelError(f'{self.tag} integration needs a model with a known '
                                        f'boundary radius r(c); {model!r} has none.')

    def integrate(self, field, model, c, weight):
        self._check_inputs(field, model)
        model.check_level(c)
        w = _resolve_band(field, self.band, self.band_sigma)
        directions = self.directions(model.dimension)
        scan = self._scan(field, model, c, weight, directions, w)
        if scan['edge_violations']:
            _log.debug(f'{scan["edge_violations"]} lines without a sign change across the band; '
                       f'widening w from {w:.4g} to {2 * w:.4g}.')
            scan = self._scan(field, model, c, weight, directions, 2.0 * w)
            scan['widened'] = True
            if scan['edge_violations']:
                _log.warning(f'{scan["edge_violations"]} of {len(directions)} lines still have no sign '
                             f'change across the widened band at c={c:.4g}.')
        counts = scan.pop('crossing_counts')
        multiple = int(np.sum(counts > 1))
        diagnostics = dict(band=scan['band'], inner=scan['inner'], outer=scan['outer'],
                           lines=len(directions), scan_points=scan['scan_points'],
                           zero_crossings=int(np.sum(counts == 0)), multiple_crossings=multiple,
                           edge_violations=scan['edge_violations'], widened=scan.get('widened', False))
        if multiple > self.multi_crossing_tolerance * len(directions) and self.allow_failover:
            _log.warning(f'{multiple} of {len(directions)} lines cross the level several times; '
                         f'falling back to grid integration.')
            fallback = GridIntegrator(band=scan['band']).integrate(field, model, c, weight)
            diagnostics.update(fallback.diagnostics)
            diagnostics['failover'] = 'grid'
            return SymmDiffResult(value=fallback.value, weight=weight, c=c, integrator=self.tag,
                                  diagnostics=diagnostics)
        if self.check_outside or (self.check_outside is None and _log.isEnabledFor(logging.DEBUG)):
            diagnostics['outside_band_violations'] = outside_band_violations(field, model, c, scan['band'])
        _check_measure_bound(scan['value'], field, c, weight)
        return SymmDiffResult(value=scan['value'], weight=weight, c=c, integrator=self.tag,
                              diagnostics=diagnostics)

    def _band_edges(self, field, model, c, w):
        origin = model.center
        r0 = float(model.radius_at(c))
        inner = float(model.radius_at(c + w))
        outer = float(model.radius_at(c - w))
        reach = field.reach(origin) if hasattr(field, 'reach') else None
        scale = getattr(field, 'axis_scale', None)
        if reach is not None:
            outer = min(outer, max(reach * (1.0 + 1e-9), r0))
        elif not np.isfinite(outer):
            outer = r0 + 6.0 * max(w, scale or 0.0)
        return inner, r0, outer

    def _scan(self, field, model, c, weight, directions, w):
        origin = model.center
        inner, r0, outer = self._band_edges(field, model, c, w)
        scale = getattr(field, 'axis_scale', None)
        step = self.step or (scale / 4.0 if scale else (outer - inner) / 1024.0)
        count = int(min(MAX_SCAN_POINTS, max(MIN_SCAN_POINTS, math.ceil((outer - inner) / step) + 1)))
        t = np.linspace(inner, outer, count)
        lines = len(directions)
        inside = field.evaluate(origin + t[None, :, None] * directions[:, None, :]) >= c
        # A band edge is violated if the estimate is outside at the inner edge or
        # inside at the outer edge (the inner edge at the center is not a band edge).
        violated = inside[:, -1].copy()
        if inner > 0.0:
            violated |= ~inside[:, 0]

        change = inside[:, 1:] != inside[:, :-1]
        crossing_counts = change.sum(axis=1)
        line_idx, k = np.nonzero(change)
        crossings = self._refine(field, origin, directions[line_idx], t[k], t[k + 1],
                                 inside[line_idx, k], c)

        per_line = self._integrate_segments(model, c, weight, origin, directions, inside[:, 0],
                                            inner, r0, outer, line_idx, crossings)
        value = float(np.sum(per_line) * self.line_measure(lines))
        return dict(value=value, band=w, inner=inner, outer=outer, scan_points=count,
                    crossing_counts=crossing_counts, edge_violations=int(np.sum(violated)))

    @staticmethod
    def _refine(field, origin, directions, lo, hi, lo_inside, c):
        """ Vectorised bisection of the indicator jumps on [lo, hi]. """
        lo = lo.copy()
        hi = hi.copy()
        for _ in range(BISECTION_STEPS):
            if not len(lo):
                break
            mid = (lo + hi) / 2.0
            mid_inside = field.evaluate(origin + mid[:, None] * directions) >= c
            same = mid_inside == lo_inside
            lo = np.where(same, mid, lo)
            hi = np.where(same, hi, mid)
        return (lo + hi) / 2.0

    def _integrate_segments(self, model, c, weight, origin, directions, inside_at_inner,
                            inner, r0, outer, line_idx, crossings):
        lines = len(directions)
        every = np.arange(lines)
        bp_line = np.concatenate([every, every, every, line_idx])
        bp_t = np.concatenate([np.full(lines, inner), np.full(lines, outer),
                               np.full(lines, min(max(r0, inner), outer)), crossings])
        bp_toggle = np.concatenate([np.zeros(3 * lines, dtype=np.intp),
                                    np.ones(len(crossings), dtype=np.intp)])
        order = np.lexsort((bp_t, bp_line))
        bp_line, bp_t, bp_toggle = bp_line[order], bp_t[order], bp_toggle[order]
        toggled = np.cumsum(bp_toggle)
        first = np.searchsorted(bp_line, every)
        toggled = toggled - (toggled[first] - bp_toggle[first])[bp_line]

        a, b = bp_t[:-1], bp_t[1:]
        seg_line = bp_line[:-1]
        estimate_in = inside_at_inner[seg_line] ^ (toggled[:-1] % 2 == 1)
        truth_in = (a + b) / 2.0 <= r0
        active = (bp_line[1:] == seg_line) & (b > a) & (estimate_in != truth_in)
        if not np.any(active):
            return np.zeros(lines)
        tt, wt = quadrature.gauss_legendre(SEGMENT_ORDER, a[active], b[active])
        x = origin + tt[..., None] * directions[seg_line[active]][:, None, :]
        integrand = weight(model.evaluate(x), c) * np.power(tt, self.jacobian_power)
        seg_values = np.sum(integrand * wt, axis=-1)
        return np.bincount(seg_line[active], weights=seg_values, minlength=lines)


class RadialIntegrator(LineScanIntegrator):
    """ Rays at `angles` equally spaced directions around a radial d = 2 model. """
    tag = 'radial'
    jacobian_power = 1

    def __init__(self, angles: int = None, **kwargs):
        super(RadialIntegrator, self).__init__(**kwargs)
        self.angles = int(angles or get_config()['angles'])
        if self.angles < 1:
            raise ValueError(f'At least one ray is needed. (Given: {angles})')

    def _check_inputs(self, field, model):
        if not model.is_radial:
            raise UnsupportedModelError(f'Radial integration needs a radially symmetric model; '
                                        f'got {model!r}.')
        if _field_dimension(field, 2) != 2:
            raise DimensionMismatchError('Radial integration needs a 2-dimensional estimate.')
        super(RadialIntegrator, self)._check_inputs(field, model)

    def directions(self, dimension):
        theta = 2.0 * np.pi * np.arange(self.angles) / self.angles
        return np.column_stack([np.cos(theta), np.sin(theta)])

    def line_measure(self, count):
        return 2.0 * np.pi / count


class CrossingIntegrator(LineScanIntegrator):
    """ The two half-lines through the crossings of a symmetric d = 1 model. """
    tag = '1d'

    def _check_inputs(self, field, model):
        if model.dimension != 1:
            raise UnsupportedModelError(f'Crossing integration needs a 1-dimensional model; got {model!r}.')
        if _field_dimension(field, 1) != 1:
            raise DimensionMismatchError('Crossing integration needs a 1-dimensional estimate.')
        super(CrossingIntegrator, self)._check_inputs(field, model)

    def directions(self, dimension):
        return np.array([[-1.0], [1.0]])

    def line_measure(self, count):
        return 1.0


class GridIntegrator(SymmDiffIntegrator):
    """
    Midpoint rule over a box of cubic cells; ties f_n = c count as inside.

    The box is the union of the true level set's bounding box and the estimate's
    support box when both are known, otherwise the ball of radius
    r(c) + 6·max(w, h^{1/d}) around the model center.
    """
    tag = 'grid'

    def __init__(self, cell: float = None, box=None, band=None, band_sigma=None):
        super(GridIntegrator, self).__init__(band=band, band_sigma=band_sigma)
        if cell is not None and not cell > 0:
            raise ValueError(f'Grid cell must be positive. (Given: {cell})')
        self.cell = cell
        self.box = box

    def _resolve_cell(self, field):
        if self.cell:
            return float(self.cell)
        scale = getattr(field, 'axis_scale', None)
        if not scale:
            raise ValueError('A grid cell is required for fields without a bandwidth.')
        return scale / 4.0

    def _resolve_band(self, field):
        try:
            return _resolve_band(field, self.band, self.band_sigma)
        except ValueError:
            return None

    def resolve_box(self, field, model, c):
        if self.box is not None:
            lo, hi = self.box
            return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        if hasattr(field, 'support_box'):
            lo, hi = model.bounding_box(c)
            field_box = field.support_box()
            if field_box is not None:
                lo, hi = np.minimum(lo, field_box[0]), np.maximum(hi, field_box[1])
            return lo, hi
        if hasattr(model, 'radius_at'):
            w = self._resolve_band(field) or 0.0
            radius = model.radius_at(c) + 6.0 * max(w, getattr(field, 'axis_scale', 0.0) or 0.0)
            return model.center - radius, model.center + radius
        lo, hi = model.bounding_box(c)
        return lo, hi

    def _check_cell(self, model, c, cell, w):
        """
        An explicit cell wider than the narrower radial side of the band is an error;
        the default cell is refined to half that side instead.
        """
        if w is None or not hasattr(model, 'radius_at'):
            return cell
        r0 = model.radius_at(c)
        narrow = min(r0 - model.radius_at(c + w), model.radius_at(c - w) - r0)
        if cell <= narrow:
            return cell
        if self.cell:
            raise ValueError(f'Grid cell {cell:.4g} is coarser than the band around the boundary '
                             f'({narrow:.4g}).')
        _log.debug(f'Refining the default cell {cell:.4g} to {narrow / 2.0:.4g} to resolve the band.')
        return narrow / 2.0

    def integrate(self, field, model, c, weight):
        model.check_level(c)
        dimension = model.dimension
        if _field_dimension(field, dimension) != dimension:
            raise DimensionMismatchError(f'Estimate and model dimensions differ '
                                         f'({_field_dimension(field, dimension)} vs {dimension}).')
        cell = self._check_cell(model, c, self._resolve_cell(field), self._resolve_band(field))
        lo, hi = self.resolve_box(field, model, c)
        total, cells = 0.0, 0
        for points in _grid_slabs(lo, hi, cell):
            f_true = model.evaluate(points)
            mismatch = (field.evaluate(points) >= c) != (f_true >= c)
            total += float(np.sum(weight(f_true[mismatch], c)))
            cells += len(points)
        value = total * cell ** dimension
        _check_measure_bound(value, field, c, weight)
        diagnostics = dict(cell=cell, cells=cells, box=[np.asarray(lo).tolist(), np.asarray(hi).tolist()])
        return SymmDiffResult(value=value, weight=weight, c=c, integrator=self.tag, diagnostics=diagnostics)


integrator_cls_map = dict(radial=RadialIntegrator, grid=GridIntegrator)
integrator_cls_map['1d'] = CrossingIntegrator


def default_integrator(model: DensityModel, **kwargs) -> SymmDiffIntegrator:
    """ Radial for radial d = 2 models, crossings in d = 1, grid otherwise. """
    if getattr(model, 'is_radial', False):
        return RadialIntegrator(**kwargs)
    if model.dimension == 1 and hasattr(model, 'radius_at'):
        kwargs.pop('angles', None)
        return CrossingIntegrator(**kwargs)
    return GridIntegrator(band=kwargs.get('band'), band_sigma=kwargs.get('band_sigma'))


def _grid_axes(lo, hi, cell):
    return [np.arange(a + cell / 2.0, b, cell) for a, b in zip(np.atleast_1d(lo), np.atleast_1d(hi))]


def _grid_slabs(lo, hi, cell):
    """ Cell midpoints of the box, yielded in slabs along the first axis. """
    axes = _grid_axes(lo, hi, cell)
    rest = axes[1:]
    per_row = int(np.prod([len(a) for a in rest])) if rest else 1
    rows = max(1, GRID_CHUNK // max(per_row, 1))
    for start in range(0, len(axes[0]), rows):
        mesh = np.meshgrid(axes[0][start:start + rows], *rest, indexing='ij')
        yield np.stack(mesh, axis=-1).reshape(-1, len(axes))


def outside_band_violations(field, model, c, w, cell=None) -> int:
    """
    Number of cells of a coarse grid, outside the band |f - c| ≤ w, on which the
    two indicators disagree.
    """
    scale = getattr(field, 'axis_scale', None) or 0.05
    cell = cell or 4.0 * scale
    lo, hi = GridIntegrator(cell=cell, band=w).resolve_box(field, model, c)
    violations = 0
    for points in _grid_slabs(lo, hi, cell):
        f_true = model.evaluate(points)
        outside = np.abs(f_true - c) > w
        mismatch = (field.evaluate(points) >= c) != (f_true >= c)
        violations += int(np.sum(outside & mismatch))
    if violations:
        _log.warning(f'{violations} coarse cells outside the band disagree at c={c:.4g}.')
    return violations


def symmdiff_radial(field, model, c: float, weight: WeightKind = None, angles: int = None,
                    **kwargs) -> SymmDiffResult:
    weight = weight or WeightKind.lebesgue()
    return RadialIntegrator(angles=angles, **kwargs).integrate(field, model, c, weight)


def symmdiff_1d(field, model, c: float, weight: WeightKind = None, **kwargs) -> SymmDiffResult:
    weight = weight or WeightKind.lebesgue()
    return CrossingIntegrator(**kwargs).integrate(field, model, c, weight)


def symmdiff_grid(field, truth, c: float, weight: WeightKind = None, cell: float = None,
                  **kwargs) -> SymmDiffResult:
    weight = weight or WeightKind.lebesgue()
    return GridIntegrator(cell=cell, **kwargs).integrate(field, truth, c, weight)


def symmdiff(field, model, c: float, weight: WeightKind = None, **kwargs) -> SymmDiffResult:
    """ d_G with the integrator matching the model's geometry. """
    weight = weight or WeightKind.lebesgue()
    return default_integrator(model, **kwargs).integrate(field, model, c, weight)


def lp_identity_check(field, truth, p: float, levels: int = 512, cell: float = None,
                      tail_level: float = 1e-12) -> typing.Tuple[float, float]:
    """
    Both sides of ∫_0^∞ d_{H_{p-1}}(C_n(c), C(c)) dc = (1/p) ∫ |f_n - f|^p.

    The left side is a trapezoid rule over `levels` + 1 equispaced levels in
    [0, max(sup f_n, sup f)] of grid symmetric differences with weight |f - c|^{p-1};
    the right side a midpoint rule on the same grid. The grid covers the estimate's
    support and the true density down to tail_level · sup f.

    :return: (lhs, rhs)
    """
    if p < 1:
        raise ValueError(f'The identity needs p >= 1. (Given: {p})')
    if levels < 1:
        raise ValueError(f'At least one level interval is needed. (Given: {levels})')
    scale = getattr(field, 'axis_scale', None)
    cell = cell or (scale / 4.0 if scale else None)
    if not cell:
        raise ValueError('A grid cell is required for fields without a bandwidth.')
    lo, hi = truth.bounding_box(tail_level * truth.sup_f)
    field_box = field.support_box() if hasattr(field, 'support_box') else None
    if field_box is not None:
        lo, hi = np.minimum(lo, field_box[0]), np.maximum(hi, field_box[1])
    points = np.concatenate(list(_grid_slabs(lo, hi, cell)))
    f_est = field.evaluate(points)
    f_true = truth.evaluate(points)
    volume = cell ** truth.dimension
    rhs = float(np.sum(np.power(np.abs(f_est - f_true), p)) / p * volume)
    top = max(float(np.max(f_est)), float(np.max(f_true)), truth.sup_f)
    grid_levels = top * np.arange(levels + 1) / levels
    weight = WeightKind.excess_power(p - 1.0)
    profile = np.empty(levels + 1)
    for idx, c in enumerate(grid_levels):
        mismatch = (f_est >= c) != (f_true >= c)
        profile[idx] = np.sum(weight(f_true[mismatch], c)) * volume
    lhs = float(sp_integrate.trapezoid(profile, grid_levels))
    _log.debug(f'L{p:g} identity: lhs={lhs:.6g}, rhs={rhs:.6g} over {len(points)} cells')
    return lhs, rhs


class LevelShiftedField(object):
    """
    f_n + (c - c_n): its level set at c is C_n(c_n). Every other attribute is the
    wrapped estimate's.
    """

    def __init__(self, field, estimate_level: float, level: float):
        self.field = field
        self.shift = level - estimate_level

    def __getattr__(self, name):
        if name == 'field':
            raise AttributeError(name)
        return getattr(self.field, name)

    def evaluate(self, x):
        return self.field.evaluate(x) + self.shift

    def __call__(self, x):
        return self.evaluate(x)
