"""
Ground-truth densities: the analytic standard normal models and a KDE-backed
reference density for the sample-reference workflow of the online test.
"""
import csv
import dataclasses
import functools
import logging
import typing

import numpy as np
from scipy import optimize, special

from levelset_clt import kde as kde_mod
from levelset_clt.errors import DimensionMismatchError, UnsupportedModelError
from levelset_clt.kernel import Kernel
from levelset_clt.util import make_rng

_log = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class LevelSetGeometry(object):
    """ Closed-form geometry of C(c) for the built-in models. """
    level: float
    coverage: float
    lebesgue_measure: float
    min_slope: float  # ρ₀, inf |f′| on the boundary
    radius: typing.Optional[float] = None  # radial models
    intervals: typing.Optional[typing.List[typing.Tuple[float, float]]] = None  # d = 1
    crossings: typing.Optional[np.ndarray] = None
    slopes: typing.Optional[np.ndarray] = None  # signed f′(z_i)


class DensityModel(object):
    """
    Abstract ground-truth density.

    Subclasses provide the density, its gradient, a sampler and the coverage map.
    Models are immutable; samplers receive an explicit seed on every call.
    """
    name = None
    dimension = None

    def density(self, x):
        """
        :param x: array of shape (..., d)
        :return: array of shape (...)
        """
        raise NotImplementedError()

    def gradient(self, x):
        raise NotImplementedError()

    def sample(self, n: int, seed) -> np.ndarray:
        raise NotImplementedError()

    @property
    def sup_f(self) -> float:
        raise NotImplementedError()

    def coverage(self, c: float) -> float:
        """ P{X ∈ C(c)} = ∫_{f ≥ c} f. """
        raise NotImplementedError()

    def bounding_box(self, c: float):
        """ Axis-aligned box (lo, hi) containing C(c). """
        raise NotImplementedError()

    def evaluate(self, x):
        return self.density(np.asarray(x, dtype=float))

    def __call__(self, x):
        return self.evaluate(x)

    @property
    def is_radial(self) -> bool:
        return False

    def check_level(self, c: float):
        """ Enforce the validity window c ∈ (0, sup f). """
        if not 0.0 < c < self.sup_f:
            raise ValueError(f'Level c={c!r} must lie strictly between 0 and sup f={self.sup_f!r}.')

    def level_from_coverage(self, alpha: float) -> float:
        """
        Level c with ∫_{f ≥ c} f = α, by monotone bisection on c.
        """
        _check_alpha(alpha)
        upper = self.sup_f * (1.0 - 1e-12)
        return optimize.bisect(lambda c: self.coverage(c) - alpha, 0.0, upper,
                               xtol=1e-15, maxiter=2000)


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f'Coverage alpha must lie in (0, 1). (Given: {alpha})')


class StandardNormalModel(DensityModel):
    """
    Standard normal density on R^d (d = 1, 2), optionally recentred.

    Its level sets are balls around `center` of radius r(c) = sqrt(-2 ln(c (2π)^{d/2})).
    In d = 1 the boundary consists of the two crossings center ± r(c).
    """

    def __init__(self, dimension: int, name: str = None, center=None):
        if dimension not in (1, 2):
            raise ValueError(f'Only dimensions 1 and 2 are supported. (Given: {dimension})')
        self.dimension = dimension
        self.name = name or f'gauss{dimension}d'
        self.center = np.zeros(dimension) if center is None else np.asarray(center, dtype=float)
        if self.center.shape != (dimension,):
            raise DimensionMismatchError(f'Center {center!r} does not have dimension {dimension}.')
        self._normalizer = (2.0 * np.pi) ** (-dimension / 2.0)

    def __repr__(self):
        return f'<{type(self).__name__}(name={self.name!r}, center={self.center.tolist()})>'

    @property
    def is_radial(self) -> bool:
        return self.dimension == 2

    @property
    def sup_f(self) -> float:
        return self._normalizer

    def density(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dimension:
            raise DimensionMismatchError(f'Expected points of dimension {self.dimension}, '
                                         f'got shape {x.shape}.')
        sq = np.sum(np.square(x - self.center), axis=-1)
        return self._normalizer * np.exp(-sq / 2.0)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return -(x - self.center) * self.density(x)[..., None]

    def sample(self, n: int, seed) -> np.ndarray:
        if n < 1:
            raise ValueError(f'Sample size must be at least 1. (Given: {n})')
        rng = make_rng(seed)
        return self.center + rng.standard_normal((int(n), self.dimension))

    def level_at_radius(self, r):
        """ f on the sphere of radius r around the center. """
        return self._normalizer * np.exp(-np.square(r) / 2.0)

    def radius_at(self, c):
        """
        r(c); 0 for c ≥ sup f and +inf for c ≤ 0.
        """
        c = np.asarray(c, dtype=float)
        with np.errstate(divide='ignore', invalid='ignore'):
            sq = -2.0 * np.log(np.where(c > 0.0, c, 1.0) / self._normalizer)
        r = np.sqrt(np.clip(sq, 0.0, None))
        r = np.where(c <= 0.0, np.inf, r)
        r = np.where(c >= self._normalizer, 0.0, r)
        return float(r) if r.ndim == 0 else r

    def slope_at_level(self, c: float) -> float:
        """ |f′| on the boundary of C(c), r(c)·c. """
        return self.radius_at(c) * c

    def perimeter(self, c: float) -> float:
        """ H^{d-1}(β): 2πr in d = 2, the crossing count in d = 1. """
        if self.dimension == 1:
            return 2.0
        return 2.0 * np.pi * self.radius_at(c)

    def crossings(self, c: float):
        """
        Sorted boundary points z_i and signed slopes f′(z_i) (d = 1 only).
        """
        if self.dimension != 1:
            raise UnsupportedModelError(f'{self.name} has a radial boundary, not crossings.')
        self.check_level(c)
        r = self.radius_at(c)
        z = self.center[0] + np.array([-r, r])
        slopes = np.array([r * c, -r * c])  # f′(z) = -(z - center) f(z)
        return z, slopes

    def coverage(self, c: float) -> float:
        if c <= 0.0:
            return 1.0
        if c >= self.sup_f:
            return 0.0
        r = self.radius_at(c)
        if self.dimension == 2:
            return float(1.0 - 2.0 * np.pi * c)
        return float(2.0 * special.ndtr(r) - 1.0)

    def level_from_coverage(self, alpha: float) -> float:
        _check_alpha(alpha)
        if self.dimension == 2:
            return (1.0 - alpha) / (2.0 * np.pi)
        return float(self.level_at_radius(special.ndtri((1.0 + alpha) / 2.0)))

    def lebesgue_measure(self, c: float) -> float:
        r = self.radius_at(c)
        return float(np.pi * r * r) if self.dimension == 2 else float(2.0 * r)

    def bounding_box(self, c: float):
        r = self.radius_at(c)
        return self.center - r, self.center + r

    def geometry(self, c: float) -> LevelSetGeometry:
        self.check_level(c)
        r = self.radius_at(c)
        common = dict(level=c, coverage=self.coverage(c), lebesgue_measure=self.lebesgue_measure(c),
                      min_slope=self.slope_at_level(c), radius=r)
        if self.dimension == 1:
            z, slopes = self.crossings(c)
            return LevelSetGeometry(intervals=[(float(z[0]), float(z[1]))], crossings=z, slopes=slopes,
                                    **common)
        return LevelSetGeometry(**common)


def make_gauss2d() -> StandardNormalModel:
    """ The bivariate standard normal, f(x) = exp(-|x|²/2) / (2π). """
    return StandardNormalModel(2, name='gauss2d')


def make_gauss1d() -> StandardNormalModel:
    """ The univariate standard normal. """
    return StandardNormalModel(1, name='gauss1d')


model_factory_map = {
    'gauss2d': make_gauss2d,
    'gauss1d': make_gauss1d,
}


def make_model(name: str) -> DensityModel:
    try:
        return model_factory_map[name]()
    except KeyError:
        raise ValueError(f'Unknown model "{name}". Choose from: {sorted(model_factory_map)}')


class KdeDensityModel(DensityModel):
    """
    A kernel density estimate g_m of a reference sample, treated as the truth.

    Sampling is the smoothed bootstrap: a uniformly drawn reference point plus
    kernel noise at the estimate's axis scale. Coverage integrals use midpoint
    quadrature on a grid of cell h^{1/d}/4 over the support box.
    """
    name = 'kde-reference'

    def __init__(self, points, kernel: Kernel, h: float = None, cell: float = None):
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if h is None:
            h = kde_mod.bandwidth_schedule(len(points))
        self.field = kde_mod.build_kde(points, h, kernel)
        self.dimension = self.field.dimension
        self.cell = cell or self.field.axis_scale / 4.0

    def __repr__(self):
        return f'<{type(self).__name__}(m={self.field.n}, h={self.field.h:.4g})>'

    def density(self, x):
        return self.field.evaluate(x)

    def gradient(self, x):
        raise UnsupportedModelError('A kernel density reference has no usable gradient.')

    @functools.cached_property
    def _grid(self):
        lo, hi = self.field.support_box()
        axes = [np.arange(a + self.cell / 2.0, b, self.cell) for a, b in zip(lo, hi)]
        mesh = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, self.dimension)
        values = self.field.evaluate(mesh)
        _log.debug(f'Reference grid: {len(values)} cells of side {self.cell:.4g}')
        return np.sort(values)[::-1], self.cell ** self.dimension

    @property
    def sup_f(self) -> float:
        values, _ = self._grid
        return float(max(values[0], np.max(self.field.evaluate(self.field.points))))

    def coverage(self, c: float) -> float:
        values, volume = self._grid
        return float(np.sum(values[values >= c]) * volume)

    def level_from_coverage(self, alpha: float) -> float:
        _check_alpha(alpha)
        values, volume = self._grid
        return level_for_mass(values, volume, alpha)

    def sample(self, n: int, seed) -> np.ndarray:
        rng = make_rng(seed)
        idx = rng.integers(0, self.field.n, size=int(n))
        noise = self.field.kernel.sample(int(n), rng) * self.field.axis_scale
        return self.field.points[idx] + noise

    def bounding_box(self, c: float = None):
        return self.field.support_box()


def level_from_coverage(m: DensityModel, alpha: float) -> float:
    return m.level_from_coverage(alpha)


def sample(m: DensityModel, n: int, seed) -> np.ndarray:
    """ n i.i.d. points from m; identical for identical seeds. """
    return m.sample(n, seed)


def monte_carlo_coverage(m: DensityModel, c: float, n: int, seed):
    """
    Fraction of an i.i.d. sample of size n with f(X) ≥ c, and its binomial standard error.
    """
    points = m.sample(n, seed)
    hits = m.evaluate(points) >= c
    frac = float(np.mean(hits))
    return frac, float(np.sqrt(max(frac * (1.0 - frac), 1e-300) / n))


def level_for_mass(values, volume: float, alpha: float) -> float:
    """
    Largest grid level c with Σ_{v ≥ c} v·volume ≥ α.

    :param values: Density values at the cell midpoints, sorted descending. The
        mass above c is a step function of c, so the cumulative sums are searched
        by bisection.
    """
    cumulative = np.cumsum(values) * volume
    if not len(values) or alpha >= cumulative[-1]:
        total = cumulative[-1] if len(values) else 0.0
        raise ValueError(f'Coverage {alpha} is not below the grid mass {total:.6f}.')
    return float(values[int(np.searchsorted(cumulative, alpha))])


def load_points(fpath: str, dimension: int = None) -> np.ndarray:
    """
    Read one point per row from a CSV file, with an optional header row.

    :raises DimensionMismatchError: if the column count differs from `dimension`.
    :raises ValueError: on ragged rows, non-numeric values or an empty file.
    """
    with open(fpath, 'rt', newline='') as rf:
        rows = [row for row in csv.reader(rf) if row and any(cell.strip() for cell in row)]
    if rows:
        try:
            [float(cell) for cell in rows[0]]
        except ValueError:
            rows = rows[1:]  # Header
    if not rows:
        raise ValueError(f'No data points in "{fpath}".')
    widths = {len(row) for row in rows}
    if len(widths) != 1:
        raise ValueError(f'Rows of "{fpath}" have differing column counts {sorted(widths)}.')
    try:
        points = np.asarray([[float(cell) for cell in row] for row in rows], dtype=float)
    except ValueError as err:
        raise ValueError(f'Non-numeric value in "{fpath}": {err}')
    if dimension is not None and points.shape[1] != dimension:
        raise DimensionMismatchError(f'"{fpath}" has {points.shape[1]} columns; the model has '
                                     f'dimension {dimension}.')
    return points
