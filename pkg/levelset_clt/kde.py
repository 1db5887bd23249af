"""
Kernel density estimates in the volume-bandwidth convention:

    f_n(x) = 1/(n h) · Σ K((x - X_i) / h^{1/d})

h is a volume bandwidth: the per-axis kernel scale is h^{1/d}. The Poissonized
twin π_n sums over the first N ~ Poisson(n) points of an i.i.d. stream and keeps
the n·h denominator; π_n ≡ 0 when N = 0.
"""
import dataclasses
import logging
import typing
from enum import Enum

import numpy as np
from scipy import spatial

from levelset_clt.errors import DimensionMismatchError
from levelset_clt.kernel import Kernel, KernelKind
from levelset_clt.util import make_rng

_log = logging.getLogger(__name__)

QUERY_CHUNK = 65536
RATE_WARNING_THRESHOLD = 10.0  # n·h / ln n


class KdeMode(Enum):
    FIXED_N = 'fixed'
    POISSONIZED = 'poisson'


@dataclasses.dataclass(frozen=True, eq=False)
class KdeField(object):
    """
    An evaluable kernel density estimate. Immutable; evaluation is thread safe.

    `points` holds the N points actually summed over, `n` the nominal sample size
    used in the denominator.
    """
    points: np.ndarray
    h: float
    kernel: Kernel
    mode: KdeMode
    n: int
    tree: typing.Optional[spatial.cKDTree] = dataclasses.field(default=None, repr=False)

    @property
    def dimension(self) -> int:
        return self.kernel.dimension

    @property
    def count(self) -> int:
        """ N, the number of points in the sum. """
        return len(self.points)

    @property
    def axis_scale(self) -> float:
        return self.h ** (1.0 / self.dimension)

    @property
    def support_radius(self) -> float:
        """ Radius around x outside of which data points do not contribute. """
        return self.kernel.support_radius * self.axis_scale

    def evaluate(self, x):
        """
        f_n at x of shape (..., d). Exact: sums K over the data points inside the
        kernel support around each query point.
        """
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dimension:
            raise DimensionMismatchError(f'Query points have dimension {x.shape[-1]}, '
                                         f'the estimate has {self.dimension}.')
        flat = x.reshape(-1, self.dimension)
        if self.tree is None:
            return np.zeros(x.shape[:-1])
        out = np.empty(len(flat))
        for start in range(0, len(flat), QUERY_CHUNK):
            chunk = flat[start:start + QUERY_CHUNK]
            out[start:start + len(chunk)] = self._kernel_sum(chunk)
        return (out / (self.n * self.h)).reshape(x.shape[:-1])

    def __call__(self, x):
        return self.evaluate(x)

    def _kernel_sum(self, chunk):
        radius = self.support_radius
        if self.kernel.kind is KernelKind.BOX_BALL:
            counts = self.tree.query_ball_point(chunk, r=radius, return_length=True)
            return np.asarray(counts, dtype=float) * self.kernel.sup
        neighbours = self.tree.query_ball_point(chunk, r=radius)
        lengths = np.fromiter((len(nb) for nb in neighbours), dtype=np.intp, count=len(chunk))
        if not lengths.sum():
            return np.zeros(len(chunk))
        query_idx = np.repeat(np.arange(len(chunk)), lengths)
        data_idx = np.concatenate([np.asarray(nb, dtype=np.intp) for nb in neighbours if nb])
        scaled = (chunk[query_idx] - self.points[data_idx]) / self.axis_scale
        return np.bincount(query_idx, weights=self.kernel(scaled), minlength=len(chunk))

    def reach(self, origin=None) -> float:
        """ Largest distance from `origin` at which f_n can be positive. """
        if not self.count:
            return 0.0
        origin = np.zeros(self.dimension) if origin is None else np.asarray(origin, dtype=float)
        return float(np.max(np.linalg.norm(self.points - origin, axis=1)) + self.support_radius)

    def support_box(self):
        """ Box (lo, hi) containing {f_n > 0}, or None for an empty estimate. """
        if not self.count:
            return None
        pad = self.support_radius
        return self.points.min(axis=0) - pad, self.points.max(axis=0) + pad


def _as_points(points, dimension):
    points = np.asarray(points, dtype=float)
    if points.ndim == 1 and dimension == 1:
        points = points[:, None]
    if points.ndim != 2 or points.shape[1] != dimension:
        raise DimensionMismatchError(f'Points of shape {points.shape} do not match '
                                     f'the kernel dimension {dimension}.')
    return points


def poisson_count(mean: float, seed) -> int:
    """ N ~ Poisson(mean), seeded. """
    if mean < 0:
        raise ValueError(f'Poisson mean must be nonnegative. (Given: {mean})')
    return int(make_rng(seed).poisson(mean))


def build_kde(points, h: float, kernel: Kernel, mode=KdeMode.FIXED_N, seed=None,
              n: int = None) -> KdeField:
    """
    Build f_n (fixed-n) or π_n (Poissonized) from `points`.

    :param points: (n, d) sample. In Poissonized mode an i.i.d. stream of which the
        first N ~ Poisson(n) points are used.
    :param h: Volume bandwidth.
    :param mode: KdeMode or its value ('fixed', 'poisson').
    :param seed: Seed of the Poisson count (Poissonized mode only).
    :param n: Nominal sample size; defaults to the number of points.
    :raises ValueError: on empty data in fixed-n mode, a nonpositive h, or a stream
        shorter than the Poisson draw.
    """
    mode = KdeMode(mode)
    points = _as_points(points, kernel.dimension)
    if not h > 0:
        raise ValueError(f'Bandwidth h must be positive. (Given: {h})')
    n = len(points) if n is None else int(n)
    if mode is KdeMode.FIXED_N:
        if n > len(points):
            raise ValueError(f'Nominal size n={n} exceeds the {len(points)} points given.')
        if not len(points):
            raise ValueError('Cannot build a fixed-n estimate from empty data.')
        used = points[:n]
    else:
        count = poisson_count(n, seed)
        if count > len(points):
            raise ValueError(f'Poisson draw N={count} exceeds the {len(points)} points in the stream.')
        used = points[:count]
    tree = spatial.cKDTree(used) if len(used) else None
    _log.debug(f'Built {mode.value} estimate: n={n}, N={len(used)}, h={h:.4g}, kernel={kernel.name}')
    return KdeField(points=used, h=float(h), kernel=kernel, mode=mode, n=n, tree=tree)


def evaluate(field: KdeField, x):
    return field.evaluate(x)


def default_bandwidth(n: int) -> float:
    """ h_n = 1 / sqrt(n ln n). """
    return 1.0 / np.sqrt(n * np.log(n))


def bandwidth_schedule(n: int, rule: str = 'default', h: float = None) -> float:
    """
    Volume bandwidth for sample size n.

    :param rule: 'default' for 1/sqrt(n ln n), or 'explicit' to pass `h` through.
    :rtype: float
    """
    if n < 3:
        raise ValueError(f'Bandwidth schedules need n >= 3. (Given: {n})')
    if rule == 'default':
        h = default_bandwidth(n)
    elif rule == 'explicit':
        if h is None or not h > 0:
            raise ValueError(f'Explicit bandwidth must be positive. (Given: {h})')
    else:
        raise ValueError(f'Unknown bandwidth rule "{rule}". Use "default" or "explicit".')
    ratio = rate_ratio(n, h)
    if ratio < RATE_WARNING_THRESHOLD:
        _log.warning(f'n*h/ln(n) = {ratio:.3g} < {RATE_WARNING_THRESHOLD:g} at n={n}, h={h:.4g}: '
                     f'the estimate is too rough for the band asymptotics.')
    return float(h)


def rate_ratio(n: int, h: float) -> float:
    """ n·h / ln n, the finite-sample proxy of nh/log n → ∞. """
    return n * h / np.log(n)


def axis_to_volume(h_axis: float, dimension: int) -> float:
    return h_axis ** dimension


def volume_to_axis(h_volume: float, dimension: int) -> float:
    return h_volume ** (1.0 / dimension)
