"""
Kernel profiles supported in the closed ball of radius 1/2.

Built-in kernels (d = 1, 2):

* ``box``: uniform on the ball, K = 1 / vol(ball).
* ``radpoly``: C (1 - (2|u|)^2)^2 on the ball, C chosen so that K integrates to one.

Both are symmetric, hence centred, and bounded. Custom profiles can be wrapped
with :meth:`Kernel.custom`; their norms and autocorrelation are then computed by
Gauss–Legendre quadrature (64 nodes per axis, polar in d = 2).
"""
import dataclasses
import functools
import logging
import typing
from enum import Enum

import numpy as np
from scipy.interpolate import CubicSpline

from levelset_clt import quadrature
from levelset_clt.errors import QuadratureError

_log = logging.getLogger(__name__)

SUPPORT_RADIUS = 0.5
RHO_TABLE_SIZE = 1025  # spline knots over |t| in [0, 1]
QUADRATURE_ORDER = 64

_BALL_VOLUME = {1: 1.0, 2: np.pi / 4.0}
_RADPOLY_CONSTANT = {1: 15.0 / 8.0, 2: 12.0 / np.pi}
_RADPOLY_L2_SQ = {1: 10.0 / 7.0, 2: 36.0 / (5.0 * np.pi)}


class KernelKind(Enum):
    BOX_BALL = 'box'
    RADIAL_POLYNOMIAL = 'radpoly'
    CUSTOM = 'custom'


def _norm(u):
    return np.sqrt(np.sum(np.square(u), axis=-1))


def _box_profile(u, dimension):
    return np.where(_norm(u) <= SUPPORT_RADIUS, 1.0 / _BALL_VOLUME[dimension], 0.0)


def _radpoly_profile(u, dimension):
    r = _norm(u)
    core = np.square(1.0 - 4.0 * np.square(r))
    return np.where(r <= SUPPORT_RADIUS, _RADPOLY_CONSTANT[dimension] * core, 0.0)


def _box_rho(tau, dimension):
    tau = np.clip(np.abs(tau), 0.0, 1.0)
    if dimension == 1:
        return 1.0 - tau
    # Lens of two discs of radius 1/2 at distance tau, over the disc area.
    return (2.0 / np.pi) * (np.arccos(tau) - tau * np.sqrt(1.0 - np.square(tau)))


def _radpoly_overlap(tau, dimension):
    """ ∫ K(u) K(u + tau e1) du for the radial polynomial kernel, tau in [0, 1]. """
    profile = functools.partial(_radpoly_profile, dimension=dimension)
    tau = np.asarray(tau, dtype=float)
    if dimension == 1:
        # Overlap of [-1/2, 1/2] and [-1/2 - tau, 1/2 - tau]; the integrand is a polynomial.
        x, w = quadrature.gauss_legendre(16, -SUPPORT_RADIUS, SUPPORT_RADIUS - tau)
        values = profile(x[..., None]) * profile((x + tau[..., None])[..., None])
        return np.sum(values * w, axis=-1)
    # Lens {|u| <= 1/2, |u + tau e1| <= 1/2}: outer rule in y, exact polynomial rule in x.
    y_max = np.sqrt(np.clip(0.25 - np.square(tau) / 4.0, 0.0, None))
    y, wy = quadrature.gauss_legendre(QUADRATURE_ORDER, -y_max, y_max)
    half_chord = np.sqrt(np.clip(0.25 - np.square(y), 0.0, None))
    x, wx = quadrature.gauss_legendre(16, -half_chord, half_chord - tau[..., None])
    yy = np.broadcast_to(y[..., None], x.shape)
    here = profile(np.stack([x, yy], axis=-1))
    shifted = profile(np.stack([x + tau[..., None, None], yy], axis=-1))
    inner = np.sum(here * shifted * wx, axis=-1)
    return np.sum(inner * wy, axis=-1)


@dataclasses.dataclass(frozen=True, eq=False)
class Kernel(object):
    """
    A kernel K on R^d with support in the closed ball of radius `support_radius`.

    `profile` maps an array of shape (..., d) to an array of shape (...).
    Instances are immutable and safe to share between threads.
    """
    dimension: int
    kind: KernelKind
    profile: typing.Callable[[np.ndarray], np.ndarray]
    l2_norm_sq: float
    sup: float  # κ, the bound on |K|
    support_radius: float = SUPPORT_RADIUS
    rho_spline: typing.Optional[CubicSpline] = dataclasses.field(default=None, repr=False)

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def l2_norm(self) -> float:
        return float(np.sqrt(self.l2_norm_sq))

    @property
    def is_radial(self) -> bool:
        return self.kind is not KernelKind.CUSTOM

    def __call__(self, u):
        return self.profile(np.asarray(u, dtype=float))

    def rho(self, t):
        """
        Normalised autocorrelation ∫K(u)K(u+t)du / ∫K² at offsets t of shape (..., d).
        """
        t = np.asarray(t, dtype=float)
        if self.is_radial:
            return self.rho_radial(_norm(t))
        return _custom_rho(self, t)

    def rho_radial(self, tau):
        """ ρ as a function of |t| (radial kernels only). """
        if not self.is_radial:
            raise TypeError('rho_radial is only defined for radial kernels.')
        tau = np.abs(np.asarray(tau, dtype=float))
        if self.kind is KernelKind.BOX_BALL:
            value = _box_rho(tau, self.dimension)
        else:
            value = self.rho_spline(np.clip(tau, 0.0, 1.0))
        return np.where(tau >= 1.0, 0.0, value)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """ Draw `count` points with density K, shape (count, d). """
        if self.kind is KernelKind.BOX_BALL:
            return _uniform_ball(count, self.dimension, self.support_radius, rng)
        # Rejection from the uniform distribution on the support ball.
        accepted = list()
        remaining = count
        while remaining > 0:
            batch = max(2 * remaining, 64)
            proposal = _uniform_ball(batch, self.dimension, self.support_radius, rng)
            keep = rng.uniform(0.0, self.sup, size=batch) < self(proposal)
            accepted.append(proposal[keep][:remaining])
            remaining -= len(accepted[-1])
        return np.concatenate(accepted, axis=0) if accepted else np.empty((0, self.dimension))

    @classmethod
    def custom(cls, profile, dimension: int, support_radius: float = SUPPORT_RADIUS):
        """
        Wrap an arbitrary profile. Its L2 norm and bound are computed by quadrature
        over the declared support ball.

        :raises QuadratureError: if the 64- and 128-node estimates of ∫K² disagree
            beyond 1e-8 relative.
        """
        _check_dimension(dimension)
        points, weights = _support_rule(dimension, support_radius, QUADRATURE_ORDER)
        values = np.asarray(profile(points), dtype=float)
        fine_points, fine_weights = _support_rule(dimension, support_radius,
                                                  2 * QUADRATURE_ORDER)
        fine_values = np.asarray(profile(fine_points), dtype=float)
        l2_sq = float(np.sum(np.square(values) * weights))
        l2_sq_fine = float(np.sum(np.square(fine_values) * fine_weights))
        if not np.isfinite(l2_sq) or l2_sq <= 0.0:
            raise QuadratureError(f'Custom kernel has a non-finite or zero L2 norm ({l2_sq}).')
        if abs(l2_sq - l2_sq_fine) > 1e-8 * l2_sq_fine:
            raise QuadratureError(f'L2 norm of the custom kernel did not converge '
                                  f'({l2_sq!r} vs {l2_sq_fine!r}).')
        origin = np.asarray(profile(np.zeros((1, dimension))), dtype=float)
        sup = float(np.max(np.abs(np.concatenate([fine_values, origin]))))
        return cls(dimension=dimension, kind=KernelKind.CUSTOM, profile=profile,
                   l2_norm_sq=l2_sq_fine, sup=sup, support_radius=float(support_radius))


def _check_dimension(dimension):
    if dimension not in (1, 2):
        raise ValueError(f'Only dimensions 1 and 2 are supported. (Given: {dimension})')


def _uniform_ball(count, dimension, radius, rng):
    if dimension == 1:
        return rng.uniform(-radius, radius, size=(count, 1))
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, size=count))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=count)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def _support_rule(dimension, radius, order):
    if dimension == 1:
        return quadrature.interval_rule(-radius, radius, order)
    return quadrature.disc_rule(radius, order)


def _custom_rho(kernel: Kernel, t: np.ndarray):
    radius = kernel.support_radius
    flat = t.reshape(-1, kernel.dimension)
    out = np.empty(len(flat))
    for idx, offset in enumerate(flat):
        if kernel.dimension == 1:
            lo = max(-radius, -radius - offset[0])
            hi = min(radius, radius - offset[0])
            if hi <= lo:
                out[idx] = 0.0
                continue
            points, weights = quadrature.interval_rule(lo, hi, QUADRATURE_ORDER)
        else:
            points, weights = quadrature.disc_rule(radius, QUADRATURE_ORDER)
        overlap = np.sum(kernel(points) * kernel(points + offset) * weights)
        out[idx] = overlap / kernel.l2_norm_sq
    return out.reshape(t.shape[:-1])


@functools.lru_cache(maxsize=None)
def make_kernel(name: str, dimension: int) -> Kernel:
    """
    Built-in kernel by name ('box' or 'radpoly') and dimension (1 or 2).
    """
    _check_dimension(dimension)
    kind = KernelKind(name.lower())
    if kind is KernelKind.BOX_BALL:
        return Kernel(dimension=dimension, kind=kind,
                      profile=functools.partial(_box_profile, dimension=dimension),
                      l2_norm_sq=1.0 / _BALL_VOLUME[dimension],
                      sup=1.0 / _BALL_VOLUME[dimension])
    if kind is KernelKind.RADIAL_POLYNOMIAL:
        grid = np.linspace(0.0, 1.0, RHO_TABLE_SIZE)
        table = _radpoly_overlap(grid, dimension) / _RADPOLY_L2_SQ[dimension]
        table[-1] = 0.0
        return Kernel(dimension=dimension, kind=kind,
                      profile=functools.partial(_radpoly_profile, dimension=dimension),
                      l2_norm_sq=_RADPOLY_L2_SQ[dimension],
                      sup=_RADPOLY_CONSTANT[dimension],
                      rho_spline=CubicSpline(grid, table))
    raise ValueError(f'Unknown built-in kernel "{name}". Use "box" or "radpoly".')


def kernel_l2_norm(k: Kernel) -> float:
    """ ‖K‖₂ = sqrt(∫K²). """
    return k.l2_norm


def rho(k: Kernel, t):
    """ ρ(t) = ∫K(u)K(u+t)du / ∫K²(u)du. """
    return k.rho(t)


def validate_kernel(k: Kernel) -> typing.List[str]:
    """
    Check the kernel assumptions numerically.

    :return: Names of the violated assumptions; empty when all hold.
        Possible entries: "K.i support", "K.i nonnegative", "K.i bounded",
        "K.i mass", "K.ii moment".
    """
    violations = list()
    radius = max(k.support_radius, SUPPORT_RADIUS)
    if k.support_radius > SUPPORT_RADIUS + 1e-12 or _mass_outside_ball(k):
        violations.append('K.i support')
    points, weights = _support_rule(k.dimension, radius, 2 * QUADRATURE_ORDER)
    values = k(points)
    if np.any(values < -1e-12):
        violations.append('K.i nonnegative')
    if not np.all(np.isfinite(values)):
        violations.append('K.i bounded')
        return violations  # Integrals are meaningless past this point.
    mass = float(np.sum(values * weights))
    if abs(mass - 1.0) > 1e-6:
        violations.append('K.i mass')
    moment = float(np.sum(np.sum(points, axis=-1) * values * weights))
    if abs(moment) > 1e-6:
        violations.append('K.ii moment')
    if violations:
        _log.debug(f'Kernel {k.name} (d={k.dimension}) violates: {violations}')
    return violations


def _mass_outside_ball(k: Kernel) -> bool:
    radii = np.linspace(SUPPORT_RADIUS + 1e-6, max(1.0, k.support_radius), 200)
    if k.dimension == 1:
        samples = np.concatenate([radii, -radii])[:, None]
    else:
        phi = np.linspace(0.0, 2.0 * np.pi, 64, endpoint=False)
        rr, pp = np.meshgrid(radii, phi, indexing='ij')
        samples = np.column_stack([(rr * np.cos(pp)).ravel(), (rr * np.sin(pp)).ravel()])
    return bool(np.any(k(samples) != 0.0))
