"""
Normalising rates, Gaussian orthant covariances and limiting variances.

All variance routines are deterministic Gauss–Legendre quadrature. The
u-integration is truncated at |u| ≤ 8, where the Φ(-|u|) factor bounding the
integrand is below 1e-14.
"""
import dataclasses
import logging
import math
import typing

import numpy as np
from scipy import special

from levelset_clt import quadrature
from levelset_clt.densities import DensityModel, StandardNormalModel
from levelset_clt.errors import DimensionMismatchError, NumericalError, UnsupportedModelError
from levelset_clt.kernel import Kernel
from levelset_clt.levelset import WeightKind, WeightTag

_log = logging.getLogger(__name__)

U_MAX = 8.0
ORDER = 64
ORTHANT_TOLERANCE = 1e-10
BVN_CHUNK = 1 << 15


def norming(n, h, inv_gamma: float = 0.0):
    """ a_{n,G} = (n/h)^{1/4} (n h)^{inv_gamma/2}. """
    if not (np.all(np.asarray(n) > 0) and np.all(np.asarray(h) > 0)):
        raise ValueError(f'n and h must be positive. (Given: n={n}, h={h})')
    if inv_gamma < 0:
        raise ValueError(f'inv_gamma must be nonnegative. (Given: {inv_gamma})')
    return np.power(n / h, 0.25) * np.power(n * h, inv_gamma / 2.0)


def gamma_proxy(n: int, h: float, dimension: int) -> float:
    """ sqrt(n h^{1+2/d}), the finite-n stand-in for γ; 0 in d = 1. """
    if dimension == 1:
        return 0.0
    return math.sqrt(n * h ** (1.0 + 2.0 / dimension))


def _bvn_integrand(phi, h, k):
    sin_phi = np.sin(phi)
    cos_sq = np.square(np.cos(phi))
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        exponent = (h * h - 2.0 * h * k * sin_phi + k * k) / (2.0 * cos_sq)
        values = np.exp(-exponent)
    return np.where(np.isfinite(values), values, 0.0)


def bvn_cdf(h, k, rho):
    """
    P(Z₁ ≤ h, Z₂ ≤ k) for standard normals with correlation rho.

    Uses Φ₂(h, k; ρ) = Φ(h)Φ(k) + 1/(2π) ∫_0^{arcsin ρ} exp(-(h² - 2hk sin φ + k²)/(2 cos² φ)) dφ,
    the single-integral reduction after r = sin φ, which removes the (1 - r²)^{-1/2}
    endpoint singularity. The integral is computed by the adaptive composite
    Gauss–Legendre rule to 1e-10 absolute; Φ is scipy.special.ndtr.

    :raises ValueError: if |rho| > 1.
    """
    h, k, rho = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (h, k, rho)))
    if np.any(np.abs(rho) > 1.0 + 1e-12):
        raise ValueError(f'Correlation must lie in [-1, 1]. (Given: max |rho| = {np.max(np.abs(rho))})')
    shape = h.shape
    h, k = h.ravel(), k.ravel()
    upper = np.arcsin(np.clip(rho.ravel(), -1.0, 1.0))
    integral = np.zeros(h.size)
    for start in range(0, h.size, BVN_CHUNK):
        part = slice(start, start + BVN_CHUNK)
        integral[part] = quadrature.adaptive_gauss_legendre(
            _bvn_integrand, 0.0, upper[part], params=(h[part], k[part]), tol=ORTHANT_TOLERANCE)
    value = special.ndtr(h) * special.ndtr(k) + integral / (2.0 * np.pi)
    return np.clip(value, 0.0, 1.0).reshape(shape)


def phi2_orthant(u, rho):
    """ P(Z₁ ≤ -|u|, W ≤ -|u|) with corr(Z₁, W) = rho. """
    a = -np.abs(np.asarray(u, dtype=float))
    return bvn_cdf(a, a, rho)


def upsilon(u, rho):
    """
    Υ(u, ρ): covariance of |I{Z₁ ≥ -u} - I{0 ≥ -u}| and the same transform of a
    standard normal with correlation ρ to Z₁.

    For u > 0 both transforms are indicators of {· < -u}, for u ≤ 0 of {· ≥ -u};
    point symmetry of the centred Gaussian maps the second case onto the first,
    so Υ(u, ρ) = Φ₂(-|u|, -|u|; ρ) - Φ(-|u|)².
    """
    tail = special.ndtr(-np.abs(np.asarray(u, dtype=float)))
    return phi2_orthant(u, rho) - tail * tail


def gamma_cov(a, b, rho):
    """
    Covariance of |I{Z₁ ≥ a} - I{0 ≥ a}| and |I{W ≥ b} - I{0 ≥ b}|, corr(Z₁, W) = rho.

    Each transform is the event {σ Z ≤ -|threshold|} with σ = 1 for a threshold
    ≤ 0 and σ = -1 otherwise. Reduces to upsilon(-a, rho) when a = b.
    """
    a, b, rho = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, rho)))
    sign = np.where(a <= 0.0, 1.0, -1.0) * np.where(b <= 0.0, 1.0, -1.0)
    joint = bvn_cdf(-np.abs(a), -np.abs(b), np.clip(sign * rho, -1.0, 1.0))
    return joint - special.ndtr(-np.abs(a)) * special.ndtr(-np.abs(b))


@dataclasses.dataclass(frozen=True)
class AsymptoticSpec(object):
    """
    Parameters of the limit theorem at one level.

    Radial d = 2 geometry is given by `radius` = r(c) and `slope` = |f′| on the
    circle; d = 1 geometry by the boundary slopes |f′(z_i)|. `components` holds
    the constants c_j of k identical boundary components.
    """
    c: float
    kernel: Kernel
    weight: WeightKind
    dimension: int
    gamma: float = 0.0
    radius: typing.Optional[float] = None
    slope: typing.Optional[float] = None
    crossing_slopes: typing.Optional[typing.Tuple[float, ...]] = None
    components: typing.Tuple[float, ...] = (1.0,)
    model_name: typing.Optional[str] = None
    sup_f: typing.Optional[float] = None

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f'gamma must be nonnegative. (Given: {self.gamma})')
        if self.dimension == 1 and self.gamma != 0:
            raise ValueError(f'gamma is 0 in dimension 1. (Given: {self.gamma})')
        if not self.c > 0 or (self.sup_f is not None and not self.c < self.sup_f):
            raise ValueError(f'Level c={self.c} must lie in (0, sup f).')
        if self.kernel.dimension != self.dimension:
            raise DimensionMismatchError(f'Kernel dimension {self.kernel.dimension} does not match '
                                         f'the model dimension {self.dimension}.')
        if not self.components:
            raise ValueError('At least one boundary component is required.')

    @property
    def l2_norm(self) -> float:
        return self.kernel.l2_norm

    @property
    def inv_gamma(self) -> float:
        return self.weight.inv_gamma

    @property
    def is_radial(self) -> bool:
        return self.dimension == 2 and self.radius is not None and self.slope is not None

    def component_factor(self) -> float:
        """ Σ c_j². """
        return float(np.sum(np.square(self.components)))


def asymptotic_spec(model: DensityModel, kernel: Kernel, c: float, weight: WeightKind = None,
                    gamma: float = None, n: int = None, h: float = None,
                    components=(1.0,)) -> AsymptoticSpec:
    """
    Build an AsymptoticSpec from a built-in model.

    γ defaults to the finite-n proxy sqrt(n h^{1+2/d}) when (n, h) are given and
    to 0 otherwise; it is always 0 in d = 1.
    """
    weight = weight or WeightKind.lebesgue()
    if not isinstance(model, StandardNormalModel):
        raise UnsupportedModelError(f'No closed-form boundary geometry for {model!r}.')
    model.check_level(c)
    if gamma is None:
        gamma = gamma_proxy(n, h, model.dimension) if n and h else 0.0
    if model.dimension == 1:
        gamma = 0.0
        _, slopes = model.crossings(c)
        return AsymptoticSpec(c=c, kernel=kernel, weight=weight, dimension=1,
                              crossing_slopes=tuple(float(s) for s in np.abs(slopes)),
                              components=tuple(components), model_name=model.name, sup_f=model.sup_f)
    return AsymptoticSpec(c=c, kernel=kernel, weight=weight, dimension=2, gamma=float(gamma),
                          radius=float(model.radius_at(c)), slope=float(model.slope_at_level(c)),
                          components=tuple(components), model_name=model.name, sup_f=model.sup_f)


def _disc_rho(kernel: Kernel, order: int):
    """ ρ at the nodes of a rule over the unit ball B ⊂ R², with weights summing to π. """
    if kernel.is_radial:
        tau, w = quadrature.gauss_legendre(order, 0.0, 1.0)
        return kernel.rho_radial(tau), 2.0 * np.pi * tau * w
    points, weights = quadrature.disc_rule(1.0, order)
    return kernel.rho(points), weights


def _interval_rho(kernel: Kernel, order: int):
    """ ρ over B = [-1, 1], split at 0 where the box autocorrelation has its kink. """
    left, wl = quadrature.gauss_legendre(order, -1.0, 0.0)
    right, wr = quadrature.gauss_legendre(order, 0.0, 1.0)
    t = np.concatenate([left, right])
    return kernel.rho(t[:, None]), np.concatenate([wl, wr])


def _upsilon_moment(rho_values, rho_weights, power: float, order: int, u_max: float = U_MAX):
    """ ∫_{-u_max}^{u_max} ∫_B |u|^power Υ(u, ρ(t)) dt du, from the nodes of a B-rule. """
    u, wu = quadrature.gauss_legendre(order, 0.0, u_max)
    values = upsilon(u[:, None], rho_values[None, :])
    inner = values @ rho_weights
    return 2.0 * float(np.sum(np.power(u, power) * inner * wu))


def _require_radial(spec: AsymptoticSpec):
    if not spec.is_radial:
        raise UnsupportedModelError('This variance formula needs a radially symmetric d = 2 boundary.')


def sigma2_lebesgue_radial(spec: AsymptoticSpec, order: int = ORDER) -> float:
    """
    σ_λ² = (‖K‖₂/√c) ∫_ℝ ∫_0^{2π} ∫_B Υ(u, ρ(t)) dt dθ du.

    Υ does not depend on θ and ρ only on |t|, so this is
    (4π²‖K‖₂/√c) · 2 ∫_0^8 ∫_0^1 Υ(u, ρ(τ)) τ dτ du.
    """
    _require_radial(spec)
    if spec.weight.tag is not WeightTag.LEBESGUE:
        raise UnsupportedModelError(f'sigma2_lebesgue_radial needs the lebesgue weight, '
                                    f'got {spec.weight}.')
    if spec.gamma:
        raise UnsupportedModelError('Lebesgue weight with gamma > 0 is handled by sigma2_general_radial.')
    rho_values, rho_weights = _disc_rho(spec.kernel, order)
    moment = _upsilon_moment(rho_values, rho_weights, 0.0, order)
    return 2.0 * np.pi * spec.l2_norm / math.sqrt(spec.c) * moment * spec.component_factor()


def sigma2_lebesgue_direct(spec: AsymptoticSpec, order: int = 48, angles: int = 3) -> float:
    """ σ_λ² through sigma2_radial_direct. Cross-check of the reduced form. """
    if spec.weight.tag is not WeightTag.LEBESGUE or spec.gamma:
        raise UnsupportedModelError('sigma2_lebesgue_direct needs the lebesgue weight and gamma = 0.')
    return sigma2_radial_direct(spec, order, angles)


def sigma2_radial_direct(spec: AsymptoticSpec, order: int = 48, angles: int = 3) -> float:
    """
    σ² = ∫_0^{2π} ∫_ℝ ∫_B Γ(θ, s, t) ι dt ds dθ at γ = 0, by tensor quadrature.

    Nothing is folded: s runs over both signs, θ has its own rule and ρ is
    evaluated at the offsets R_θ t of a Cartesian grid on [-1, 1]², cut to |t| < 1.
    """
    _require_radial(spec)
    if spec.gamma:
        raise UnsupportedModelError('sigma2_radial_direct covers gamma = 0 only.')
    scale = math.sqrt(spec.c) * spec.l2_norm
    s_max = U_MAX * scale / spec.slope
    s_lo, ws_lo = quadrature.gauss_legendre(order, -s_max, 0.0)
    s_hi, ws_hi = quadrature.gauss_legendre(order, 0.0, s_max)
    s, ws = np.concatenate([s_lo, s_hi]), np.concatenate([ws_lo, ws_hi])
    u = -s * spec.slope / scale
    weights = _weight_factor(spec, s, np.abs(s) * spec.slope) * ws
    # Each axis split at 0, where the box autocorrelation has its cusp.
    x_lo, wx_lo = quadrature.gauss_legendre(order, -1.0, 0.0)
    x_hi, wx_hi = quadrature.gauss_legendre(order, 0.0, 1.0)
    x, wx = np.concatenate([x_lo, x_hi]), np.concatenate([wx_lo, wx_hi])
    t1, t2 = (grid.ravel() for grid in np.meshgrid(x, x, indexing='ij'))
    wt = np.outer(wx, wx).ravel()
    inside = t1 * t1 + t2 * t2 < 1.0
    points, wt = np.column_stack([t1[inside], t2[inside]]), wt[inside]
    theta, wtheta = quadrature.gauss_legendre(angles, 0.0, 2.0 * np.pi)
    total = 0.0
    for angle, w_angle in zip(theta, wtheta):
        cos, sin = np.cos(angle), np.sin(angle)
        offsets = points @ np.array([[cos, sin], [-sin, cos]])
        rho_values = spec.kernel.rho(offsets)
        inner = upsilon(u[:, None], rho_values[None, :]) @ wt
        total += w_angle * float(inner @ weights)
    sigma2 = spec.radius * total * spec.component_factor()
    if not (np.isfinite(sigma2) and sigma2 > 0):
        raise NumericalError(f'Limiting variance is not finite and positive ({sigma2!r}).')
    return sigma2


def _weight_factor(spec: AsymptoticSpec, s, second):
    """
    Weight product of Γ: |s|^{1/γ_g} g⁽¹⁾(u) |su + γt|^{1/γ_g} g⁽¹⁾(…).

    :param second: |f′·(su + γt)|, the slope-weighted offset of the second point.
    """
    tag = spec.weight.tag
    if tag is WeightTag.LEBESGUE:
        return np.ones_like(s)
    if tag is WeightTag.DENSITY:
        return np.full_like(s, spec.c * spec.c)
    p = spec.weight.power
    return np.power(np.abs(s) * spec.slope, p) * np.power(second, p)


def sigma2_general_radial(spec: AsymptoticSpec, order: int = ORDER) -> float:
    """
    σ² = ∫_ℝ ∫_0^{2π} ∫_B Γ(θ, s, t) ι(θ) dt dθ ds for a radial boundary, ι = r(c).

    With the inward normal u(θ) and |f′| = r(c)·c on the circle, the thresholds are
    c(s, θ, 0) = -s|f′|/(√c‖K‖₂) and c(s, θ, γt) = -|f′|(s - γ e_θ·t)/(√c‖K‖₂).
    By rotation the θ-integral is 2π times the integrand at e_θ = e₁.
    """
    _require_radial(spec)
    scale = math.sqrt(spec.c) * spec.l2_norm
    s_max = U_MAX * scale / spec.slope
    if spec.gamma == 0:
        rho_values, rho_weights = _disc_rho(spec.kernel, order)
        u, wu = quadrature.gauss_legendre(order, 0.0, U_MAX)
        s, ws = u * (s_max / U_MAX), wu * (s_max / U_MAX)
        values = upsilon(u[:, None], rho_values[None, :]) @ rho_weights
        weights = _weight_factor(spec, s, s * spec.slope)
        integral = 2.0 * float(np.sum(values * weights * ws))
    else:
        integral = _general_radial_gamma(spec, order, scale, s_max)
    sigma2 = spec.radius * 2.0 * np.pi * integral * spec.component_factor()
    if not (np.isfinite(sigma2) and sigma2 > 0):
        raise NumericalError(f'Limiting variance is not finite and positive ({sigma2!r}).')
    return sigma2


def _general_radial_gamma(spec: AsymptoticSpec, order: int, scale: float, s_max: float) -> float:
    if not spec.kernel.is_radial:
        raise UnsupportedModelError('gamma > 0 needs a radial kernel.')
    # t = τ (cos φ, sin φ); the integrand depends on t₁ and |t| only, so φ ∈ [0, π] twice.
    tau, wtau = quadrature.gauss_legendre(order, 0.0, 1.0)
    phi, wphi = quadrature.gauss_legendre(order, 0.0, np.pi)
    tt, pp = np.meshgrid(tau, phi, indexing='ij')
    t1 = (tt * np.cos(pp)).ravel()
    rho_t = spec.kernel.rho_radial(tt).ravel()
    wt = 2.0 * np.outer(wtau * tau, wphi).ravel()
    # Split s at 0 and at γt₁, where the thresholds change sign.
    shift = np.clip(spec.gamma * t1, -s_max, s_max)
    cuts = np.stack([np.full_like(shift, -s_max), np.minimum(0.0, shift),
                     np.maximum(0.0, shift), np.full_like(shift, s_max)], axis=-1)
    sub_order = max(order // 2, 8)
    total = 0.0
    for piece in range(3):
        s, ws = quadrature.gauss_legendre(sub_order, cuts[:, piece], cuts[:, piece + 1])
        a = -s * spec.slope / scale
        b = -(s - spec.gamma * t1[:, None]) * spec.slope / scale
        cov = gamma_cov(a, b, rho_t[:, None])
        weights = _weight_factor(spec, s, np.abs(s - spec.gamma * t1[:, None]) * spec.slope)
        total += float(np.sum(np.sum(cov * weights * ws, axis=1) * wt))
    return total


def sigma2_excess_closed(spec: AsymptoticSpec, order: int = ORDER) -> float:
    """ σ_H² = 2π √c ‖K‖₂³ ∬ u² Υ(u, ρ(t)) dt du for excess_power(1), γ = 0. """
    _require_radial(spec)
    if spec.weight != WeightKind.excess_power(1.0) or spec.gamma:
        raise UnsupportedModelError('The closed excess-risk form needs excess_power(1) and gamma = 0.')
    rho_values, rho_weights = _disc_rho(spec.kernel, order)
    moment = _upsilon_moment(rho_values, rho_weights, 2.0, order)
    return 2.0 * np.pi * math.sqrt(spec.c) * spec.l2_norm ** 3 * moment * spec.component_factor()


def _g1_squared(spec: AsymptoticSpec, slopes):
    tag = spec.weight.tag
    if tag is WeightTag.LEBESGUE:
        return np.ones_like(slopes)
    if tag is WeightTag.DENSITY:
        return np.full_like(slopes, spec.c * spec.c)
    return np.power(slopes, 2.0 * spec.weight.power)


def _crossing_slopes(spec: AsymptoticSpec):
    if spec.dimension != 1:
        raise UnsupportedModelError('This variance formula is for d = 1 boundaries.')
    if not spec.crossing_slopes:
        raise ValueError('d = 1 variance needs the boundary crossings and their slopes; none given.')
    slopes = np.abs(np.asarray(spec.crossing_slopes, dtype=float))
    if np.any(slopes <= 0):
        raise ValueError(f'Boundary slopes must be nonzero. (Given: {spec.crossing_slopes})')
    return slopes


def sigma2_1d(spec: AsymptoticSpec, order: int = ORDER, s_cutoff: float = 10.0) -> float:
    """
    σ² = Σ_i g⁽¹⁾(z_i)² ∫_ℝ ∫_{-1}^{1} Υ(s|f′(z_i)|/(√c‖K‖₂), ρ(t)) |s|^{2/γ_g} dt ds,
    integrated directly in s over |u| ≤ s_cutoff.
    """
    slopes = _crossing_slopes(spec)
    scale = math.sqrt(spec.c) * spec.l2_norm
    rho_values, rho_weights = _interval_rho(spec.kernel, order)
    p = spec.inv_gamma
    total = 0.0
    for slope, g1_sq in zip(slopes, _g1_squared(spec, slopes)):
        s, ws = quadrature.gauss_legendre(order, 0.0, s_cutoff * scale / slope)
        inner = upsilon(s[:, None] * slope / scale, rho_values[None, :]) @ rho_weights
        total += g1_sq * 2.0 * float(np.sum(np.power(s, 2.0 * p) * inner * ws))
    return total * spec.component_factor()


def sigma2_1d_substituted(spec: AsymptoticSpec, order: int = ORDER) -> float:
    """
    The same variance after u = s|f′(z_i)|/(√c‖K‖₂):
    Σ_i g⁽¹⁾(z_i)² (√c‖K‖₂/|f′(z_i)|)^{1+2/γ_g} ∬ |u|^{2/γ_g} Υ(u, ρ(t)) dt du.
    """
    slopes = _crossing_slopes(spec)
    scale = math.sqrt(spec.c) * spec.l2_norm
    rho_values, rho_weights = _interval_rho(spec.kernel, order)
    p = spec.inv_gamma
    moment = _upsilon_moment(rho_values, rho_weights, 2.0 * p, order)
    factors = _g1_squared(spec, slopes) * np.power(scale / slopes, 1.0 + 2.0 * p)
    return float(np.sum(factors)) * moment * spec.component_factor()


def sigma2(spec: AsymptoticSpec, order: int = ORDER) -> float:
    """ σ_G² by the formula matching the boundary geometry. """
    if spec.dimension == 1:
        return sigma2_1d(spec, order)
    if spec.weight.tag is WeightTag.LEBESGUE and not spec.gamma:
        return sigma2_lebesgue_radial(spec, order)
    return sigma2_general_radial(spec, order)


def cadre_mean_constant(spec: AsymptoticSpec) -> float:
    """
    Limit in probability of sqrt(n h) λ(C_n Δ C): 2‖K‖₂ sqrt(2π/c) for the bivariate
    standard normal. Checked against the general form on the way.
    """
    if spec.model_name != 'gauss2d' or not spec.is_radial:
        raise UnsupportedModelError(f'The closed Cadre constant is for gauss2d only '
                                    f'(given: {spec.model_name}).')
    closed = 2.0 * spec.l2_norm * math.sqrt(2.0 * np.pi / spec.c)
    general = cadre_mean_constant_general(spec)
    if not math.isclose(closed, general, rel_tol=1e-9):
        raise NumericalError(f'Cadre constant routes disagree: {closed!r} vs {general!r}.')
    return closed


def cadre_mean_constant_general(spec: AsymptoticSpec) -> float:
    """
    ‖K‖₂ sqrt(2c/π) ∫_β dH/|f′|: perimeter/|f′| on a circle, Σ 1/|f′(z_i)| in d = 1.
    """
    prefactor = spec.l2_norm * math.sqrt(2.0 * spec.c / np.pi)
    if spec.is_radial:
        return prefactor * 2.0 * np.pi * spec.radius / spec.slope
    if spec.dimension == 1:
        return prefactor * float(np.sum(1.0 / _crossing_slopes(spec)))
    raise UnsupportedModelError('No boundary geometry for the Cadre constant.')
