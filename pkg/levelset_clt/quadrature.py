"""
Gauss–Legendre quadrature rules.

Nodes and weights come from numpy.polynomial.legendre.leggauss and are cached
per order. Everything here is vectorised: limits may be arrays, in which case
the abscissae gain a trailing axis and integrands are evaluated in one call.
"""
import functools
import logging

import numpy as np

from levelset_clt.errors import QuadratureError

_log = logging.getLogger(__name__)


@functools.lru_cache(maxsize=None)
def _leggauss(order: int):
    if order < 1:
        raise ValueError(f'Quadrature order must be positive. (Given: {order})')
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def gauss_legendre(order: int, a=-1.0, b=1.0):
    """
    Abscissae and weights of the `order`-point rule on [a, b].

    :return: (x, w), both of shape a.shape + (order,)
    """
    nodes, weights = _leggauss(order)
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = (b - a) / 2.0
    return (a + b) / 2.0 + half * nodes, half * weights


def integrate(f, a, b, order: int = 64):
    """ Fixed-order rule; f receives abscissae of shape a.shape + (order,). """
    x, w = gauss_legendre(order, a, b)
    return np.sum(f(x) * w, axis=-1)


def _composite(f, a, b, params, panels, order):
    nodes, weights = _leggauss(order)
    width = (b - a) / panels
    starts = a[:, None] + width[:, None] * np.arange(panels)
    x = starts[:, :, None] + (width[:, None, None] / 2.0) * (nodes + 1.0)
    values = f(x.reshape(len(a), panels * order), *[p[:, None] for p in params])
    values = np.reshape(values, (len(a), panels, order))
    return np.sum(values * weights, axis=(-1, -2)) * width / 2.0


def adaptive_gauss_legendre(f, a, b, params=(), tol: float = 1e-10, order: int = 20,
                            max_panels: int = 4096):
    """
    Composite Gauss–Legendre rule on [a, b], element-wise.

    The number of equal panels is doubled until two successive estimates agree
    to `tol` (absolute); converged elements drop out of the refinement.

    :param f: Integrand, called as f(x, *params) with x of shape (m, k) and each
        parameter of shape (m, 1) for the m elements still refining.
    :param params: Per-element parameter arrays, broadcast against a and b.
    :raises QuadratureError: if an element still moves after `max_panels` panels.
    """
    arrays = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b) + tuple(params)))
    shape = arrays[0].shape
    a, b, *params = [v.ravel() for v in arrays]
    result = np.empty(a.size)
    active = np.arange(a.size)
    panels = 1
    previous = _composite(f, a, b, params, panels, order)
    while active.size:
        if panels >= max_panels:
            raise QuadratureError(f'Adaptive Gauss-Legendre did not reach tolerance {tol:g} '
                                  f'for {active.size} integrals with {max_panels} panels '
                                  f'of order {order}.')
        panels *= 2
        current = _composite(f, a[active], b[active], [p[active] for p in params], panels, order)
        done = np.abs(current - previous) <= tol
        result[active[done]] = current[done]
        active = active[~done]
        previous = current[~done]
    return result.reshape(shape)


def disc_rule(radius: float, order: int = 64):
    """
    Polar tensor rule on the closed disc of the given radius.

    :return: (points, weights) with points of shape (order**2, 2).
    """
    r, wr = gauss_legendre(order, 0.0, radius)
    phi, wphi = gauss_legendre(order, 0.0, 2.0 * np.pi)
    rr, pp = np.meshgrid(r, phi, indexing='ij')
    weights = np.outer(wr * r, wphi).ravel()
    points = np.column_stack([(rr * np.cos(pp)).ravel(), (rr * np.sin(pp)).ravel()])
    return points, weights


def interval_rule(lo: float, hi: float, order: int = 64):
    """ The 1-d rule as (points of shape (order, 1), weights). """
    x, w = gauss_legendre(order, lo, hi)
    return x[:, None], w
