class LevelSetError(Exception):
    """ Base class for all errors raised by levelset_clt. """


class NumericalError(LevelSetError):
    """ A numerical procedure could not deliver a trustworthy result. """


class QuadratureError(NumericalError):
    """ A quadrature rule did not converge to the requested tolerance. """


class IntegratorError(NumericalError):
    """ A symmetric-difference integrator failed (band, crossings, measure bound). """


class UnsupportedModelError(LevelSetError, ValueError):
    """ The model / weight / geometry combination has no implemented closed form. """


class DimensionMismatchError(LevelSetError, ValueError):
    """ Points, kernel and model disagree on the dimension. """
