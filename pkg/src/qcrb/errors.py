"""Exception and warning types raised across the package."""


class QcrbError(Exception):
    """Base class for all package errors."""


class NotHermitian(QcrbError, ValueError):
    pass


class NoConvergence(QcrbError, ArithmeticError):
    pass


class DimensionTooSmall(QcrbError, ValueError):
    pass


class TruncationInsufficient(QcrbError, ValueError):
    def __init__(self, msg, required_dim=None):
        super().__init__(msg)
        self.required_dim = required_dim


class NonHermitianGenerator(QcrbError, ValueError):
    pass


class DivergentChi(QcrbError, ArithmeticError):
    pass


class OutOfDomain(QcrbError, ValueError):
    pass


class DerivativeFailure(QcrbError, ArithmeticError):
    pass


class KindMismatch(QcrbError, TypeError):
    pass


class DegenerateSpectrum(QcrbError, ArithmeticError):
    pass


class ShapeMismatch(QcrbError, ValueError):
    pass


class SingularityAtPole(QcrbError, ArithmeticError):
    pass


class SeriesDivergence(QcrbError, ArithmeticError):
    pass


class BiasedEstimator(QcrbError, ValueError):
    pass


class InvalidPovm(QcrbError, ValueError):
    pass


class NotCommuting(QcrbError, ValueError):
    pass


class BinsTooFew(QcrbError, ValueError):
    pass


class SingularR(QcrbError, ArithmeticError):
    pass


class ConfigInvalid(QcrbError, ValueError):
    def __init__(self, diagnostics):
        if isinstance(diagnostics, str):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class SingularInformationWarning(UserWarning):
    """An information matrix was rank deficient; the bound covers its range only."""


class SupportMismatchWarning(UserWarning):
    """A derivative had components outside the support of the state."""
