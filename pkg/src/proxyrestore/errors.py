"""Exception hierarchy shared by all modules."""


class ProxyRestoreError(Exception):
    pass


class ParameterDomainError(ProxyRestoreError, ValueError):
    """A distribution or model parameter lies outside its valid domain."""

    def __init__(self, field, value, requirement):
        self.field = field
        self.value = value
        super().__init__(f"{field}={value!r} invalid: {requirement}")


class InsufficientDataError(ProxyRestoreError, ValueError):
    pass


class EmptyDatasetError(InsufficientDataError):
    pass


class SingularMatrixError(ProxyRestoreError, ArithmeticError):
    def __init__(self, condition, message=None):
        self.condition = condition
        super().__init__(message or f"matrix is singular or ill-conditioned (cond={condition:.3g})")


class NonIdentifiableError(ProxyRestoreError, ArithmeticError):
    pass


class DegenerateVarianceError(ProxyRestoreError, ArithmeticError):
    def __init__(self, sigma_y_sq, c_yz_sq):
        self.sigma_y_sq = sigma_y_sq
        self.c_yz_sq = c_yz_sq
        super().__init__(
            f"interventional variance is negative: sigma_y^2={sigma_y_sq:.6g}, c_yz^2={c_yz_sq:.6g}"
        )


class ProxyDegeneracyError(SingularMatrixError):
    pass


class CollinearityError(SingularMatrixError):
    pass


class DegenerateTreatmentError(ProxyRestoreError, ArithmeticError):
    pass


class DomainKindError(ProxyRestoreError, TypeError):
    pass


class ShapeError(ProxyRestoreError, ValueError):
    pass


class TapeMismatchError(ProxyRestoreError, RuntimeError):
    pass


class NonFiniteError(ProxyRestoreError, FloatingPointError):
    def __init__(self, message, *, term=None, step=None, epoch=None, batch=None):
        self.term = term
        self.step = step
        self.epoch = epoch
        self.batch = batch
        super().__init__(message)


class SchemaError(ProxyRestoreError, ValueError):
    pass


class ContractError(ProxyRestoreError, RuntimeError):
    pass
