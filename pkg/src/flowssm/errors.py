"""Exception and warning types shared across the package."""


class FlowSsmError(Exception):
    """Base class for all flowssm errors."""


class ParseError(FlowSsmError):
    """A mesh or config file could not be parsed."""


class TopologyError(FlowSsmError):
    """Mesh connectivity violates an invariant (bad index, degenerate face, zero area)."""


class IoError(FlowSsmError, OSError):
    """A file could not be read or written."""


class ShapeMismatch(FlowSsmError):
    """Tensor operands have incompatible shapes."""


class NonFiniteValue(FlowSsmError):
    """A forward computation produced NaN or Inf."""


class NonFiniteGradient(NonFiniteValue):
    """A backward pass produced NaN or Inf."""


class NonFiniteLoss(NonFiniteValue):
    """An optimization loss became NaN or Inf."""


class DataError(FlowSsmError):
    """Input data violates a precondition (e.g. unnormalized meshes)."""


class ConnectivityMismatch(DataError):
    """Meshes were expected to share identical face connectivity but do not."""


class DegenerateLabels(DataError):
    """A classification task received labels from a single class."""


class ConvergenceWarning(UserWarning):
    """An iterative procedure stopped before reaching its tolerance."""


class DegenerateDataWarning(UserWarning):
    """Statistics were computed from degenerate data (e.g. identical rows)."""
