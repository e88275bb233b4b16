"""Exception hierarchy shared by every scmbench module."""


class ScmBenchError(Exception):
    """Base class for all errors raised by scmbench."""


class ConfigSyntaxError(ScmBenchError):
    """The configuration document could not be parsed."""


class ValidationError(ScmBenchError, ValueError):
    """A configuration value violates an invariant.

    ``path`` is the dotted location of the offending field, when known.
    """

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ConflictError(ValidationError):
    """Two mutually exclusive settings were both requested."""


class DomainError(ScmBenchError, ValueError):
    """An argument lies outside the domain of an operation."""


class ParamError(ScmBenchError, ValueError):
    """An operation received an invalid parameter."""


class NodeNotFound(ScmBenchError, KeyError):
    """A node id does not exist in the graph."""


class EmptyObservedError(ScmBenchError):
    """Every node is hidden, so nothing can be projected or released."""


class TableBudgetError(ScmBenchError, OverflowError):
    """A tabular mechanism would exceed the configured table budget."""


class InfeasibleError(ScmBenchError):
    """The requested model class cannot be constructed."""


class EmptyPosterior(ScmBenchError):
    """Conditioning or abduction selected no mass."""


class TooFewObserved(ScmBenchError):
    """Not enough observed variables to build the requested query."""


class QueryResamplingError(ScmBenchError):
    """Query resampling exhausted its retry budget without a defined value."""


class GridBudgetExceeded(ScmBenchError):
    """The cartesian input grid of a mechanism is larger than allowed."""


class NotDiscrete(ScmBenchError):
    """A discrete SCM was required."""


class NotMarkovian(ScmBenchError):
    """A causally sufficient (no hidden variables) SCM was required."""


class TooFewNodes(ScmBenchError):
    """The SCM has too few endogenous variables for the requested check."""


class DegenerateTable(ScmBenchError):
    """A contingency table has fewer than two non-empty rows or columns."""


class EstimatorNotFound(ScmBenchError):
    """The external estimator command cannot be resolved."""


class ProtocolError(ScmBenchError):
    """The estimator produced a malformed estimates file."""


class EstimatorTimeout(ScmBenchError):
    """The estimator did not finish within its time budget."""
