class MpssmError(Exception):
    """
    Base class for every error raised by mpssm.
    """

    pass


class GraphError(MpssmError):
    """
    Thrown if a graph violates its invariants (self-loops, out-of-range nodes, malformed files)
    or if an operation needs a property the graph does not have, such as connectivity.
    """

    pass


class GraphGenerationError(GraphError):
    """
    Thrown if a random generator exhausts its resampling budget without producing a graph
    that satisfies the requested constraints.
    """

    pass


class DatasetError(MpssmError):
    """
    Thrown for invalid dataset parameters or malformed dataset and checkpoint records.
    """

    pass


class EmptySplitError(DatasetError):
    """
    Thrown if training or evaluation is asked to run on a split with no records.
    """

    pass


class LinalgError(MpssmError):
    pass


class NotSymmetricError(LinalgError):
    """
    Thrown if the symmetric eigensolver receives a matrix that is not symmetric.
    """

    pass


class ConvergenceError(LinalgError):
    """
    Thrown if an iterative solver does not converge within its sweep budget.
    """

    pass


class DefectiveMatrixError(LinalgError):
    """
    Thrown if a matrix is too close to defective to be diagonalised reliably. Callers should
    fall back to the sequential implementation.
    """

    pass


class DimensionError(MpssmError):
    """
    Thrown if array shapes passed to a model operation do not chain together.
    """

    pass


class MemoryBudgetError(MpssmError):
    """
    Thrown if the parallel scan would materialise more memory than allowed.
    """

    pass


class TapeError(MpssmError):
    """
    Thrown if a gradient tape is replayed or differentiated against a model it was not
    recorded from.
    """

    pass


class NonFiniteGradientError(MpssmError):
    """
    Thrown by the optimizer if a gradient contains NaN or infinite entries.
    """

    pass


class DivergenceError(MpssmError):
    """
    Thrown if the training loss becomes non-finite.
    """

    def __init__(self, epoch, loss):
        super().__init__("training diverged at epoch {} (loss={})".format(epoch, loss))
        self.epoch = epoch
        self.loss = loss


class ConfigError(MpssmError):
    """
    Thrown for unknown configuration keys or values that cannot be used.
    """

    pass


class UsageError(MpssmError):
    pass


class VerificationError(MpssmError):
    """
    Thrown if one or more checks of the verification suite fail.
    """

    def __init__(self, failed):
        super().__init__("verification failed: {}".format(", ".join(failed)))
        self.failed = list(failed)
