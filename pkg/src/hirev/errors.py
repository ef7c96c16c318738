"""Exception types raised across the package."""


class HirevError(Exception):
    """Base class for every error this package raises on purpose."""


# --- tensor engine ---------------------------------------------------------

class DimensionMismatch(HirevError):
    """Operand dimensions are incompatible (matmul inner dims, dense input, ...)."""


class ShapeMismatch(HirevError):
    """Operand shapes disagree where equality is required."""


class KernelLargerThanInput(HirevError):
    """Convolution/pooling window exceeds the spatial extent of its input."""


class NonPositiveStride(HirevError):
    """Stride must be a positive integer."""


class UnknownKind(HirevError):
    """Unrecognized op kind / mode selector string."""


class EmptyInput(HirevError):
    """Operation requires a nonempty input."""


class InvalidRate(HirevError):
    """Dropout rate outside [0, 1)."""


class NotOneHot(HirevError):
    """Cross-entropy target is not a one-hot vector."""


class NonScalarLoss(HirevError):
    """backward() requires a scalar loss recorded on the tape."""


# --- window tiler ----------------------------------------------------------

class WindowLargerThanImage(HirevError):
    """Sliding window does not fit inside the image."""


class NonSquareImage(HirevError):
    """Tiling expects square images."""


# --- layers / models -------------------------------------------------------

class InvalidConfig(HirevError):
    """Structural configuration is inconsistent."""


class EmptySequence(HirevError):
    """Encoder/decoder got an empty feature sequence."""


class IndexOutOfRange(HirevError):
    """Target label index outside the model's output range."""


# --- training / hierarchy --------------------------------------------------

class EmptyDataset(HirevError):
    """Training requires at least one sample."""


class LabelOutOfRange(HirevError):
    """Sample label outside the configured class/score range."""


class OutOfRange(HirevError):
    """Numeric argument outside its documented domain."""


# --- data pipeline ---------------------------------------------------------

class InvalidCounts(HirevError):
    """Generator counts must be n_classes >= 2 and per_score >= 1."""


class TooFewSamples(HirevError):
    """Not enough raw parents per cell to honor the split ratio."""


class DatasetIOError(HirevError):
    """Dataset pack could not be read or written."""


class CorruptManifest(HirevError):
    """Dataset pack failed checksum/consistency validation."""


# --- metrics ---------------------------------------------------------------

class InvalidK(HirevError):
    """top-k parameter outside [1, number of labels]."""


class ZeroBaseline(HirevError):
    """Improvement ratio needs a strictly positive baseline."""
