"""Exception hierarchy shared by every msrnn module."""


class MsrnnError(Exception):
    """Base class for all library errors."""


class DimensionError(MsrnnError):
    """Tensor shapes incompatible with the requested operation."""


class ContractError(MsrnnError):
    """A caller violated a documented precondition."""


class VocabularyError(MsrnnError):
    """Token index outside the vocabulary."""


class NumericError(MsrnnError):
    """Value outside the numeric domain (non-finite result, sigma <= 0)."""


class DataError(MsrnnError):
    """Malformed, inconsistent or un-joinable data files."""


class CheckpointError(MsrnnError):
    """Corrupt or incompatible checkpoint file."""


class DivergenceError(MsrnnError):
    """Training produced a non-finite loss."""
