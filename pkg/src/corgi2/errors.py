"""Exception hierarchy shared by all corgi2 modules."""


class Corgi2Error(Exception):
    """Base class for all errors raised by this package."""


class ContractError(Corgi2Error):
    """A caller violated a documented precondition."""


class DimensionError(ContractError):
    """Record payloads or store geometry do not line up."""


class EmptyStoreError(ContractError):
    """A store with zero records was requested."""


class BlockNotFoundError(Corgi2Error):
    """A block id does not exist in the store."""


class PhaseError(ContractError):
    """An offline-phase storage operation was attempted after the
    ledger switched to the online (training) phase."""


class StoreFormatError(Corgi2Error):
    """On-disk store is malformed: bad magic, bad version, or truncation."""


class DivergenceError(Corgi2Error):
    """SGD iterate became non-finite or left the guard region.

    Carries the 0-based round index at which the guard tripped.
    """

    def __init__(self, message, round_index):
        super().__init__(message)
        self.round_index = round_index


class UndefinedRatioError(ContractError):
    """Variance-reduction ratio requested for a dataset with zero
    blockwise-variance parameter."""


class InsufficientDataError(ContractError):
    """Too few rounds to fit a convergence-rate slope."""


class ConfigError(Corgi2Error):
    """Experiment config file failed validation; message names the field."""
