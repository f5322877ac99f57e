"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A scenario, bound or experiment setting is out of range."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ContractError(ValueError):
    """A caller violated a function precondition."""


class SimulationStateError(RuntimeError):
    """A simulator session was used after it terminated."""


class ProtocolError(RuntimeError):
    """The ask/tell protocol of a search state machine was broken."""


class TrainingError(RuntimeError):
    """Value learning produced a non-finite loss."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
