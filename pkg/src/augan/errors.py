"""Exception types shared across the package."""


class AuganError(Exception):
    """Base class for every error raised by augan."""


class ContractError(AuganError, ValueError):
    """A precondition on an argument was violated."""


class ShapeError(ContractError):
    """Operand shapes do not conform to an operation's shape rule."""

    def __init__(self, kind, *shapes, detail=""):
        self.kind = kind
        self.shapes = tuple(tuple(s) for s in shapes)
        msg = f"{kind}: incompatible shapes " + " vs ".join(str(s) for s in self.shapes)
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NumericalError(AuganError, ArithmeticError):
    """A computation produced NaN or Inf."""

    def __init__(self, message, node_id=None):
        self.node_id = node_id
        if node_id is not None:
            message = f"{message} [node {node_id}]"
        super().__init__(message)


class FormatError(AuganError, ValueError):
    """A binary file does not follow its declared layout."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} at byte offset {offset}"
        super().__init__(message)


class ConfigError(AuganError, ValueError):
    """A configuration document failed validation."""

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class TrainingDiverged(NumericalError):
    """A training step produced a non-finite loss or parameter."""

    def __init__(self, step, losses):
        self.step = step
        self.losses = dict(losses)
        parts = ", ".join(f"{k}={v!r}" for k, v in self.losses.items())
        super().__init__(f"training diverged at step {step}: {parts}")
