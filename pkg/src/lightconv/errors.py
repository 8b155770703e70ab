"""Exception types shared across the library."""


class ShapeError(ValueError):
    """Tensor or parameter shapes violate an operation's contract."""


class FormatError(ValueError):
    """A serialized artifact (tensor file, CSV table) is malformed."""


class GraphError(ValueError):
    """A block-graph document is invalid; the message names the offending node."""
