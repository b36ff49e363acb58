class HermesError(Exception):
    """Base class for simulator errors."""


class ConfigurationError(HermesError, ValueError):
    """Invalid mesh, variant, traffic or experiment parameters."""


class FaultInjectionError(HermesError):
    """A fault set could not be generated under the requested constraints."""

    def __init__(self, message: str, seed: int | None = None):
        self.seed = seed
        if seed is not None:
            message = f"{message} (seed={seed})"
        super().__init__(message)


class TraceLoadError(HermesError):
    """A trace file failed validation."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class ProtocolError(HermesError):
    """The reconfiguration protocol broke one of its own rules."""


class RoutingError(HermesError):
    """A routing function was called outside its contract."""


class UnreachableDestination(RoutingError):
    def __init__(self, node: int, dst: int):
        self.node = node
        self.dst = dst
        super().__init__(f"destination {dst} unreachable from node {node}")


class DeadlockDetected(HermesError):
    """Raised when the watchdog finds flits that stopped making progress."""

    def __init__(self, report):
        self.report = report
        super().__init__(str(report))
