"""Exception types shared across the package.

The CLI maps each class to a fixed process exit code.
"""


class HrsimError(Exception):
    exit_code = 1


class ValidationError(HrsimError, ValueError):
    exit_code = 2


class ResourceCapError(HrsimError, MemoryError):
    exit_code = 3


class ConvergenceError(HrsimError, RuntimeError):
    exit_code = 4
