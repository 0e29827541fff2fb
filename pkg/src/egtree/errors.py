"""Exception types shared across the package."""


class RejectedInputError(ValueError):
    """An input value violates a documented domain precondition."""


class ContractViolationError(RuntimeError):
    """An API was driven out of its documented call order or state."""
