class GreenSDNError(Exception):
    pass


class InfeasibleError(GreenSDNError):
    """No capacity-respecting solution exists (or none was found, see ``proven``).

    ``flows`` holds the ids of the flows that could not be routed together,
    ``saturated_edges`` the edge indices that blocked the first failing flow.
    """

    def __init__(self, message, flows=(), saturated_edges=(), proven=True):
        super().__init__(message)
        self.flows = tuple(flows)
        self.saturated_edges = tuple(saturated_edges)
        self.proven = proven


class BudgetExhaustedError(GreenSDNError):
    """The search budget ran out before any feasible incumbent was found."""


class ConstraintViolationError(GreenSDNError, ValueError):
    def __init__(self, message, violations):
        super().__init__(message)
        self.violations = list(violations)


class InstanceParseError(GreenSDNError, ValueError):
    def __init__(self, message, line=None, column=None):
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + where)
        self.line = line
        self.column = column


class UnsupportedVersionError(InstanceParseError):
    pass
