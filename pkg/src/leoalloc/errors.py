class InfeasibleError(RuntimeError):
    """No point satisfies the constraints of the problem being solved.

    ``report`` optionally carries the solver's diagnostics at the point of
    failure.
    """

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report
