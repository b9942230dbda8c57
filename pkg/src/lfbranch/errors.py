"""Exception hierarchy.

``ValidationError`` marks bad user input (CLI exit code 2); ``DomainError``
marks inputs that are well formed but outside the region where the formulas
apply (CLI exit code 3).
"""


class ValidationError(ValueError):
    pass


class DomainError(ArithmeticError):
    pass


class PreconditionError(ValidationError):
    """A named construction precondition failed."""

    def __init__(self, check: str, detail: str = ""):
        self.check = check
        msg = f"precondition '{check}' failed"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class InsufficientRange(ValidationError):
    pass


class NonPositiveDtilde(DomainError):
    def __init__(self, k: int, value: float):
        self.k = k
        self.value = value
        super().__init__(f"d~_{k} = {value!r} <= 0; the A-matrix method does not apply")


class NoConvergence(DomainError):
    pass


class ZeroDelta(DomainError):
    def __init__(self, k: int, which: str):
        self.k = k
        self.which = which
        super().__init__(f"delta^{which}_{k} vanishes; consecutive ratio undefined")


class PopulationOverflow(DomainError):
    def __init__(self, run: int, n: int, size: int):
        self.run = run
        self.n = n
        super().__init__(f"run {run}: generation {n} reached {size} individuals")
