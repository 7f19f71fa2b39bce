"""Exception types shared across the toolkit."""


class AngeronaError(Exception):
    """Base class for all toolkit errors."""


class ParseError(AngeronaError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        self.msg, self.line, self.col = msg, line, col
        super().__init__(f"{line}:{col}: {msg}" if line else msg)


class ValidationError(AngeronaError):
    pass


class NegativeCycle(AngeronaError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("cycle through negation: " + " -> ".join(map(str, self.cycle)))


class TooManyWorlds(AngeronaError):
    def __init__(self, count: int, limit: int):
        self.count, self.limit = count, limit
        super().__init__(f"{count} probabilistic atoms exceed the world limit {limit} "
                         "(set ANGERONA_WORLD_LIMIT to raise it)")


class ZeroEvidence(AngeronaError):
    def __init__(self, msg: str = "evidence has probability zero"):
        super().__init__(msg)


class CycleBudgetExceeded(AngeronaError):
    pass


class NotAcyclic(AngeronaError):
    pass


class NotPolytree(AngeronaError):
    pass


class CompileError(AngeronaError):
    """Internal compiler error: a CPT invariant the acyclicity witness should
    have guaranteed does not hold."""


class NotNF(AngeronaError):
    def __init__(self, condition: int, msg: str):
        self.condition = condition
        super().__init__(f"not in normal form (condition {condition}): {msg}")
