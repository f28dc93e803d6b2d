"""Exception hierarchy shared by every module of the package."""


class ProxCausalError(Exception):
    """Base class for all package errors."""


class UnknownNode(ProxCausalError, KeyError):
    def __init__(self, node):
        super().__init__(node)
        self.node = node

    def __str__(self):
        return f"unknown node {self.node!r}"


class OverlappingSets(ProxCausalError, ValueError):
    pass


class CyclicGraph(ProxCausalError, ValueError):
    pass


class GraphFormatError(ProxCausalError, ValueError):
    pass


class InvalidLabeling(ProxCausalError, ValueError):
    pass


class InvalidSpec(ProxCausalError, ValueError):
    pass


class TooLarge(ProxCausalError, ValueError):
    pass


class EmptyData(ProxCausalError, ValueError):
    pass


class EmptyStratum(ProxCausalError, ValueError):
    """A conditioning cell has zero probability mass."""

    def __init__(self, stratum):
        super().__init__(stratum)
        self.stratum = dict(stratum)

    def __str__(self):
        cells = ", ".join(f"{k}={v}" for k, v in self.stratum.items())
        return f"empty stratum ({cells})"


class Singular(ProxCausalError, ArithmeticError):
    """P(W | Z, x) could not be inverted for treatment arm ``x``."""

    def __init__(self, x, detail=""):
        super().__init__(x, detail)
        self.x = x
        self.detail = detail

    def __str__(self):
        msg = f"P(W | Z, x={self.x}) is singular"
        return f"{msg}: {self.detail}" if self.detail else msg


class RankDeficient(ProxCausalError, ArithmeticError):
    pass


class ZeroTruth(ProxCausalError, ZeroDivisionError):
    pass


class ConfigError(ProxCausalError, ValueError):
    """Malformed configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(key, message)
        self.key = key
        self.message = message

    def __str__(self):
        return f"{self.key}: {self.message}"
