"""Exception types.

Everything derives from :class:`DataError`; the CLI maps those to exit code 2.
"""


class DataError(Exception):
    pass


class EmptyRoi(DataError):
    pass


class InsufficientArea(DataError):
    pass


class DegenerateDirection(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class UnknownOp(DataError):
    pass


class NoMixers(DataError):
    pass


class SingleClass(DataError):
    pass


class ZeroVariance(DataError):
    pass


class LengthMismatch(DataError):
    pass


class TooFewDomains(DataError):
    pass


class EmptyList(DataError):
    pass


class MissingPair(DataError):
    pass
