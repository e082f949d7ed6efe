class VipkitError(Exception):
    """Base class for all errors raised by vipkit."""


class ParseError(VipkitError, ValueError):
    pass


class RangeError(VipkitError, ValueError):
    pass


class FormatError(VipkitError, ValueError):
    pass


class ParameterError(VipkitError, ValueError):
    pass


class PartitionError(VipkitError, ValueError):
    pass


class SamplingError(VipkitError, ValueError):
    pass


class ShapeError(VipkitError, ValueError):
    pass


class ConfigError(VipkitError, ValueError):
    pass
