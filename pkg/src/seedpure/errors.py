"""Exception hierarchy shared across the package."""


class SeedPureError(Exception):
    pass


class ShapeError(SeedPureError, ValueError):
    """Tensor shapes or dimensions do not agree."""


class GeometryError(ShapeError):
    """Input geometry too small for a network or mismatched with a graph."""


class MissingWeightError(SeedPureError, KeyError):
    def __init__(self, name):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"missing weight parameter: {self.name}"


class FormatError(SeedPureError, ValueError):
    """Malformed binary or text container."""


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class DuplicateNameError(FormatError):
    pass


class UnsupportedFormatError(FormatError):
    pass


class MalformedHeaderError(FormatError):
    pass


class TrainingError(SeedPureError, ValueError):
    """A classifier cannot be fitted on the given data."""


class LeakageError(SeedPureError):
    """Test-set rows reached a fitting routine."""


class ConfigError(SeedPureError, ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
