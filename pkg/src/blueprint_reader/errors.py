"""Exception hierarchy shared by every pipeline stage."""


class BlueprintError(Exception):
    """Base class for all package errors."""


class UnsupportedFormat(BlueprintError):
    pass


class CorruptImage(BlueprintError):
    pass


class OutOfBounds(BlueprintError, ValueError):
    pass


class ZeroDimension(BlueprintError, ValueError):
    pass


class NoEnclosedRegions(BlueprintError):
    pass


class RulerNotFound(BlueprintError):
    pass


class NoLegibleSectors(BlueprintError):
    pass


class InconsistentSectors(BlueprintError):
    pass


class TemplateTooLarge(BlueprintError, ValueError):
    pass


class ManifestMissing(BlueprintError):
    pass


class DuplicateId(BlueprintError):
    pass


class MissingImage(BlueprintError):
    pass


class RecognizerUnavailable(BlueprintError):
    pass


class NotAnArea(BlueprintError, ValueError):
    pass


class InvalidSpec(BlueprintError, ValueError):
    pass


class ConfigError(BlueprintError, ValueError):
    pass
