"""Exception types raised across the calibration pipeline."""


class CalibrationError(Exception):
    """Base class for every error raised by this package."""


class OutOfFieldError(CalibrationError):
    """A ray lies outside the fisheye field of view."""


class NonInvertiblePointError(CalibrationError):
    """Kannala-Brandt polynomial inversion did not converge."""


class NoGroundVisibleError(CalibrationError):
    """The camera pose does not see any of the ground plane."""


class DegeneratePencilError(CalibrationError):
    """Line segments are mutually parallel; no vanishing point exists."""


class NotEnoughLanesError(CalibrationError):
    """Too few lane-marking candidates to run the requested stage."""


class DegenerateSegmentError(CalibrationError):
    """A projected lane segment has (near) zero length."""


class NoIntersectionError(CalibrationError):
    """A lane border does not cross a reference line on the plane."""


class DependencyOrderError(CalibrationError):
    """A stage was run before the stage it depends on."""


class FlatPatchError(CalibrationError):
    """A texture patch has (near) zero variance in some channel."""


class InsufficientOverlapError(CalibrationError):
    """Adjacent camera projections share no valid pixels in a RoI."""


class DatasetError(CalibrationError):
    """Dataset JSON does not follow the schema.

    ``pointer`` is the JSON pointer of the offending element.
    """

    def __init__(self, message: str, pointer: str = ""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


class CalibrationFailed(CalibrationError):
    """The pipeline could not produce a parameter set."""

    def __init__(self, stage: str, cause: Exception | str):
        super().__init__(f"calibration failed at stage '{stage}': {cause}")
        self.stage = stage
        self.cause = cause


class ConfigError(CalibrationError, ValueError):
    """A configuration value is missing, unknown or out of range."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"config field '{field_name}': {message}")
        self.field = field_name
