"""Exception types shared across the pipeline.

The CLI maps these onto process exit codes (config 2, data 3, numeric 4).
"""


class LesionPipeError(Exception):
    exit_code = 1


class ConfigError(LesionPipeError, ValueError):
    exit_code = 2


class DataError(LesionPipeError, ValueError):
    exit_code = 3


class NumericError(LesionPipeError, ArithmeticError):
    exit_code = 4


class StageError(LesionPipeError):
    """A pipeline stage failed; carries the stage name and the offending image id."""

    def __init__(self, stage, image_id, cause):
        self.stage = stage
        self.image_id = image_id
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
        where = f" (image {image_id})" if image_id is not None else ""
        super().__init__(f"stage '{stage}' failed{where}: {cause}")
