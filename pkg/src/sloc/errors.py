"""Exception hierarchy. Every error carries a short machine-readable ``code``."""


class SlocError(Exception):
    code = "E_INPUT"


class DimensionMismatch(SlocError, ValueError):
    code = "E_DIMENSION"


class NotPsd(SlocError, ValueError):
    code = "E_NOT_PSD"


class SingularMatrix(SlocError, ValueError):
    code = "E_SINGULAR"


class SupportMismatch(SlocError, ValueError):
    code = "E_SUPPORT"


class AbsoluteContinuityViolation(SlocError, ValueError):
    code = "E_ABS_CONT"


class InvalidGeometry(SlocError, ValueError):
    code = "E_GEOMETRY"


class InvalidParameter(SlocError, ValueError):
    code = "E_PARAMETER"


class NonFiniteInput(SlocError, ValueError):
    code = "E_NONFINITE"


class EmptyPosterior(SlocError, RuntimeError):
    code = "E_EMPTY_POSTERIOR"


class InsufficientSamples(SlocError, ValueError):
    code = "E_SAMPLES"


class InsufficientPaths(SlocError, ValueError):
    code = "E_PATHS"


class StepTooLarge(SlocError, RuntimeError):
    code = "E_STEP"


class ParseError(SlocError, ValueError):
    code = "E_PARSE"
