"""Exception hierarchy shared by the pipeline stages."""


class AgesigError(Exception):
    """Base class for all errors raised by agesig."""


class IngestError(AgesigError):
    """Fatal input problem: unreadable stream, bad schema, no usable rows."""


class CodeFormatError(AgesigError, ValueError):
    def __init__(self, raw: str):
        super().__init__(f"not an ICD-10 category code: {raw!r}")
        self.raw = raw


class EmptyCohortError(AgesigError, ValueError):
    pass


class EmptyInputError(AgesigError, ValueError):
    pass


class DegenerateElbow(AgesigError):
    """The dispersion curve has no knee (it is a straight line or flat)."""


class ZeroBandwidthError(AgesigError, ValueError):
    pass
