"""Exception hierarchy shared by every module.

Each error carries a stable ``code`` so the command line can print a
``code<TAB>message`` diagnostic without a lookup table.
"""


class DialmaskError(Exception):
    code = "DialmaskError"
    exit_code = 2


class LineCountMismatch(DialmaskError, ValueError):
    code = "LineCountMismatch"

    def __init__(self, src_count: int, tgt_count: int):
        super().__init__(f"source has {src_count} lines, target has {tgt_count} lines")
        self.src_count = src_count
        self.tgt_count = tgt_count


class MalformedBoundaries(DialmaskError, ValueError):
    code = "MalformedBoundaries"


class EmptyCorpus(DialmaskError, ValueError):
    code = "EmptyCorpus"


class CorpusTooShort(DialmaskError, ValueError):
    code = "CorpusTooShort"


class NoReplyAvailable(CorpusTooShort):
    code = "NoReplyAvailable"


class NoEligiblePositions(DialmaskError, ValueError):
    code = "NoEligiblePositions"


class EmptyInput(DialmaskError, ValueError):
    code = "EmptyInput"


class EmptyEvaluation(DialmaskError, ValueError):
    code = "EmptyEvaluation"


class UnknownSlot(DialmaskError, KeyError):
    code = "UnknownSlot"

    def __str__(self):
        return str(self.args[0]) if self.args else self.code


class DegenerateContext(DialmaskError, ValueError):
    code = "DegenerateContext"


class AllDegenerate(DialmaskError, ValueError):
    code = "AllDegenerate"


class NonFiniteLoss(DialmaskError, ArithmeticError):
    code = "NonFiniteLoss"
    exit_code = 3


class UnknownProbeWord(DialmaskError, KeyError):
    code = "UnknownProbeWord"

    def __str__(self):
        return str(self.args[0]) if self.args else self.code


class RecordError(DialmaskError, ValueError):
    """A serialized record or input file line could not be parsed."""

    code = "RecordError"

    def __init__(self, message: str, path=None, lineno=None):
        where = ""
        if path is not None:
            where = f"{path}:{lineno}: " if lineno is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.lineno = lineno


class ConfigError(DialmaskError, ValueError):
    code = "ConfigError"
