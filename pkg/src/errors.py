"""
Error Types
Exception hierarchy shared by every stage of the sepsis pipeline
"""

from typing import Optional


class SepsisPipelineError(Exception):
    """Base class for all pipeline errors (main.py turns these into exit code 1)"""


class ParseError(SepsisPipelineError):
    """
    Malformed pipe-separated input

    Args:
        message: What went wrong
        line: 1-based line number in the source file (header is line 1)
        filename: Source file name, when known
    """

    def __init__(self, message: str, line: Optional[int] = None,
                 filename: Optional[str] = None):
        self.line = line
        self.filename = filename
        location = ""
        if filename:
            location += f"{filename}"
        if line is not None:
            location += f"{':' if filename else 'line '}{line}"
        super().__init__(f"{location}: {message}" if location else message)


class SchemaError(ParseError):
    """Header does not describe the expected columns"""


class ContractError(SepsisPipelineError, ValueError):
    """A documented precondition was violated by the caller"""


class MetricError(SepsisPipelineError):
    """Metric is undefined for the given input (e.g. a single class)"""


class CheckpointError(SepsisPipelineError):
    """Checkpoint file is malformed or has an unsupported version"""


class TrainingError(SepsisPipelineError):
    """Training cannot proceed (empty data, non-finite loss)"""


class MissingVariableWarning(UserWarning):
    """A numeric variable had no observed value in the training split"""
