"""Exception hierarchy shared across the pipeline.

Every error carries an ``error_class`` used by the service layer to pick an
HTTP status and by the CLI to pick an exit code:

    validation -> 2, missing_input -> 3, endpoint -> 4, internal -> 5
"""

from __future__ import annotations


class MutaprobeError(Exception):
    error_class = "internal"


class ValidationError(MutaprobeError):
    error_class = "validation"


class MissingInputError(MutaprobeError):
    error_class = "missing_input"


class EndpointError(MutaprobeError):
    error_class = "endpoint"


# corpus
class MalformedRecord(ValidationError):
    def __init__(self, detail: str, line_number: int | None = None):
        loc = f" at line {line_number}" if line_number is not None else ""
        super().__init__(f"malformed record{loc}: {detail}")
        self.detail = detail
        self.line_number = line_number


class MissingField(ValidationError):
    def __init__(self, field: str, line_number: int):
        super().__init__(f"missing field {field!r} at line {line_number}")
        self.field = field
        self.line_number = line_number


class DuplicateTaskId(ValidationError):
    def __init__(self, task_id: str, line_number: int):
        super().__init__(f"duplicate task_id {task_id!r} at line {line_number}")
        self.task_id = task_id
        self.line_number = line_number


class MissingTokenization(ValidationError):
    def __init__(self, task_id: str):
        super().__init__(f"no tokenization for task {task_id!r}")
        self.task_id = task_id


# mutator
class TableRequired(ValidationError):
    pass


class IneligibleToken(ValidationError):
    pass


class UnknownToken(ValidationError):
    pass


class EmptyNeighborhood(ValidationError):
    pass


# stats
class EmptyInput(ValidationError):
    pass


class SingleClass(ValidationError):
    pass


# runner
class EndpointUnreachable(EndpointError):
    pass


class ModelUnknown(EndpointError):
    pass


class ContextOverflow(EndpointError):
    pass


class GenerationError(EndpointError):
    pass


class SandboxSetupFailure(MutaprobeError):
    pass


class OracleTimeout(MutaprobeError):
    pass


# analysis
class NoOriginals(ValidationError):
    pass


class MissingOriginal(ValidationError):
    def __init__(self, task_id: str, model_id: str):
        super().__init__(f"mutant of task {task_id!r} has no original record for model {model_id!r}")
        self.task_id = task_id
        self.model_id = model_id


# probe
class MissingActivation(MissingInputError):
    def __init__(self, prompt_key: str):
        super().__init__(f"no activation set for prompt {prompt_key!r}")
        self.prompt_key = prompt_key


class DegenerateStratification(ValidationError):
    pass


class InsufficientCells(ValidationError):
    pass


class NonConvergence(MutaprobeError):
    pass


class UnknownCwe(ValidationError):
    pass


# tensor container / artifacts
class ContainerFormatError(ValidationError):
    pass


class OutputLocked(ValidationError):
    pass
