"""Extraction failures, one class per contract breach."""


class ExtractError(Exception):
    pass


class ContainerFormatError(ExtractError):
    pass


class TokenizerLoadFailure(ExtractError):
    pass


class ModelLoadFailure(ExtractError):
    pass


class WeightAccessFailure(ExtractError):
    pass


class SpanReconstructionMismatch(ExtractError):
    pass


class OutOfMemory(ExtractError):
    pass
