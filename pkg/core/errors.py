"""core.errors

Exception hierarchy for the pipeline.

Every error carries the structured fields callers need (line numbers, indices,
keys) so the CLI can print a one-line diagnostic and tests can assert on them.
"""

from __future__ import annotations

from typing import Any, Tuple


class FPGuardError(RuntimeError):
    """Base class for every pipeline error."""


class ConfigError(FPGuardError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


# -- bytelog / traces -------------------------------------------------------


class MalformedRecord(FPGuardError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class SchemaError(FPGuardError):
    def __init__(self, index: int, field: str):
        super().__init__(f"trace object {index}: missing or mistyped field {field!r}")
        self.index = index
        self.field = field


# -- dataset ----------------------------------------------------------------


class DuplicateVerdictKey(FPGuardError):
    def __init__(self, key: Tuple[str, int, str]):
        super().__init__(f"two verdicts share the key {key!r}")
        self.key = key


class InsufficientClass(FPGuardError):
    def __init__(self, label: str):
        super().__init__(f"no examples of class {label}")
        self.label = label


class SplitLeakage(FPGuardError):
    def __init__(self, count: int):
        super().__init__(f"{count} token sequences appear in both train and test")
        self.count = count


# -- embeddings / numerics --------------------------------------------------


class EmptyCorpus(FPGuardError):
    pass


class EmptySequence(FPGuardError):
    pass


class ShapeMismatch(FPGuardError):
    pass


class NonFiniteValue(FPGuardError):
    def __init__(self, op: str):
        super().__init__(f"non-finite value produced by {op}")
        self.op = op


class OddDimension(FPGuardError):
    def __init__(self, dim: int):
        super().__init__(f"positional encoding needs an even dimension, got {dim}")
        self.dim = dim


class UnknownTokenID(FPGuardError):
    def __init__(self, token_id: int, vocab_size: int):
        super().__init__(f"token id {token_id} outside vocabulary of size {vocab_size}")
        self.token_id = token_id
        self.vocab_size = vocab_size


class EmptyDataset(FPGuardError):
    pass


# -- forest / metrics -------------------------------------------------------


class SingleClass(FPGuardError):
    pass


class DimensionMismatch(FPGuardError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"expected {expected} features, got {got}")
        self.expected = expected
        self.got = got


class LengthMismatch(FPGuardError):
    def __init__(self, a: int, b: int):
        super().__init__(f"length mismatch: {a} labels vs {b} predictions")
        self.a = a
        self.b = b


class NoPositives(FPGuardError):
    pass


# -- syngen -----------------------------------------------------------------


class InvalidSpec(FPGuardError):
    def __init__(self, reason: Any):
        super().__init__(str(reason))
        self.reason = str(reason)
