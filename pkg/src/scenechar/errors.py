"""Exception hierarchy.

Errors are grouped by how the CLI reports them: configuration problems exit
with status 1, bad or missing data with status 2, and broken internal
invariants with status 3.
"""


class SceneCharError(Exception):
    exit_code = 3


class ConfigError(SceneCharError, ValueError):
    exit_code = 1


class DataError(SceneCharError):
    exit_code = 2


class InvariantError(SceneCharError):
    exit_code = 3


# glyph rendering
class MissingCategory(ConfigError):
    pass


class UnloadableFont(ConfigError):
    pass


class ContrastUnsatisfiable(ConfigError):
    pass


class GlyphMissing(DataError):
    pass


# augmentation
class DegenerateQuad(InvariantError):
    pass


class SingularTransform(InvariantError, ValueError):
    pass


class PatchTooSmall(DataError):
    pass


# dataset io
class IoFailure(DataError):
    pass


class ParseError(DataError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class MissingImage(DataError):
    pass


class NonArtificialRecord(DataError):
    pass


class UnknownLabel(DataError):
    pass


class EmptyDataset(DataError):
    pass


class VocabularyMismatch(DataError):
    pass


# nn
class ShapeMismatch(InvariantError, ValueError):
    pass


class LabelOutOfRange(DataError, ValueError):
    pass


class SpatialUnderflow(ConfigError):
    pass
