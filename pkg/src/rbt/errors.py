"""Exception hierarchy shared across the pipeline.

Three base classes mirror the CLI exit-code classes: configuration
problems (exit 2), data problems (exit 3), and wire-protocol problems
(exit 4).
"""


class RbtError(Exception):
    exit_code = 1


class ConfigError(RbtError):
    exit_code = 2


class DataError(RbtError):
    exit_code = 3


class ProtocolError(RbtError):
    exit_code = 4


# glossary
class MalformedFile(DataError):
    pass


class DuplicatePhrase(DataError):
    pass


class OverlappingBands(DataError):
    pass


class UnknownGroupMember(DataError):
    pass


class BoundNotOnBandEdge(DataError):
    pass


class EmptyRange(DataError):
    pass


# snl
class UnknownPhrase(DataError):
    def __init__(self, message, span=None):
        super().__init__(message)
        self.span = span


class AmbiguousConnectives(DataError):
    def __init__(self, message, span=None):
        super().__init__(message)
        self.span = span


class EmptyPrecondition(DataError):
    pass


class EmptyPostcondition(DataError):
    pass


# morpho
class NoForeground(DataError):
    pass


class ValueOutsideAllBands(DataError):
    pass


# scenegraph
class UnresolvablePhraseSlot(DataError):
    pass


class MalformedSceneGraph(DataError):
    pass


# labeling
class ConflictingBandTerms(DataError):
    pass


class UnknownTermId(DataError):
    pass


class LabelingFailed(DataError):
    """Raised when more than the tolerated fraction of inputs fail to label."""


# taxonomy
class UnknownLabel(DataError):
    pass


class CyclicTaxonomy(DataError):
    pass


# oracle
class SchemaMismatch(DataError):
    pass


class UnknownTaxonomyRoot(DataError):
    pass


# metrics
class EmptyDistribution(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class TooFewSamples(DataError):
    pass


class EmptyInputs(DataError):
    pass


class ProviderFailure(DataError):
    def __init__(self, message, term=None, input_ref=None):
        super().__init__(message)
        self.term = term
        self.input_ref = input_ref


# harness / protocol
class GeneratorExhausted(DataError):
    pass


class ProtocolViolation(ProtocolError):
    pass


class MutCrashed(ProtocolError):
    def __init__(self, message, stderr=""):
        super().__init__(message)
        self.stderr = stderr


class AdapterTimeout(ProtocolError):
    pass
