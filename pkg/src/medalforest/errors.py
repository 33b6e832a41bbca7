"""Exception hierarchy.

Errors split into two families so the command line can map them to exit
codes: :class:`DataError` (I/O and schema problems, exit 2) and
:class:`ModelError` (domain problems, exit 1).
"""


class MedalForestError(Exception):
    """Base class for every error raised by this package."""


class DataError(MedalForestError):
    """Input files are missing or malformed."""


class ModelError(MedalForestError):
    """A domain precondition does not hold."""


class MissingFile(DataError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"MissingFile: {name}")


class SchemaViolation(DataError):
    def __init__(self, file, line, detail=""):
        self.file = file
        self.line = line
        msg = f"SchemaViolation: {file}:{line}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class DuplicateKey(DataError):
    def __init__(self, nation, year, file=None):
        self.nation = nation
        self.year = year
        where = f" in {file}" if file else ""
        super().__init__(f"DuplicateKey: ({nation}, {year}){where}")


class UnknownEntity(ModelError):
    pass


class ShareSumViolation(ModelError):
    pass


class TooFewPoints(ModelError):
    pass


class EmptySeries(ModelError):
    pass


class RuleNotApplicable(ModelError):
    """Linear-trend extrapolation preconditions fail; fall back to constant."""


class EmptyRegion(ModelError):
    pass


class UnknownCategory(ModelError):
    pass


class UnfilledCell(ModelError):
    pass


class ShapeMismatch(ModelError):
    pass


class EmptyInput(ModelError):
    pass


class FeatureOutOfRange(ModelError):
    pass


class DegenerateTargets(ModelError):
    pass


class ZeroSum(ModelError):
    pass


class GateClosed(ModelError):
    pass


class IndivisibleForest(ModelError):
    pass


class MissingNodeCounts(ModelError):
    pass


class TooManyFeatures(ModelError):
    pass


class LeakageDetected(ModelError):
    pass


class InsufficientHistory(ModelError):
    pass


class KeyMismatch(ModelError):
    pass


class TooFewNations(ModelError):
    pass


class MissingCounterfactualColumn(ModelError):
    pass


class UnknownNation(ModelError):
    pass
