"""Exception hierarchy shared across the audit workbench."""


class AuditBenchError(Exception):
    """Base class for all workbench errors."""


class SchemaError(AuditBenchError):
    pass


class MissingColumn(AuditBenchError):
    pass


class BadLabel(AuditBenchError):
    pass


class EmptyFile(AuditBenchError):
    pass


class DegenerateSplit(AuditBenchError):
    pass


class EmptyTable(AuditBenchError):
    pass


class NonPositiveL2(AuditBenchError):
    pass


class TooFewRows(AuditBenchError):
    pass


class PredictionsAbsent(AuditBenchError):
    pass


class EmptyGroup(AuditBenchError):
    pass


class UndefinedRate(AuditBenchError):
    """A rate denominator is zero (or below one after noise), so the metric is not computable."""


class TooManyDegenerate(AuditBenchError):
    pass


class NonPositiveEpsilon(AuditBenchError):
    pass


class EmptyResult(AuditBenchError):
    pass


class UnknownFeature(AuditBenchError):
    pass


class NoPositivePredictions(AuditBenchError):
    pass


class InvalidInterval(AuditBenchError):
    pass


class EmptyValues(AuditBenchError):
    pass


class ConfigError(AuditBenchError):
    """Invalid experiment configuration. ``diagnostics`` lists every violation found."""

    def __init__(self, diagnostics):
        if isinstance(diagnostics, str):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class MixedConfigs(AuditBenchError):
    pass


class MissingResults(AuditBenchError):
    pass
