"""Exception hierarchy shared across the package.

Every error carries a stable ``category`` token so the CLI can emit a
single machine-parsable line on failure.
"""


class GadError(Exception):
    category = "error"


class MalformedGraphError(GadError):
    category = "malformed-graph"


class ParseError(GadError):
    category = "parse-error"


class ShapeError(GadError):
    category = "shape-error"


class RankError(GadError):
    category = "rank-error"


class LabelError(GadError):
    category = "label-error"


class MetricError(GadError):
    category = "metric-error"


class ConfigError(GadError):
    category = "config-error"


class SynthSpecError(GadError):
    category = "spec-error"


class ModelFileError(GadError):
    category = "model-file-error"


class ProbeError(GadError):
    category = "probe-error"


class TrainingError(GadError):
    category = "training-error"
