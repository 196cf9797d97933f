"""Exception hierarchy.

Every domain error carries a short machine-readable ``code`` so the command
line layer can report it without parsing messages.
"""


class WitnessKitError(ValueError):
    code = "domain_error"


class DimensionError(WitnessKitError):
    code = "bad_dimensions"


class InvalidStateError(WitnessKitError):
    code = "invalid_state"


class ParameterError(WitnessKitError):
    code = "bad_parameter"


class NoNPTWitnessError(WitnessKitError):
    code = "no_npt_witness"


class TrivialKernelError(WitnessKitError):
    code = "trivial_kernel"


class OptimizationError(WitnessKitError):
    code = "optimizer_failure"


class ThresholdError(WitnessKitError):
    code = "threshold_not_applicable"
