class ConfigurationError(Exception):
    """An error to be raised when a configuration value, shape, or extent does not
    satisfy the requirements of the component it is passed to."""

    pass


class DimensionError(ConfigurationError):
    """Tensor shapes that do not agree for the requested operation."""

    pass


class ContractError(Exception):
    """Input values violate an operation's precondition, e.g. probabilities outside
    [0, 1]."""

    pass


class UndefinedMetricError(Exception):
    """A metric is undefined for the given input, typically because a mask is empty."""

    pass


class DegenerateStatisticError(Exception):
    pass


class PhantomGenerationError(Exception):
    pass


class FormatError(Exception):
    """A VOL1 or CKPT1 file has a bad magic line, header, or checksum."""

    pass


class ManifestError(Exception):
    """Stored parameters do not match the parameters the model expects."""

    pass


class NumericalError(Exception):
    pass


class TrainingError(Exception):
    pass
