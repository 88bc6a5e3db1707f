"""Reusable package-level exceptions."""


class InputDomainError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class AssignmentError(ValueError):
    pass


class CheckpointFormatError(ValueError):
    pass


class ModelIntegrityError(ValueError):
    def __init__(self, tensor_name, message=None):
        self.tensor_name = tensor_name
        if message is None:
            message = f"Tensor {tensor_name} does not match the model config"
        super().__init__(message)


class NumericError(ArithmeticError):
    pass


class NumericOverflowError(NumericError):
    def __init__(self, block_index, message=None):
        self.block_index = block_index
        if message is None:
            message = (
                f"Non-finite values produced in attention block {block_index}"
            )
        super().__init__(message)


class TrainingError(NumericError):
    def __init__(self, epoch, message=None):
        self.epoch = epoch
        if message is None:
            message = f"Training diverged (non-finite loss) at epoch {epoch}"
        super().__init__(message)


class EvaluationError(Exception):
    """Wraps a failure raised while evaluating a model variant.

    :param context: What was being evaluated, e.g. ``{"candidate": 4}`` or
                    ``{"block": "input", "bits": 8}``.
    :type context: dict

    """

    def __init__(self, context, cause=None):
        self.context = dict(context)
        self.cause = cause
        where = ", ".join(f"{k}={v}" for k, v in self.context.items())
        super().__init__(f"Evaluation failed ({where}): {cause}")


class InfeasibleSearchError(Exception):
    def __init__(self, trace, message=None):
        self.trace = trace
        if message is None:
            message = (
                "No candidate (including the full-precision baseline) meets "
                "the performance and memory constraints"
            )
        super().__init__(message)
