"""Exception hierarchy.

Every error carries a stable ``code`` (used in the CLI's machine-readable
error JSON) and the process exit status the CLI maps it to.
"""

EXIT_VALIDATION = 2
EXIT_RUNTIME = 3
EXIT_IO = 4


class BudgetModeError(Exception):
    code = "error"
    exit_status = EXIT_RUNTIME


class ValidationError(BudgetModeError, ValueError):
    code = "validation_error"
    exit_status = EXIT_VALIDATION

    def __init__(self, message, path=None):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class ParseError(BudgetModeError, ValueError):
    code = "parse_error"
    exit_status = EXIT_VALIDATION


class MalformedTrace(BudgetModeError, ValueError):
    code = "malformed_trace"
    exit_status = EXIT_VALIDATION


class UnknownToken(BudgetModeError, KeyError):
    code = "unknown_token"
    exit_status = EXIT_VALIDATION

    def __str__(self):
        return Exception.__str__(self)


class EmptyCorpus(BudgetModeError):
    code = "empty_corpus"


class GeneratorFailure(BudgetModeError):
    code = "generator_failure"


class OutOfGroupRange(BudgetModeError, ValueError):
    code = "out_of_group_range"


class LengthMismatch(BudgetModeError, ValueError):
    code = "length_mismatch"


class RolloutOverflow(BudgetModeError):
    code = "rollout_overflow"


class InvalidBaseline(BudgetModeError, ValueError):
    code = "invalid_baseline"
    exit_status = EXIT_VALIDATION


class RaggedOutcomes(BudgetModeError, ValueError):
    code = "ragged_outcomes"
    exit_status = EXIT_VALIDATION


class UnitMismatch(BudgetModeError, ValueError):
    code = "unit_mismatch"
    exit_status = EXIT_VALIDATION
