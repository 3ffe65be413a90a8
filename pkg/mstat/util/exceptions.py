class MstatError(Exception):
    """
    Base class for every error raised by mstat.
    ``exit_code`` is what the command line returns when the error escapes a command
    """
    exit_code = 1

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)

class ConfigError(MstatError):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)

class UsageError(MstatError):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)

class DimensionError(MstatError):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)

class EmptyInputError(MstatError):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)

class DegenerateInputError(MstatError):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)

class NonFiniteError(MstatError):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)

class DataContractError(MstatError):
    exit_code = 2

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)

class ManifestError(DataContractError):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)

class SamplerContractError(DataContractError):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)

class VerificationFailure(MstatError):
    exit_code = 3

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
