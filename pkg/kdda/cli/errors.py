# kdda/cli/errors.py

class InvalidConfigError(ValueError):
    """Custom exception for experiment configuration and argument errors."""
    pass
