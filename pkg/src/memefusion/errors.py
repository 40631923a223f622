"""Exception types mapped to CLI exit codes (2 input, 3 compatibility)."""


class InputError(ValueError):
    """Bad user input: missing files, malformed manifests or configs, undecodable images."""

    exit_code = 2


class CompatibilityError(ValueError):
    """Checkpoint, vocabulary, and config disagree."""

    exit_code = 3
