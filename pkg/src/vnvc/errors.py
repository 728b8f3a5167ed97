"""Error taxonomy shared with the CLI exit codes."""


class InputError(ValueError):
    """Bad user input: missing files, malformed frames, invalid options (exit 2)."""


class MismatchError(ValueError):
    """Checkpoint/stream mismatch: wrong lambda, bad checksum, bad header (exit 3)."""
