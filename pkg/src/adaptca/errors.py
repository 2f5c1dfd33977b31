class ConfigError(ValueError):
    """Invalid configuration or arguments; ``key`` names the offending setting."""

    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class FormatError(ValueError):
    """Malformed input file. ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        super().__init__(f"{message} (at byte {offset})" if offset is not None else message)
