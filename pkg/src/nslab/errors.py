class ConfigError(ValueError):
    """Invalid configuration or precondition on a run."""


class ShapeError(ValueError):
    """Array shapes or dimensions do not agree."""


class FeatureParseError(ValueError):
    def __init__(self, source: str, lineno: int, message: str):
        super().__init__(f"{source}:{lineno}: {message}")
        self.source = source
        self.lineno = lineno
