"""Exception hierarchy shared by every stage."""

from __future__ import annotations


class AceForgeError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(AceForgeError):
    """Invalid or inconsistent configuration (usage error)."""


class ToolchainError(AceForgeError):
    """A required external program (TeX engine, rasterizer) is unavailable."""


class SynthesisError(AceForgeError):
    def __init__(self, message: str, diagnostics: list | None = None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class RenderError(AceForgeError):
    def __init__(self, message: str, output: str = ""):
        super().__init__(message)
        self.output = output


class ManifestError(AceForgeError):
    """Malformed, duplicate or already-split manifest."""


class EvaluationError(AceForgeError):
    def __init__(self, message: str, missing: list[str] | None = None):
        super().__init__(message)
        self.missing = list(missing or [])


class PipelineError(AceForgeError):
    def __init__(self, stage: str, message: str):
        super().__init__("%s: %s" % (stage, message))
        self.stage = stage
