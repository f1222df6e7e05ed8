"""One-shot neural stylization worker consuming agarsynth bridge job files."""

__version__ = "0.1.0"
