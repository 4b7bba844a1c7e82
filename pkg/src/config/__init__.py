from .loader import ConfigError, RunConfig, known_sections, load_config

__all__ = ["ConfigError", "RunConfig", "known_sections", "load_config"]
