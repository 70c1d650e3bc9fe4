"""Text-to-layout synthesis: layout DSL, geometry, rewards, and the generation pipeline."""

__version__ = "0.1.0"
