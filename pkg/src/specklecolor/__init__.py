"""Color imaging through scattering media with triple-correlation phase retrieval."""

__version__ = "0.1.0"
