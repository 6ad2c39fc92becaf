"""semnav: semantic spatial mapping and target-driven navigation at desk scale."""

__version__ = "0.1.0"
