"""Zero-temperature thermodynamic formalism on shift spaces."""

__version__ = "0.1.0"
