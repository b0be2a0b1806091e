"""Natural-language driven OpenFOAM automation toolkit."""

__version__ = "0.1.0"
