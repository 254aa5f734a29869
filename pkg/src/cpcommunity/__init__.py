"""Contact process on community random graphs: simulation and checks."""

__version__ = "0.1.0"
