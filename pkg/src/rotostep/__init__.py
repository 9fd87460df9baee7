"""Space-time finite element solver for eddy currents in rotating machines."""

__version__ = "0.1.0"
