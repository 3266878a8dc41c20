"""SIS contact process on vertex-updating scale-free evolving networks."""

__version__ = "0.1.0"
