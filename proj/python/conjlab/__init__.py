"""Similarity and conjugacy analysis of dynamical systems."""

from ._conjlab import *  # noqa: F401,F403
from ._conjlab import presets, schema_version, subcommands  # noqa: F401

__version__ = "0.1.0"
