"""Sciunit: capture, store, and re-execute computational experiments.

A sciunit is a named research object holding one or more container
versions of an audited program run.  Containers are path-mirrored
sandboxes archived deterministically and deduplicated in a shared
content-defined-chunk store; the captured provenance graph drives exact,
partial, and modified re-execution.
"""

__version__ = "0.1.0"

from .errors import SciunitError  # noqa: F401
