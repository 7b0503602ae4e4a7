"""Reduced-basis toolkit for parametrized advection-reaction transport in
ultraweak normal-equation form."""

__version__ = "0.1.0"

from uwrom import fem, flow, mesh, rom, studies, transport  # noqa: F401
