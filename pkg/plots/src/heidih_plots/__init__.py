"""Render heidih study CSVs (errors/rates/timing/surfaces) into figures.

Consumes only the documented CSV contract of the simulator; never imports
or invokes it.
"""

from .figures import MissingColumnError, PlotJob, plot_loglog, plot_surface, plot_timing, render

__all__ = [
    "MissingColumnError",
    "PlotJob",
    "plot_loglog",
    "plot_surface",
    "plot_timing",
    "render",
]
