"""Figure rendering for sparselift benchmark CSVs."""

from .render import FigureSpec, SchemaError, plot_heatmap, plot_sweep, read_fit, read_summary

__version__ = "0.1.0"
