"""Post-hoc figure rendering from temsim run directories (CSV exports only)."""

__version__ = "0.1.0"

from .render import FIGURE_IDS, FigureSpec, SchemaError, render

__all__ = ["FIGURE_IDS", "FigureSpec", "SchemaError", "render"]
