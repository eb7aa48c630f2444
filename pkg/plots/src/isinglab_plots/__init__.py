"""Figure renderer for isinglab CSV artifacts."""

__version__ = "0.1.0"

from .figures import (FIGURE_KINDS, FigureDataError, FigureSpec,
                      RenderResult, render)

__all__ = ["__version__", "FIGURE_KINDS", "FigureDataError", "FigureSpec",
           "RenderResult", "render"]
