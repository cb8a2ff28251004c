"""Figure rendering for skynoma Monte Carlo results."""

from .figures import FIGURE_KINDS, FigureSpec, RenderError, RenderResult, render

__version__ = "0.1.0"
