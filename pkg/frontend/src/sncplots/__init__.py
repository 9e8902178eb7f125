"""Figure rendering for the tandem-bounds experiment CSVs."""

from .figures import (
    NAMED_FIGURES,
    FigureSpec,
    PlotError,
    fig4,
    fig5,
    fig6,
    fig7,
    fig8,
    read_rows,
    render,
)

__version__ = "0.1.0"
