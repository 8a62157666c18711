"""Joint forecasting of multiple yield curves.

Dynamic Nelson-Siegel(-Svensson) benchmarks with Gaussian interval forecasts,
and an attention network that emits non-crossing (lower, central, upper)
forecasts, trained with a small reverse-mode autodiff engine.
"""

__version__ = "0.1.0"
