"""afgm: long-horizon multivariate forecasting.

Multi-scale patch encoding with a learned channel-interaction blend feeds a
frequency-gated state-space scan; everything (autodiff, optimizer, data
pipeline, CLI) is self-contained on top of numpy.
"""
__version__ = "0.1.0"
