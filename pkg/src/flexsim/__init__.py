"""Simulator and analysis toolkit for demand-response aggregation of small
refrigeration loads over lossy cellular links."""

__version__ = "0.1.0"
