"""Gazetteer construction from geotagged photo records on a local MapReduce engine."""

__version__ = "0.1.0"
