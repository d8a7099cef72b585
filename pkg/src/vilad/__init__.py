"""Attention-distilled social costmaps, a dynamic-window planner, and a desk-scale simulator."""

__version__ = "0.1.0"
