"""Extremely negatively dependent sequences and dependence-uncertainty risk bounds."""

__version__ = "0.1.0"
