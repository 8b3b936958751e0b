"""Focused crawling of the live and archived web for event collections."""

__version__ = "0.1.0"
