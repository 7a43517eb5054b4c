"""Whisper-to-normal speech conversion toolkit."""

__version__ = "0.1.0"
