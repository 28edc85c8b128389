"""Sentiment classification for Romanized Tunisian (TUNIZI) social-media comments."""

__version__ = "0.1.0"
