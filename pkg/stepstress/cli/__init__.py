"""CLI module for stepstress."""
