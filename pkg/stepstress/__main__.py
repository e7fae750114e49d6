"""
Entry point for running stepstress as a module: python -m stepstress
"""

from stepstress.cli.commands import app

if __name__ == "__main__":
    app()
