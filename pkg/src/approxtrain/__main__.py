"""
Entry point for running approxtrain as a module.

Usage:
    python -m approxtrain COMMAND [OPTIONS]
"""

from .cli import main

if __name__ == "__main__":
    main()
