"""
Exception base for approxtrain.

Concrete errors are defined next to the code that raises them and all
derive from ApproxTrainError so the CLI can map them to exit codes.
"""


class ApproxTrainError(Exception):
    """Base class for all approxtrain failures."""

    pass
