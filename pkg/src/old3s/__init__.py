"""Online learning over doubly-streaming data: sample stream plus evolving
feature space, handled with variational feature reconstruction, elastic-depth
classifiers, and an exponential-experts blend of old and new models."""

__version__ = "0.1.0"
