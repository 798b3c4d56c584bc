"""chatterkit - chatter detection featurizers and a transfer-learning harness for machining signals."""
__version__ = "0.1.0"
