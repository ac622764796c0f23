"""Jump-start Q-learning anchor selection for UWB TDoA indoor localization (simulation)."""

__version__ = "0.1.0"
