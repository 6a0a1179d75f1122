"""High-frequency attentive super-resolved gaze estimation on a numpy autodiff core."""

__version__ = "0.1.0"
