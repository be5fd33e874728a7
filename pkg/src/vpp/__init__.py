"""Visual position prompts for grounding: geometry, axis prompts, toy model, evaluation."""

__version__ = "0.1.0"
