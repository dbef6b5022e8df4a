"""satgate: turn-level user satisfaction prediction and clarification gating
for spoken dialogue logs, with a synthetic corpus generator, a weak-label
pipeline, a from-scratch transformer predictor, and offline A/B simulation."""

__version__ = "0.1.0"
