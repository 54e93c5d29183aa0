"""Collaborative assembly workbench: depth-based localization of unseen
components, operator classification, LLM-backed task planning, and a
simulated pick-and-place workcell."""

__version__ = "0.1.0"
