"""Crash-report enhancement toolchain: stack traces, call-graph context, chat
models, and the evaluation harness that scores the results."""

__version__ = "0.1.0"
