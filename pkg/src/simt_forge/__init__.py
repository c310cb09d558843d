"""simt-forge: a deterministic SIMT kernel simulator with shadow-memory
sanitization, edge coverage, and a snapshot-amortized, type-aware,
coverage-guided fuzzing loop."""

__version__ = "0.1.0"
