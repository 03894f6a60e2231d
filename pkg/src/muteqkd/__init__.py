"""Event-level simulator and key-rate analyzer for dead-time-matched
muting attacks on gated-SPAD BB84 receivers."""

__version__ = "0.1.0"
