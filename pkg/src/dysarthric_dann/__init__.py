"""Domain-adversarial and multi-task training for raw-waveform digit
recognition under a healthy-to-dysarthric domain shift."""

__version__ = "0.1.0"
