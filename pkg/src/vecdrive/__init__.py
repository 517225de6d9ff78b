"""vecdrive: command-conditioned vectorized trajectory planning with a
rule-based maneuver oracle, ground-truth QA generation, and an open-loop
evaluation battery (displacement / collision / text quality / latency)."""

__version__ = "0.1.0"
