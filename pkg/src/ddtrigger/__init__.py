"""Data-driven event- and self-triggered control design toolkit."""
