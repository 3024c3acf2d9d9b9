"""Deterministic seed derivation.

Replication r of an experiment (or the one fold-assignment redraw in
cross-validation) must be reproducible without generating seeds for
replications 0..r-1 first, so seeds are derived by an O(1) splitmix64-style
hash of (master seed, path) rather than by drawing from a shared stream.
"""

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(seed, *path):
    """64-bit seed for the stream addressed by (seed, *path)."""
    s = int(seed) & _MASK
    for step in path:
        s = _mix((s + (int(step) + 1) * _GAMMA) & _MASK)
    return s
