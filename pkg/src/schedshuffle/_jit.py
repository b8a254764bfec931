"""Shared compilation settings for the slot kernels."""

from numba import njit

# The kernels never allocate, so the reference-counting runtime is switched
# off: with ~20 array arguments its incref/decref traffic dominated the
# per-slot cost.
# Inlining crosses modules but cache invalidation does not: after editing
# policies.py, clear the .nbi/.nbc files so simulator kernels are rebuilt.
kernel = njit(cache=True, inline="always", _nrt=False)
