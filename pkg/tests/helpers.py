import numpy as np

from tamedns.spectral import SpectralField


def single_mode(grid, k, amp):
    """Real field whose only nonzero Fourier pair is at +-k with amplitude ``amp`` (3-vector)."""
    full = np.zeros((3,) + grid.shape, dtype=complex)
    n = grid.n
    idx = tuple(int(x) % n for x in k)
    neg = tuple(int(-x) % n for x in k)
    full[(slice(None),) + idx] = amp
    full[(slice(None),) + neg] = np.conj(amp)
    return SpectralField.from_full_coeffs(grid, full)


def coords(grid):
    return grid.physical_coords()
