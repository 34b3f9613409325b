"""Dense numerics shared by every other module.

Matrices are plain ``float64`` numpy arrays and complex buffers are
``complex128`` arrays.  The FFT is implemented here (iterative radix-2 for
power-of-two lengths, Bluestein's chirp-z for everything else) so that the
VMD layer does not depend on any particular FFT backend.

Random numbers come from numpy's PCG64 bit generator (128-bit state).  The
algorithm is pinned: the same seed produces the same stream on every
platform numpy supports.
"""

import math

import numpy as np

from .errors import InputError, ShapeError

# exp(-745) is the smallest positive double-precision exp() result; beyond it
# the sigmoid tail would underflow to exactly zero.
SIGMOID_CLAMP = 745.0


def matmul(a, b):
    """Matrix product with an explicit shape check."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _bit_reverse_indices(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def _fft_pow2(x):
    n = x.shape[-1]
    if n == 1:
        return x.copy()
    lead = x.shape[:-1]
    a = x[..., _bit_reverse_indices(n)]
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(lead + (n // size, size))
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(lead + (n,))
        size *= 2
    return a


def _fft_bluestein(x):
    n = x.shape[-1]
    m = 1 << (2 * n - 2).bit_length()
    k = np.arange(n)
    # k^2 mod 2n keeps the chirp phase argument small and exact
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    a = np.zeros(x.shape[:-1] + (m,), dtype=np.complex128)
    a[..., :n] = x * chirp
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = np.conj(chirp)
    b[m - n + 1:] = np.conj(chirp[1:])[::-1]
    conv = _ifft_pow2(_fft_pow2(a) * _fft_pow2(b))
    return conv[..., :n] * chirp


def _ifft_pow2(x):
    return np.conj(_fft_pow2(np.conj(x))) / x.shape[-1]


def fft(x):
    """Unnormalized forward DFT along the last axis, any length >= 1."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1] if x.ndim else 0
    if n == 0:
        raise InputError("fft of a zero-length buffer")
    if not np.all(np.isfinite(x)):
        raise InputError("fft input contains non-finite values")
    if n & (n - 1) == 0:
        return _fft_pow2(x)
    return _fft_bluestein(x)


def ifft(x):
    """Inverse of :func:`fft`: conjugate, transform, conjugate, scale by 1/N."""
    x = np.asarray(x, dtype=np.complex128)
    return np.conj(fft(np.conj(x))) / x.shape[-1]


def softmax_rows(m):
    """Softmax over the last axis with max-subtraction."""
    m = np.asarray(m, dtype=np.float64)
    z = m - m.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(x):
    """Logistic function, stable over the whole double range.

    Inputs are clamped to [-745, 745] so the negative tail bottoms out at the
    smallest subnormal (about 5e-324) instead of underflowing to zero.
    """
    x = np.clip(np.asarray(x, dtype=np.float64), -SIGMOID_CLAMP, SIGMOID_CLAMP)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def make_rng(seed):
    """PCG64-backed generator for a 64-bit unsigned seed."""
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise InputError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(seed, *keys):
    """Deterministic child seed for an independent stream (fold, particle, ...)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def rng_uniform(rng, lo=0.0, hi=1.0, size=None):
    """Uniform draw(s) in [lo, hi)."""
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
        raise InputError(f"uniform bounds need lo < hi, got [{lo}, {hi})")
    u = rng.random(size)
    out = lo + (hi - lo) * u
    # rounding in lo + (hi - lo) * u can land exactly on hi for tiny ranges
    out = np.minimum(out, np.nextafter(hi, lo))
    if size is None:
        return float(out)
    return out
