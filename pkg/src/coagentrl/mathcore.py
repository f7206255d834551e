"""Seeded randomness and the small numerical kernel shared by every module.

Random streams are numpy ``Generator`` objects backed by PCG64.  A stream is
identified by a master seed plus an integer path; the path becomes the
``spawn_key`` of a ``SeedSequence``, so two different paths never share state
and the same ``(seed, path)`` yields the same sequence on every platform.
"""

from __future__ import annotations

import numpy as np

RngStream = np.random.Generator

# u is kept at least this far from 0 and 1 before the double log.
GUMBEL_EPS = 1e-12


def rng_stream(seed: int, *path: int) -> RngStream:
    """Return the PCG64 stream for ``seed`` and the split ``path``."""
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))


def split_streams(seed: int, n: int, *path: int) -> list[RngStream]:
    """``n`` mutually independent streams below ``path``."""
    return [rng_stream(seed, *path, i) for i in range(n)]


def sigmoid(x):
    """Logistic function, stable for large ``|x|`` (scalar or array)."""
    out = np.exp(-np.logaddexp(0.0, -np.asarray(x, dtype=float)))
    return out if out.ndim else float(out)


def softmax(v, temperature: float = 1.0):
    """Softmax over the last axis of ``v`` divided by ``temperature``."""
    v = np.asarray(v, dtype=float)
    if v.size == 0 or v.shape[-1] == 0:
        raise ValueError("empty logits")
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    z = v / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(v, temperature: float = 1.0):
    v = np.asarray(v, dtype=float)
    if v.size == 0 or v.shape[-1] == 0:
        raise ValueError("empty logits")
    z = v / temperature
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def gumbel_from_uniform(u):
    """Map uniform draws on (0, 1) to standard Gumbel draws."""
    u = np.clip(np.asarray(u, dtype=float), GUMBEL_EPS, 1.0 - GUMBEL_EPS)
    g = -np.log(-np.log(u))
    return g if g.ndim else float(g)


def gumbel_sample(rng: RngStream, size=None):
    """One standard Gumbel draw (or an array of them when ``size`` is given)."""
    return gumbel_from_uniform(rng.random(size))


def conv1d_causal(signal, kernel):
    """Causal convolution with zero padding before the first sample.

    ``out[t] = sum_j kernel[j] * signal[t - j]`` so ``out[t]`` only sees
    ``signal[:t + 1]``.  The output has the length of ``signal``.
    """
    signal = np.asarray(signal, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    if kernel.ndim != 1 or kernel.size == 0:
        raise ValueError("kernel must be a non-empty 1-D sequence")
    if signal.ndim != 1 or signal.size == 0:
        raise ValueError("signal must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(kernel)):
        raise ValueError("kernel taps must be finite")
    return np.convolve(signal, kernel)[: signal.size]


def sample_bernoulli(p: float, rng: RngStream) -> int:
    """+1 with probability ``p``, otherwise -1."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability out of range: {p}")
    return 1 if rng.random() < p else -1


def sample_categorical(probs, rng: RngStream) -> int:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or probs.size == 0:
        raise ValueError("probs must be a non-empty 1-D sequence")
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError("probs must be a distribution")
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(idx, probs.size - 1)


def sample_gaussian(mu: float, sigma: float, rng: RngStream) -> float:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return float(mu + sigma * rng.standard_normal())
