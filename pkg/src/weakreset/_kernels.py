"""Compiled inner loops shared by the scalar and vectorized device paths.

Everything that produces random draws or advances device state goes
through these functions so both paths agree bit for bit.
"""

import math

import numba as nb
import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 2.0**-53
_TWO_PI = 2.0 * math.pi


@nb.njit(inline="always")
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MUL1
    z = (z ^ (z >> np.uint64(27))) * _MUL2
    return z ^ (z >> np.uint64(31))


@nb.njit(inline="always")
def uniform(key, counter):
    h = mix64(key + (np.uint64(counter) + np.uint64(1)) * _GAMMA)
    return (float(h >> np.uint64(11)) + 0.5) * _TWO_M53


@nb.njit(inline="always")
def normal(key, counter):
    u1 = uniform(key, counter)
    u2 = uniform(key, counter + 1)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)


@nb.njit(inline="always")
def prob_high(x, n, p_high, p_low):
    s = p_high + p_low
    if s == 0.0:
        return float(x)
    pi1 = p_high / s
    return pi1 + (float(x) - pi1) * (1.0 - s) ** float(n)


@nb.njit(cache=True)
def uniforms_flat(keys, counters):
    out = np.empty(keys.shape[0])
    for i in range(keys.shape[0]):
        out[i] = uniform(keys[i], counters[i])
    return out


@nb.njit(cache=True)
def normals_flat(keys, counters):
    out = np.empty(keys.shape[0])
    for i in range(keys.shape[0]):
        out[i] = normal(keys[i], counters[i])
    return out


@nb.njit(cache=True)
def prob_high_flat(x, n, p_high, p_low):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = prob_high(x[i], n[i], p_high, p_low)
    return out


@nb.njit(inline="always")
def ring_pink(ring_row, head, b, alpha):
    L = ring_row.shape[0]
    acc = 0.0
    for r in range(L):
        j = head - r
        if j < 0:
            j += L
        acc += b[r] * ring_row[j]
    return alpha * acc


@nb.njit(cache=True)
def pink_newest_first(buffers, b, alpha):
    out = np.empty(buffers.shape[0])
    for i in range(buffers.shape[0]):
        acc = 0.0
        for r in range(buffers.shape[1]):
            acc += b[r] * buffers[i, r]
        out[i] = alpha * acc
    return out


@nb.njit(cache=True)
def pink_rows(ring, head, idx, b, alpha):
    out = np.empty(idx.shape[0])
    for i in range(idx.shape[0]):
        d = idx[i]
        out[i] = ring_pink(ring[d], head[d], b, alpha)
    return out


@nb.njit(cache=True)
def bank_apply(idx, n, keys, counter, t, x, ring, head, w_pink, b, p_high, p_low, alpha, rtn_on, pink_on):
    """Advance devices ``idx[i]`` by ``n[i]`` pulses, in place.

    Stream order per device: one uniform for the telegraph state, then
    ``min(n, L)`` normals (two counters each) for the pink buffer.
    """
    L = ring.shape[1]
    for i in range(idx.shape[0]):
        d = idx[i]
        k = n[i]
        if k <= 0:
            continue
        t[d] += k
        c = counter[d]
        key = keys[d]
        if rtn_on:
            u = uniform(key, c)
            c += 1
            x[d] = 1 if u < prob_high(x[d], k, p_high, p_low) else 0
        if pink_on:
            m = k if k < L else L
            h = head[d]
            for j in range(m):
                h += 1
                if h == L:
                    h = 0
                ring[d, h] = normal(key, c)
                c += 2
            head[d] = h
            w_pink[d] = ring_pink(ring[d], h, b, alpha)
        counter[d] = c


@nb.njit(cache=True)
def rtn_trace(key, counter, x0, n_pulses, p_high, p_low):
    """Telegraph state after each of ``n_pulses`` single pulses (pink disabled stream order)."""
    out = np.empty(n_pulses, dtype=np.int8)
    x = x0
    for i in range(n_pulses):
        u = uniform(key, counter + i)
        x = 1 if u < prob_high(x, 1, p_high, p_low) else 0
        out[i] = x
    return out
