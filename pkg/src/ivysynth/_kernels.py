"""Hot inner loops, compiled with numba when available.

Every kernel has a pure-numpy twin that produces bit-identical output. The
numpy path is selected when numba is missing or when the environment variable
``IVYSYNTH_DISABLE_NUMBA`` is set to a non-empty value other than ``0``.
"""
import os

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TO_UNIT = 1.0 / 9007199254740992.0  # 2**-53


def _numba_requested():
    flag = os.environ.get("IVYSYNTH_DISABLE_NUMBA", "")
    return flag in ("", "0")


try:
    if not _numba_requested():
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False


def backend():
    return "numba" if HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def _mix64_np(state):
    z = state.copy()
    z ^= z >> np.uint64(30)
    z *= _MIX1
    z ^= z >> np.uint64(27)
    z *= _MIX2
    z ^= z >> np.uint64(31)
    return z


def _uniforms_np(key, start, count):
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        state = np.uint64(key) + idx * _GOLDEN
        bits = _mix64_np(state)
    return (bits >> np.uint64(11)).astype(np.float64) * _TO_UNIT


def _counts_2x2_np(target, covariate):
    tp = target > 0
    cp = covariate > 0
    out = np.empty(4, dtype=np.int64)
    out[0] = np.count_nonzero(tp & cp)
    out[1] = np.count_nonzero(tp & ~cp)
    out[2] = np.count_nonzero(~tp & cp)
    out[3] = np.count_nonzero(~tp & ~cp)
    return out


def _clique_loglik_np(W, members, offsets, tables_pos, tables_neg, table_offsets):
    n = W.shape[0]
    llr = np.zeros(n, dtype=np.float64)
    bits = (W > 0).astype(np.int64)
    for c in range(offsets.shape[0] - 1):
        cols = members[offsets[c]:offsets[c + 1]]
        weights = np.left_shift(np.int64(1), np.arange(cols.shape[0], dtype=np.int64))
        state = bits[:, cols] @ weights
        base = table_offsets[c]
        llr += tables_pos[base + state] - tables_neg[base + state]
    return llr


# ---------------------------------------------------------------------------
# numba twins
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _uniforms_nb(key, start, count):
        out = np.empty(count, dtype=np.float64)
        k = np.uint64(key)
        for i in range(count):
            z = k + np.uint64(start + i + 1) * np.uint64(0x9E3779B97F4A7C15)
            z = z ^ (z >> np.uint64(30))
            z = z * np.uint64(0xBF58476D1CE4E5B9)
            z = z ^ (z >> np.uint64(27))
            z = z * np.uint64(0x94D049BB133111EB)
            z = z ^ (z >> np.uint64(31))
            out[i] = np.float64(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)
        return out

    @njit(cache=True)
    def _counts_2x2_nb(target, covariate):
        out = np.zeros(4, dtype=np.int64)
        for i in range(target.shape[0]):
            t = 0 if target[i] > 0 else 2
            c = 0 if covariate[i] > 0 else 1
            out[t + c] += 1
        return out

    @njit(cache=True)
    def _clique_loglik_nb(W, members, offsets, tables_pos, tables_neg, table_offsets):
        n = W.shape[0]
        llr = np.zeros(n, dtype=np.float64)
        n_cliques = offsets.shape[0] - 1
        for i in range(n):
            acc = 0.0
            for c in range(n_cliques):
                state = 0
                for b in range(offsets[c + 1] - offsets[c]):
                    if W[i, members[offsets[c] + b]] > 0:
                        state += 1 << b
                k = table_offsets[c] + state
                acc += tables_pos[k] - tables_neg[k]
            llr[i] = acc
        return llr


# ---------------------------------------------------------------------------
# public dispatchers
# ---------------------------------------------------------------------------

def stream_key(seed, *stream):
    """Derive a 64-bit stream key from a master seed and a stream path."""
    # the path length keeps (s,) and (s, 0) apart; SeedSequence zero-pads its pool
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF, len(stream)] + [int(s) for s in stream]
    seq = np.random.SeedSequence(words)
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def uniforms(key, start, count):
    """Counter-based uniforms in [0, 1): element ``i`` depends only on (key, start + i)."""
    if count == 0:
        return np.empty(0, dtype=np.float64)
    if HAVE_NUMBA:
        return _uniforms_nb(np.uint64(key), np.int64(start), np.int64(count))
    return _uniforms_np(key, start, count)


def counts_2x2(target, covariate):
    """Counts (t+c+, t+c-, t-c+, t-c-) for two ±1 vectors."""
    target = np.ascontiguousarray(target)
    covariate = np.ascontiguousarray(covariate)
    if HAVE_NUMBA:
        return _counts_2x2_nb(target, covariate)
    return _counts_2x2_np(target, covariate)


def clique_loglik(W, members, offsets, tables_pos, tables_neg, table_offsets):
    """Per-row sum over cliques of log P(w_C | z=+1) - log P(w_C | z=-1).

    ``members[offsets[c]:offsets[c+1]]`` are the columns of clique ``c``; its
    state index is the little-endian bit pattern of (w > 0) over those columns,
    used to look up ``tables_*[table_offsets[c] + state]``.
    """
    args = (
        np.ascontiguousarray(W),
        np.asarray(members, dtype=np.int64),
        np.asarray(offsets, dtype=np.int64),
        np.asarray(tables_pos, dtype=np.float64),
        np.asarray(tables_neg, dtype=np.float64),
        np.asarray(table_offsets, dtype=np.int64),
    )
    if HAVE_NUMBA:
        return _clique_loglik_nb(*args)
    return _clique_loglik_np(*args)
