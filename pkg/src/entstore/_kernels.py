"""Hot XOR kernels for strand entangle/decode.

Two lanes compute identical results: a numba @njit lane (parallel over
strands) and a pure-numpy lane. Selection is controlled by the
ENTSTORE_KERNEL env var: "numba", "numpy", or "auto" (default; numba when
importable). Strands are independent chains, so per-strand parallelism is
bit-identical to sequential execution.
"""

from __future__ import annotations

import os

import numpy as np

_LANE = os.environ.get("ENTSTORE_KERNEL", "auto").lower()
if _LANE not in ("auto", "numba", "numpy"):
    raise ValueError(f"ENTSTORE_KERNEL must be auto|numba|numpy, not {_LANE!r}")

_HAVE_NUMBA = False
if _LANE in ("auto", "numba"):
    try:
        from numba import njit, prange

        _HAVE_NUMBA = True
    except ImportError:
        if _LANE == "numba":
            raise


def active_lane() -> str:
    return "numba" if _HAVE_NUMBA else "numpy"


def _entangle_numpy(data: np.ndarray, flat: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    out = np.empty_like(data)
    for k in range(len(offsets) - 1):
        idx = flat[offsets[k] : offsets[k + 1]]
        out[idx] = np.bitwise_xor.accumulate(data[idx], axis=0)
    return out


def _decode_numpy(parity: np.ndarray, flat: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    out = np.empty_like(parity)
    for k in range(len(offsets) - 1):
        idx = flat[offsets[k] : offsets[k + 1]]
        out[idx[0]] = parity[idx[0]]
        if len(idx) > 1:
            out[idx[1:]] = parity[idx[1:]] ^ parity[idx[:-1]]
    return out


if _HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def _entangle_numba(data, flat, offsets):  # pragma: no cover - numba object
        out = np.empty_like(data)
        width = data.shape[1]
        for k in prange(len(offsets) - 1):
            running = np.zeros(width, dtype=np.uint8)
            for t in range(offsets[k], offsets[k + 1]):
                j = flat[t]
                for b in range(width):
                    running[b] ^= data[j, b]
                    out[j, b] = running[b]
        return out

    @njit(parallel=True, cache=True)
    def _decode_numba(parity, flat, offsets):  # pragma: no cover - numba object
        out = np.empty_like(parity)
        width = parity.shape[1]
        for k in prange(len(offsets) - 1):
            head = flat[offsets[k]]
            for b in range(width):
                out[head, b] = parity[head, b]
            for t in range(offsets[k] + 1, offsets[k + 1]):
                j = flat[t]
                prev = flat[t - 1]
                for b in range(width):
                    out[j, b] = parity[j, b] ^ parity[prev, b]
        return out


def _pack_chains(chains: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    flat = np.array([j for chain in chains for j in chain], dtype=np.int64)
    offsets = np.zeros(len(chains) + 1, dtype=np.int64)
    for k, chain in enumerate(chains):
        offsets[k + 1] = offsets[k] + len(chain)
    return flat, offsets


def entangle_chains(data: np.ndarray, chains: list[list[int]]) -> np.ndarray:
    """Running XOR along each chain of row indices: out[j] = data[c0]^...^data[j].

    data is an (n, block_size) uint8 matrix; rows outside any chain are
    untouched garbage in the result and must not be read by callers.
    """
    flat, offsets = _pack_chains(chains)
    if data.size == 0:
        return np.empty_like(data)
    if _HAVE_NUMBA:
        return _entangle_numba(np.ascontiguousarray(data), flat, offsets)
    return _entangle_numpy(data, flat, offsets)


def decode_chains(parity: np.ndarray, chains: list[list[int]]) -> np.ndarray:
    """Inverse of entangle_chains: data[j] = parity[j] ^ parity[prev-in-chain]."""
    flat, offsets = _pack_chains(chains)
    if parity.size == 0:
        return np.empty_like(parity)
    if _HAVE_NUMBA:
        return _decode_numba(np.ascontiguousarray(parity), flat, offsets)
    return _decode_numpy(parity, flat, offsets)


def xor_arrays(a: bytes, b: bytes) -> bytes:
    out = np.bitwise_xor(
        np.frombuffer(a, dtype=np.uint8), np.frombuffer(b, dtype=np.uint8)
    )
    return out.tobytes()
