"""Alpha-entanglement lattice: strand topology and XOR parity algebra.

Data block positions 1..n sit on an s-row lattice filled column by column.
Each position lies on one strand per class: H runs along rows, RH and LH
wind diagonally, wrapping at the bottom/top row into the next column. A
parity block is the running XOR of the data blocks along a strand; strand
heads start from a zero IV, so the head parity equals the head data block.

Only square lattices (p == s) are supported; anything else is rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import _kernels
from .errors import LengthMismatch, UnsupportedParams


class StrandClass(IntEnum):
    H = 0
    RH = 1
    LH = 2


@dataclass(frozen=True)
class CodingParams:
    alpha: int
    s: int
    p: int

    def __post_init__(self):
        if not 1 <= self.alpha <= 3:
            raise ValueError("alpha must be in 1..3")
        if self.s < 1 or self.p < 1:
            raise ValueError("s and p must be >= 1")

    @property
    def classes(self) -> tuple[StrandClass, ...]:
        return (StrandClass.H, StrandClass.RH, StrandClass.LH)[: self.alpha]

    def require_square(self):
        if self.p != self.s:
            raise UnsupportedParams(f"p={self.p} != s={self.s}: only square lattices supported")


def row_of(index: int, s: int) -> int:
    return ((index - 1) % s) + 1


def column_of(index: int, s: int) -> int:
    return (index - 1) // s + 1


def successor(index: int, cls: StrandClass, params: CodingParams) -> int:
    """Next position along the strand; may point past n (open strand tail)."""
    params.require_square()
    if index < 1:
        raise ValueError("positions are 1-based")
    s = params.s
    r = row_of(index, s)
    if cls == StrandClass.H:
        return index + s
    if cls == StrandClass.RH:
        return index + s + 1 if r < s else index + 1
    return index + s - 1 if r > 1 else index + 2 * s - 1


def predecessor(index: int, cls: StrandClass, params: CodingParams) -> int:
    """Inverse of successor; 0 when index is a strand head (first column)."""
    params.require_square()
    if index < 1:
        raise ValueError("positions are 1-based")
    s = params.s
    r = row_of(index, s)
    if cls == StrandClass.H:
        prev = index - s
    elif cls == StrandClass.RH:
        prev = index - s - 1 if r > 1 else index - 1
    else:
        prev = index - s + 1 if r < s else index - 2 * s + 1
    return prev if prev >= 1 else 0


def strand_index(index: int, cls: StrandClass, s: int) -> int:
    """Which of the s strands of this class the position lies on (0-based)."""
    r = row_of(index, s)
    c = column_of(index, s)
    if cls == StrandClass.H:
        return r - 1
    if cls == StrandClass.RH:
        return (r - c) % s
    return (r + c - 2) % s


def chains_for_class(cls: StrandClass, n: int, params: CodingParams) -> list[list[int]]:
    """Positions of every strand of a class, head first, in hop order."""
    params.require_square()
    chains = []
    for head in range(1, min(params.s, n) + 1):
        chain = []
        i = head
        while i <= n:
            chain.append(i)
            i = successor(i, cls, params)
        chains.append(chain)
    return chains


@dataclass(frozen=True)
class StrandEdge:
    """Names one parity block: the edge leaving `from_pos` toward `to_pos`.

    from_pos 0 denotes the zero-IV edge entering a strand head.
    """

    cls: StrandClass
    from_pos: int
    to_pos: int


def edge_out_of(index: int, cls: StrandClass, params: CodingParams) -> StrandEdge:
    return StrandEdge(cls=cls, from_pos=index, to_pos=successor(index, cls, params))


def edge_into(index: int, cls: StrandClass, params: CodingParams) -> StrandEdge:
    return StrandEdge(cls=cls, from_pos=predecessor(index, cls, params), to_pos=index)


def xor(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise LengthMismatch(f"xor operands differ in length: {len(a)} vs {len(b)}")
    return _kernels.xor_arrays(a, b)


@dataclass
class ParitySet:
    """One parity block per (class, data position): the edge out of that position."""

    params: CodingParams
    n: int
    block_size: int
    parities: dict[tuple[StrandClass, int], bytes] = field(default_factory=dict)

    def __len__(self):
        return len(self.parities)

    def get(self, cls: StrandClass, from_pos: int) -> bytes:
        return self.parities[(cls, from_pos)]


def pad_block(data: bytes, block_size: int) -> bytes:
    if len(data) > block_size:
        raise LengthMismatch(f"block of {len(data)} bytes exceeds block size {block_size}")
    if len(data) == block_size:
        return data
    return data + b"\x00" * (block_size - len(data))


def entangle(data_blocks: list[bytes], params: CodingParams) -> ParitySet:
    """Generate all parity blocks: running XOR along every strand of every class.

    Blocks are zero-padded to the largest block length before XOR; the strand
    head's incoming parity is the zero block, so head parity == head data.
    """
    params.require_square()
    if not data_blocks:
        raise ValueError("entangle requires at least one data block")
    n = len(data_blocks)
    block_size = max(len(b) for b in data_blocks)

    matrix = np.zeros((n, max(block_size, 1)), dtype=np.uint8)
    for i, blk in enumerate(data_blocks):
        if blk:
            matrix[i, : len(blk)] = np.frombuffer(blk, dtype=np.uint8)

    pset = ParitySet(params=params, n=n, block_size=block_size)
    for cls in params.classes:
        chains = [[i - 1 for i in chain] for chain in chains_for_class(cls, n, params)]
        out = _kernels.entangle_chains(matrix, chains)
        for chain in chains:
            for j in chain:
                pset.parities[(cls, j + 1)] = out[j, :block_size].tobytes()
    return pset


def decode_class(parity_blocks: dict[int, bytes], cls: StrandClass, n: int,
                 params: CodingParams, block_size: int) -> list[bytes]:
    """Sequentially XOR a complete class of parities back into all data blocks.

    parity_blocks maps position -> out-parity of that position; every position
    1..n must be present.
    """
    params.require_square()
    matrix = np.zeros((n, max(block_size, 1)), dtype=np.uint8)
    for i in range(1, n + 1):
        blk = parity_blocks[i]
        if blk:
            matrix[i - 1, : len(blk)] = np.frombuffer(blk, dtype=np.uint8)
    chains = [[i - 1 for i in chain] for chain in chains_for_class(cls, n, params)]
    out = _kernels.decode_chains(matrix, chains)
    return [out[i, :block_size].tobytes() for i in range(n)]


def recover_data(in_parity: bytes, out_parity: bytes) -> bytes:
    """Data block from its two adjacent parities on one strand."""
    return xor(in_parity, out_parity)


def recover_parity_forward(d_from: bytes, parity_into_from: bytes) -> bytes:
    """Parity on the edge leaving d_from, from the block and its incoming parity."""
    return xor(d_from, parity_into_from)


def recover_parity_backward(d_to: bytes, parity_out_of_to: bytes) -> bytes:
    """Parity on the edge entering d_to, from the block and its outgoing parity."""
    return xor(d_to, parity_out_of_to)


def zero_block(block_size: int) -> bytes:
    return b"\x00" * block_size
