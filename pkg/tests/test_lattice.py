import random

import numpy as np
import pytest

from entstore import _kernels
from entstore.errors import LengthMismatch, UnsupportedParams
from entstore.lattice import (
    CodingParams,
    StrandClass,
    chains_for_class,
    decode_class,
    entangle,
    predecessor,
    recover_data,
    recover_parity_backward,
    recover_parity_forward,
    successor,
    strand_index,
    xor,
)

from oracle_gf2 import build_equations, var_index

S5 = CodingParams(3, 5, 5)


class TestSuccessor:
    def test_h_moves_one_column(self):
        assert successor(1, StrandClass.H, S5) == 6

    def test_rh_bottom_row_wraps_to_top_of_next_column(self):
        assert successor(5, StrandClass.RH, S5) == 6

    def test_lh_top_row_wraps_to_bottom_of_next_column(self):
        assert successor(1, StrandClass.LH, S5) == 10

    def test_rejects_non_square(self):
        with pytest.raises(UnsupportedParams):
            successor(1, StrandClass.H, CodingParams(3, 5, 7))


class TestPredecessor:
    def test_h_inverse(self):
        assert predecessor(6, StrandClass.H, S5) == 1

    def test_first_column_is_strand_head(self):
        assert predecessor(3, StrandClass.H, S5) == 0

    def test_lh_inverse_of_wrap(self):
        assert predecessor(10, StrandClass.LH, S5) == 1

    @pytest.mark.parametrize("s", [2, 3, 5])
    def test_inverse_property_everywhere(self, s):
        params = CodingParams(3, s, s)
        for cls in params.classes:
            for i in range(1, 120):
                nxt = successor(i, cls, params)
                assert predecessor(nxt, cls, params) == i


class TestStrandPartition:
    @pytest.mark.parametrize("s", [2, 3, 5])
    @pytest.mark.parametrize("n", [1, 2, 7, 25, 60, 200])
    def test_chains_partition_positions(self, s, n):
        params = CodingParams(3, s, s)
        for cls in params.classes:
            chains = chains_for_class(cls, n, params)
            seen = [pos for chain in chains for pos in chain]
            assert sorted(seen) == list(range(1, n + 1))
            for k, chain in enumerate(chains):
                for pos in chain:
                    assert strand_index(pos, cls, s) == k


class TestXor:
    def test_self_inverse(self, rng):
        b = rng.randbytes(64)
        assert xor(b, b) == bytes(64)

    def test_zero_identity(self, rng):
        b = rng.randbytes(64)
        assert xor(b, bytes(64)) == b

    def test_involution(self, rng):
        a, b = rng.randbytes(64), rng.randbytes(64)
        assert xor(xor(a, b), b) == a

    def test_commutative_associative_randomized(self, rng):
        for _ in range(50):
            a, b, c = (rng.randbytes(32) for _ in range(3))
            assert xor(a, b) == xor(b, a)
            assert xor(xor(a, b), c) == xor(a, xor(b, c))

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            xor(b"ab", b"abc")


class TestEntangle:
    def test_single_block_parities_equal_block(self, rng):
        d = rng.randbytes(100)
        pset = entangle([d], CodingParams(3, 5, 5))
        assert len(pset) == 3
        for cls in (StrandClass.H, StrandClass.RH, StrandClass.LH):
            assert pset.get(cls, 1) == d

    def test_h_strand_recurrence_unrolled(self, rng):
        data = [rng.randbytes(50) for _ in range(12)]
        pset = entangle(data, S5)
        assert pset.get(StrandClass.H, 1) == data[0]
        assert pset.get(StrandClass.H, 6) == xor(data[5], data[0])

    @pytest.mark.parametrize("alpha", [1, 2, 3])
    @pytest.mark.parametrize("s", [2, 3, 5])
    def test_parity_count_is_alpha_n(self, alpha, s):
        params = CodingParams(alpha, s, s)
        for n in range(1, 201):
            pset = entangle([b"\x01"] * n, params)
            assert len(pset) == alpha * n

    def test_classes_by_alpha(self):
        assert CodingParams(1, 2, 2).classes == (StrandClass.H,)
        assert CodingParams(2, 2, 2).classes == (StrandClass.H, StrandClass.RH)
        assert CodingParams(3, 2, 2).classes == (
            StrandClass.H,
            StrandClass.RH,
            StrandClass.LH,
        )

    def test_rejects_non_square(self, rng):
        with pytest.raises(UnsupportedParams):
            entangle([rng.randbytes(8)], CodingParams(3, 2, 3))

    def test_padding_to_largest_block(self, rng):
        data = [rng.randbytes(100), rng.randbytes(40)]
        pset = entangle(data, CodingParams(1, 2, 2))
        assert pset.block_size == 100
        assert all(len(p) == 100 for p in pset.parities.values())

    def test_matches_gf2_matrix_construction(self, rng):
        """Brute-force oracle: build the recurrence equations over GF(2) per
        bit and check every parity satisfies its equation."""
        params = CodingParams(3, 2, 2)
        n = 8
        data = [rng.randbytes(16) for _ in range(n)]
        pset = entangle(data, params)
        equations = build_equations(n, params)
        values = {}
        for i, d in enumerate(data):
            values[var_index(n, "d", 0, i + 1)] = np.frombuffer(d, dtype=np.uint8)
        for cls in params.classes:
            for pos in range(1, n + 1):
                values[var_index(n, "p", int(cls), pos)] = np.frombuffer(
                    pset.get(cls, pos), dtype=np.uint8
                )
        for eq in equations:
            acc = np.zeros(16, dtype=np.uint8)
            for v, arr in values.items():
                if eq >> v & 1:
                    acc ^= arr
            assert not acc.any()


class TestRecovery:
    def test_head_block_from_zero_iv(self, rng):
        d = rng.randbytes(32)
        assert recover_data(bytes(32), d) == d

    def test_every_position_every_class(self, rng):
        params = S5
        n = 23
        data = [rng.randbytes(64) for _ in range(n)]
        pset = entangle(data, params)
        for cls in params.classes:
            for chain in chains_for_class(cls, n, params):
                incoming = bytes(64)
                for pos in chain:
                    out = pset.get(cls, pos)
                    assert recover_data(incoming, out) == data[pos - 1]
                    incoming = out

    def test_corrupted_parity_gives_wrong_block(self, rng):
        d = rng.randbytes(32)
        corrupted = bytearray(bytes(32))
        corrupted[0] = 0xFF
        assert recover_data(bytes(corrupted), d) != d

    def test_forward_and_backward_parity_agree(self, rng):
        params = S5
        n = 17
        data = [rng.randbytes(48) for _ in range(n)]
        pset = entangle(data, params)
        for cls in params.classes:
            for chain in chains_for_class(cls, n, params):
                incoming = bytes(48)
                for idx, pos in enumerate(chain):
                    out = pset.get(cls, pos)
                    forward = recover_parity_forward(data[pos - 1], incoming)
                    assert forward == out
                    if idx + 1 < len(chain):
                        nxt = chain[idx + 1]
                        backward = recover_parity_backward(
                            data[nxt - 1], pset.get(cls, nxt)
                        )
                        assert backward == out
                    incoming = out

    @pytest.mark.parametrize("cls", [StrandClass.H, StrandClass.RH, StrandClass.LH])
    def test_sequential_decode_from_single_class(self, cls, rng):
        """With all data gone, one complete class of parities rebuilds it."""
        params = S5
        n = 37
        data = [rng.randbytes(64) for _ in range(n)]
        pset = entangle(data, params)
        parities = {pos: pset.get(cls, pos) for pos in range(1, n + 1)}
        assert decode_class(parities, cls, n, params, 64) == data


class TestKernelLanes:
    def test_numpy_lane_matches_active_lane(self):
        rng = np.random.default_rng(5)
        data = rng.integers(0, 256, size=(60, 96), dtype=np.uint8)
        params = CodingParams(3, 5, 5)
        chains = [
            [i - 1 for i in c] for c in chains_for_class(StrandClass.RH, 60, params)
        ]
        active = _kernels.entangle_chains(data, chains)
        reference = _kernels._entangle_numpy(data, *_kernels._pack_chains(chains))
        assert np.array_equal(active[np.concatenate([np.array(c) for c in chains])],
                              reference[np.concatenate([np.array(c) for c in chains])])
        decoded = _kernels.decode_chains(active, chains)
        ref_decoded = _kernels._decode_numpy(active, *_kernels._pack_chains(chains))
        idx = np.concatenate([np.array(c) for c in chains])
        assert np.array_equal(decoded[idx], ref_decoded[idx])
        assert np.array_equal(decoded[idx], data[idx])
