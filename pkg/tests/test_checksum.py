"""Context checksum against an independent bit-by-bit CRC-32 reference."""

import struct

from hypothesis import given
from hypothesis import strategies as st

from replaydbg.checksum import context_checksum


def crc32_reference(data: bytes) -> int:
    """Bitwise CRC-32 (reflected 0x04C11DB7 => 0xEDB88320), table-free."""
    crc = 0xFFFFFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            if crc & 1:
                crc = (crc >> 1) ^ 0xEDB88320
            else:
                crc >>= 1
    return crc ^ 0xFFFFFFFF


def reference_context_checksum(state: bytes, counters, pc: int) -> int:
    buf = bytearray(state)
    for c in counters:
        buf += struct.pack("<I", c)
    buf += struct.pack("<I", pc)
    return crc32_reference(bytes(buf))


def test_empty_context_is_crc_of_pc_zero_word():
    # four zero bytes of the pc field are the whole input
    assert context_checksum(b"", [], 0) == crc32_reference(b"\x00\x00\x00\x00")


def test_equal_contexts_equal_checksums():
    a = context_checksum(b"\x01\x02", [3], 7)
    b = context_checksum(b"\x01\x02", [3], 7)
    assert a == b


def test_single_state_byte_difference_changes_checksum():
    same_pc = 4
    a = reference_context_checksum(b"\x00\x09", [2], same_pc)
    b = reference_context_checksum(b"\x01\x09", [2], same_pc)
    assert a != b
    assert context_checksum(b"\x00\x09", [2], same_pc) == a
    assert context_checksum(b"\x01\x09", [2], same_pc) == b


@given(
    state=st.binary(max_size=64),
    counters=st.lists(st.integers(min_value=0, max_value=2**32 - 1), max_size=6),
    pc=st.integers(min_value=0, max_value=2**32 - 1),
)
def test_matches_bitwise_reference(state, counters, pc):
    assert context_checksum(state, counters, pc) == reference_context_checksum(state, counters, pc)


@given(state=st.binary(max_size=16), pc=st.integers(min_value=0, max_value=1000))
def test_loop_counter_participates(state, pc):
    assert context_checksum(state, [1], pc) != context_checksum(state, [2], pc)
