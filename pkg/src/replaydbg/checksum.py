"""Context checksums used to tell apart revisited program positions.

A task's statement index alone is ambiguous: loops revisit the same index
with different live state. The checksum folds the task's state bytes, the
remaining-iteration counters of its active loops and the statement index
into one 32-bit value so that two visits to the same index can usually be
told apart. It is CRC-32 (polynomial 0x04C11DB7, reflected), the same
variant zlib computes.
"""

import struct
import zlib
from typing import Iterable


def context_checksum(state: bytes, loop_counters: Iterable[int], pc: int) -> int:
    """CRC-32 over the canonical context serialization.

    Layout: state bytes, then each remaining-iteration counter as a 32-bit
    little-endian word, then the statement index as a 32-bit little-endian
    word. Equal contexts always produce equal checksums.
    """
    buf = bytearray(state)
    for counter in loop_counters:
        buf += struct.pack("<I", counter)
    buf += struct.pack("<I", pc)
    return zlib.crc32(bytes(buf)) & 0xFFFFFFFF
