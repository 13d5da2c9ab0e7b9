"""Little-endian binary encoding helpers for checkpoints, traces and plans."""

import struct


class Writer:
    def __init__(self):
        self._buf = bytearray()

    def u8(self, v: int) -> "Writer":
        self._buf += struct.pack("<B", v)
        return self

    def u16(self, v: int) -> "Writer":
        self._buf += struct.pack("<H", v)
        return self

    def u32(self, v: int) -> "Writer":
        self._buf += struct.pack("<I", v)
        return self

    def u64(self, v: int) -> "Writer":
        self._buf += struct.pack("<Q", v)
        return self

    def i32(self, v: int) -> "Writer":
        self._buf += struct.pack("<i", v)
        return self

    def i64(self, v: int) -> "Writer":
        self._buf += struct.pack("<q", v)
        return self

    def blob(self, data: bytes) -> "Writer":
        if len(data) > 0xFFFFFFFF:
            raise ValueError("blob too large")
        self.u32(len(data))
        self._buf += data
        return self

    def text(self, s: str) -> "Writer":
        return self.blob(s.encode("utf-8"))

    def opt_i32(self, v) -> "Writer":
        return self.i32(-1 if v is None else v)

    def getvalue(self) -> bytes:
        return bytes(self._buf)


class ReadError(ValueError):
    """Truncated or malformed binary input."""


class Reader:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def _take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise ReadError(f"truncated input at offset {self._pos}")
        chunk = self._data[self._pos : self._pos + n]
        self._pos += n
        return chunk

    def u8(self) -> int:
        return struct.unpack("<B", self._take(1))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self._take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._take(8))[0]

    def i32(self) -> int:
        return struct.unpack("<i", self._take(4))[0]

    def i64(self) -> int:
        return struct.unpack("<q", self._take(8))[0]

    def blob(self) -> bytes:
        return self._take(self.u32())

    def text(self) -> str:
        return self.blob().decode("utf-8")

    def opt_i32(self):
        v = self.i32()
        return None if v == -1 else v

    def at_end(self) -> bool:
        return self._pos == len(self._data)

    def expect_end(self) -> None:
        if not self.at_end():
            raise ReadError(f"{len(self._data) - self._pos} trailing bytes")
