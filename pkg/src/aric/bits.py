"""MSB-first bit I/O with unsigned exp-Golomb codes."""

from __future__ import annotations

from .errors import ArgumentError, BitstreamError

# Leading-zero cap for exp-Golomb reads; longer prefixes are garbage.
_UE_MAX_ZEROS = 32


def ue_size(v: int) -> int:
    """Bit length of ue(v)."""
    if v < 0:
        raise ArgumentError(f"ue value must be non-negative, got {v}")
    return 2 * (v + 1).bit_length() - 1


class BitWriter:
    """Accumulates bits MSB-first into a byte buffer."""

    def __init__(self) -> None:
        self._buf = bytearray()
        self._acc = 0
        self._n = 0

    @property
    def bit_length(self) -> int:
        return len(self._buf) * 8 + self._n

    def write(self, value: int, nbits: int) -> None:
        if nbits < 0:
            raise ArgumentError(f"cannot write {nbits} bits")
        if nbits == 0:
            return
        acc = (self._acc << nbits) | (value & ((1 << nbits) - 1))
        n = self._n + nbits
        while n >= 8:
            n -= 8
            self._buf.append((acc >> n) & 0xFF)
        self._acc = acc & ((1 << n) - 1)
        self._n = n

    def write_bit(self, bit: int) -> None:
        self.write(bit, 1)

    def write_ue(self, v: int) -> None:
        # v+1 written at width 2*len-1 carries its own len-1 zero prefix.
        self.write(v + 1, ue_size(v))

    def write_payload(self, data: bytes, nbits: int) -> None:
        """Append the first nbits of a byte buffer, ignoring its pad bits."""
        if nbits > len(data) * 8:
            raise ArgumentError(f"payload of {len(data)} bytes holds fewer than {nbits} bits")
        full, rem = divmod(nbits, 8)
        for b in data[:full]:
            self.write(b, 8)
        if rem:
            self.write(data[full] >> (8 - rem), rem)

    def getvalue(self) -> bytes:
        """Finished buffer, zero-padded to a whole byte."""
        out = bytearray(self._buf)
        if self._n:
            out.append((self._acc << (8 - self._n)) & 0xFF)
        return bytes(out)


class BitReader:
    """Reads bits MSB-first from a byte buffer."""

    def __init__(self, data: bytes, nbits: int | None = None) -> None:
        self._data = data
        self._nbits = len(data) * 8 if nbits is None else nbits
        if self._nbits > len(data) * 8:
            raise ArgumentError("declared bit length exceeds buffer size")
        self._pos = 0

    @property
    def bit_position(self) -> int:
        return self._pos

    @property
    def bits_left(self) -> int:
        return self._nbits - self._pos

    def read(self, nbits: int) -> int:
        if nbits < 0:
            raise ArgumentError(f"cannot read {nbits} bits")
        if self._pos + nbits > self._nbits:
            raise BitstreamError(
                f"bitstream exhausted: need {nbits} bits at bit {self._pos} of {self._nbits}"
            )
        v = 0
        pos = self._pos
        for _ in range(nbits):
            byte = self._data[pos >> 3]
            v = (v << 1) | ((byte >> (7 - (pos & 7))) & 1)
            pos += 1
        self._pos = pos
        return v

    def read_bit(self) -> int:
        return self.read(1)

    def read_ue(self) -> int:
        zeros = 0
        while self.read(1) == 0:
            zeros += 1
            if zeros > _UE_MAX_ZEROS:
                raise BitstreamError(
                    f"exp-Golomb prefix longer than {_UE_MAX_ZEROS} at bit {self._pos}"
                )
        return ((1 << zeros) | self.read(zeros)) - 1
