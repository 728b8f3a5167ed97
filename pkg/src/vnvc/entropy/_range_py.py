"""Pure-Python range coder kernel.

Binary arithmetic coder with 32-bit state over integer CDF tables.  The
compiled twin (_range_fast.pyx) implements the identical algorithm; both
must produce byte-identical output for the same inputs.

Each symbol i is a bin index into CDF row `rows[i]`.  A row is a strictly
increasing uint32 array [0, ..., total] so bin s spans [cdf[s], cdf[s+1]).
"""

from bisect import bisect_right

import numpy as np

_FULL = 1 << 32
_HALF = _FULL >> 1
_QUARTER = _HALF >> 1
_MASK = _FULL - 1


def encode_bins(bins, rows, cdfs) -> bytes:
    n = len(bins)
    if n == 0:
        return b""
    bins_l = [int(b) for b in bins]
    rows_l = [int(r) for r in rows]
    cdf_rows = [list(map(int, row)) for row in cdfs]

    out = bytearray()
    bitbuf = 0
    nbits = 0
    low = 0
    high = _MASK
    pending = 0
    for i in range(n):
        cdf = cdf_rows[rows_l[i]]
        s = bins_l[i]
        if not 0 <= s < len(cdf) - 1:
            raise ValueError(f"symbol bin {s} outside CDF window of size {len(cdf) - 1}")
        total = cdf[-1]
        c_lo = cdf[s]
        c_hi = cdf[s + 1]
        if c_lo == c_hi:
            raise ValueError(f"symbol bin {s} has zero frequency")
        rng = high - low + 1
        high = low + c_hi * rng // total - 1
        low = low + c_lo * rng // total
        while True:
            if (low ^ high) & _HALF == 0:
                bit = low >> 31
                bitbuf = (bitbuf << 1) | bit
                nbits += 1
                if nbits == 8:
                    out.append(bitbuf)
                    bitbuf = 0
                    nbits = 0
                inv = bit ^ 1
                while pending:
                    bitbuf = (bitbuf << 1) | inv
                    nbits += 1
                    if nbits == 8:
                        out.append(bitbuf)
                        bitbuf = 0
                        nbits = 0
                    pending -= 1
                low = (low << 1) & _MASK
                high = ((high << 1) & _MASK) | 1
            elif low & ~high & _QUARTER:
                pending += 1
                low = (low << 1) ^ _HALF
                high = ((high ^ _HALF) << 1) | _HALF | 1
            else:
                break
    # One final 1 bit pins the code inside [low, high].  Pending underflow
    # bits are flushed as zeros (same values padding would supply) so the
    # decoder's reads past the end stay within its 32-bit lookahead.
    bitbuf = (bitbuf << 1) | 1
    nbits += 1
    if nbits == 8:
        out.append(bitbuf)
        bitbuf = 0
        nbits = 0
    while pending:
        bitbuf = bitbuf << 1
        nbits += 1
        if nbits == 8:
            out.append(bitbuf)
            bitbuf = 0
            nbits = 0
        pending -= 1
    if nbits:
        out.append(bitbuf << (8 - nbits))
    return bytes(out)


def decode_bins(data: bytes, rows, cdfs) -> np.ndarray:
    n = len(rows)
    out = np.empty(n, dtype=np.int32)
    if n == 0:
        return out
    rows_l = [int(r) for r in rows]
    cdf_rows = [list(map(int, row)) for row in cdfs]

    nbits_data = len(data) * 8
    # An intact stream never needs more than 32 bits past its own end
    # (the decoder's lookahead window); anything beyond means truncation.
    limit = nbits_data + 32
    pos = 0

    def read_bit():
        nonlocal pos
        if pos >= limit:
            raise ValueError("range decoder ran past end of data: truncated stream")
        if pos < nbits_data:
            b = (data[pos >> 3] >> (7 - (pos & 7))) & 1
        else:
            b = 0
        pos += 1
        return b

    code = 0
    for _ in range(32):
        code = (code << 1) | read_bit()
    low = 0
    high = _MASK
    for i in range(n):
        cdf = cdf_rows[rows_l[i]]
        total = cdf[-1]
        rng = high - low + 1
        off = code - low
        value = ((off + 1) * total - 1) // rng
        s = bisect_right(cdf, value) - 1
        c_lo = cdf[s]
        c_hi = cdf[s + 1]
        rng_old = rng
        high = low + c_hi * rng_old // total - 1
        low = low + c_lo * rng_old // total
        while True:
            if (low ^ high) & _HALF == 0:
                low = (low << 1) & _MASK
                high = ((high << 1) & _MASK) | 1
                code = ((code << 1) & _MASK) | read_bit()
            elif low & ~high & _QUARTER:
                low = (low << 1) ^ _HALF
                high = ((high ^ _HALF) << 1) | _HALF | 1
                code = (code & _HALF) | ((code << 1) & (_MASK >> 1)) | read_bit()
            else:
                break
        out[i] = s
    return out
