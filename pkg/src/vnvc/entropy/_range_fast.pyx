# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled range coder kernel.

Same algorithm as _range_py (binary arithmetic coder, 32-bit state,
integer CDF tables); the two must produce byte-identical output.
"""

from libc.stdint cimport uint8_t, uint32_t, uint64_t, int32_t, int64_t

import numpy as np


DEF FULL = 0x100000000
DEF HALF = 0x80000000
DEF QUARTER = 0x40000000
DEF MASK = 0xFFFFFFFF


cdef class _BitWriter:
    cdef bytearray buf
    cdef uint32_t bitbuf
    cdef int nbits

    def __cinit__(self):
        self.buf = bytearray()
        self.bitbuf = 0
        self.nbits = 0

    cdef inline void put(self, uint32_t bit):
        self.bitbuf = (self.bitbuf << 1) | bit
        self.nbits += 1
        if self.nbits == 8:
            self.buf.append(self.bitbuf)
            self.bitbuf = 0
            self.nbits = 0

    cdef bytes finish(self):
        if self.nbits:
            self.buf.append(self.bitbuf << (8 - self.nbits))
        return bytes(self.buf)


def encode_bins(object bins_obj, object rows_obj, object cdfs_obj) -> bytes:
    cdef int64_t[::1] bins = np.ascontiguousarray(bins_obj, dtype=np.int64)
    cdef int64_t[::1] rows = np.ascontiguousarray(rows_obj, dtype=np.int64)
    cdef uint32_t[:, ::1] cdfs = np.ascontiguousarray(cdfs_obj, dtype=np.uint32)
    cdef Py_ssize_t n = bins.shape[0]
    if n == 0:
        return b""
    cdef Py_ssize_t width = cdfs.shape[1]

    cdef _BitWriter w = _BitWriter()
    cdef uint64_t low = 0
    cdef uint64_t high = MASK
    cdef uint64_t rng, total, c_lo, c_hi
    cdef uint64_t pending = 0
    cdef uint32_t bit, inv
    cdef Py_ssize_t i, r
    cdef int64_t s
    for i in range(n):
        r = rows[i]
        s = bins[i]
        if s < 0 or s >= width - 1:
            raise ValueError(
                f"symbol bin {s} outside CDF window of size {width - 1}"
            )
        total = cdfs[r, width - 1]
        c_lo = cdfs[r, s]
        c_hi = cdfs[r, s + 1]
        if c_lo == c_hi:
            raise ValueError(f"symbol bin {s} has zero frequency")
        rng = high - low + 1
        high = low + c_hi * rng // total - 1
        low = low + c_lo * rng // total
        while True:
            if ((low ^ high) & HALF) == 0:
                bit = <uint32_t> (low >> 31)
                w.put(bit)
                inv = bit ^ 1
                while pending:
                    w.put(inv)
                    pending -= 1
                low = (low << 1) & MASK
                high = ((high << 1) & MASK) | 1
            elif low & (~high) & QUARTER:
                pending += 1
                low = (low << 1) ^ HALF
                high = ((high ^ HALF) << 1) | HALF | 1
            else:
                break
    w.put(1)
    while pending:
        w.put(0)
        pending -= 1
    return w.finish()


def decode_bins(object data_obj, object rows_obj, object cdfs_obj):
    cdef const uint8_t[::1] data = data_obj
    cdef int64_t[::1] rows = np.ascontiguousarray(rows_obj, dtype=np.int64)
    cdef uint32_t[:, ::1] cdfs = np.ascontiguousarray(cdfs_obj, dtype=np.uint32)
    cdef Py_ssize_t n = rows.shape[0]
    out_arr = np.empty(n, dtype=np.int32)
    if n == 0:
        return out_arr
    cdef int32_t[::1] out = out_arr
    cdef Py_ssize_t width = cdfs.shape[1]

    cdef int64_t nbits_data = data.shape[0] * 8
    cdef int64_t limit = nbits_data + 32
    cdef int64_t pos = 0

    cdef uint64_t code = 0, low = 0, high = MASK
    cdef uint64_t rng, total, c_lo, c_hi, off, value
    cdef uint32_t b
    cdef Py_ssize_t i, r, lo_idx, hi_idx, mid
    for i in range(32):
        if pos < nbits_data:
            b = (data[pos >> 3] >> (7 - (pos & 7))) & 1
        else:
            b = 0
        pos += 1
        code = (code << 1) | b
    for i in range(n):
        r = rows[i]
        total = cdfs[r, width - 1]
        rng = high - low + 1
        off = code - low
        value = ((off + 1) * total - 1) // rng
        # Largest s with cdfs[r, s] <= value.
        lo_idx = 0
        hi_idx = width
        while hi_idx - lo_idx > 1:
            mid = (lo_idx + hi_idx) >> 1
            if cdfs[r, mid] <= value:
                lo_idx = mid
            else:
                hi_idx = mid
        c_lo = cdfs[r, lo_idx]
        c_hi = cdfs[r, lo_idx + 1]
        high = low + c_hi * rng // total - 1
        low = low + c_lo * rng // total
        while True:
            if ((low ^ high) & HALF) == 0:
                low = (low << 1) & MASK
                high = ((high << 1) & MASK) | 1
                if pos >= limit:
                    raise ValueError(
                        "range decoder ran past end of data: truncated stream"
                    )
                if pos < nbits_data:
                    b = (data[pos >> 3] >> (7 - (pos & 7))) & 1
                else:
                    b = 0
                pos += 1
                code = ((code << 1) & MASK) | b
            elif low & (~high) & QUARTER:
                low = (low << 1) ^ HALF
                high = ((high ^ HALF) << 1) | HALF | 1
                if pos >= limit:
                    raise ValueError(
                        "range decoder ran past end of data: truncated stream"
                    )
                if pos < nbits_data:
                    b = (data[pos >> 3] >> (7 - (pos & 7))) & 1
                else:
                    b = 0
                pos += 1
                code = (code & HALF) | ((code << 1) & (MASK >> 1)) | b
            else:
                break
        out[i] = <int32_t> lo_idx
    return out_arr
