"""Range coding over quantized CDF tables.

The sequential per-symbol loop is the codec's hot kernel outside the
network forwards, so it lives in a compiled extension when available; the
pure-Python twin is selected at import when the build is missing.  Both
consume integerized CDFs only, so coded bytes are identical across
backends, runs, and platforms.
"""

import numpy as np

from . import _range_py

try:
    from . import _range_fast

    _DEFAULT = _range_fast
    CODER_BACKEND = "compiled"
except ImportError:
    _DEFAULT = _range_py
    CODER_BACKEND = "python"

PRECISION = 16
TOTAL_FREQ = 1 << PRECISION

# Symbol windows are clamped to this range; encoding a value outside it is
# an explicit error rather than a silent table blow-up.
SYMBOL_BOUND = 255


def backends() -> dict:
    out = {"python": _range_py}
    if CODER_BACKEND == "compiled":
        out["compiled"] = _range_fast
    return out


def quantize_cdf(pmf: np.ndarray) -> np.ndarray:
    """Integerize pmf rows to strictly increasing uint32 CDFs totalling 2^16.

    pmf has shape (rows, bins); every bin receives frequency >= 1 so any
    in-window symbol stays encodable.  Deterministic (no RNG, floor-based).
    """
    pmf = np.asarray(pmf, dtype=np.float64)
    if pmf.ndim != 2:
        raise ValueError("pmf must be 2-D (rows, bins)")
    rows, bins = pmf.shape
    if bins < 1:
        raise ValueError("pmf needs at least one bin")
    if bins > TOTAL_FREQ // 2:
        raise ValueError("too many bins for the frequency precision")
    pmf = np.clip(pmf, 0.0, None)
    mass = pmf.sum(axis=1, keepdims=True)
    if not np.all(np.isfinite(mass)) :
        raise ValueError("pmf contains non-finite values")
    scale = np.where(mass > 0, (TOTAL_FREQ - bins) / np.where(mass > 0, mass, 1.0), 0.0)
    freq = np.floor(pmf * scale).astype(np.uint32) + 1
    deficit = (TOTAL_FREQ - freq.sum(axis=1)).astype(np.uint32)
    top = pmf.argmax(axis=1)
    np.put_along_axis(
        freq, top[:, None], np.take_along_axis(freq, top[:, None], 1) + deficit[:, None], 1
    )
    cdf = np.zeros((rows, bins + 1), dtype=np.uint32)
    np.cumsum(freq, axis=1, out=cdf[:, 1:])
    return cdf


def range_encode(symbols, window_lo: int, cdfs: np.ndarray, row_idx=None) -> bytes:
    """Losslessly code integer symbols with per-symbol CDF rows.

    `cdfs[row_idx[i]]` is the quantized CDF for symbol i over the window
    starting at `window_lo`; with row_idx None, row i is used for symbol i.
    """
    symbols = np.asarray(symbols, dtype=np.int64).ravel()
    if row_idx is None:
        row_idx = np.arange(symbols.size, dtype=np.int64)
    else:
        row_idx = np.asarray(row_idx, dtype=np.int64).ravel()
    if row_idx.size != symbols.size:
        raise ValueError("row_idx length must match symbols")
    bins = symbols - int(window_lo)
    nbin = cdfs.shape[1] - 1
    if symbols.size and (bins.min() < 0 or bins.max() >= nbin):
        bad = symbols[(bins < 0) | (bins >= nbin)][0]
        raise ValueError(f"symbol {int(bad)} outside coding window")
    return _DEFAULT.encode_bins(bins, row_idx, cdfs)


def range_decode(data: bytes, count: int, window_lo: int, cdfs: np.ndarray, row_idx=None) -> np.ndarray:
    """Inverse of range_encode; returns int64 symbols."""
    if row_idx is None:
        row_idx = np.arange(count, dtype=np.int64)
    else:
        row_idx = np.asarray(row_idx, dtype=np.int64).ravel()
        if row_idx.size != count:
            raise ValueError("row_idx length must match count")
    bins = _DEFAULT.decode_bins(data, row_idx, cdfs)
    return bins.astype(np.int64) + int(window_lo)


def symbol_window(values: np.ndarray) -> tuple[int, int]:
    """Per-tensor window [lo, hi], clamped to +-SYMBOL_BOUND."""
    values = np.asarray(values)
    if values.size == 0:
        return 0, 0
    lo = int(values.min())
    hi = int(values.max())
    if lo < -SYMBOL_BOUND or hi > SYMBOL_BOUND:
        raise ValueError(
            f"latent values [{lo}, {hi}] exceed the +-{SYMBOL_BOUND} coding bound"
        )
    return lo, hi
