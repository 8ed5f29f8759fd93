"""Square QAM constellations with Gray bit labels and probability assignments.

Constellation points live on the odd-integer grid {±1, ±3, ...} per rail,
scaled by a single positive factor ``scaling``. The probability mass function
rides on the constellation object so that shaped and uniform inputs share one
code path everywhere downstream (modulator, demapper, MI estimation).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np

SUPPORTED_ORDERS = (4, 16, 64)

PMF_SUM_TOL = 1e-12


def _gray_codes(nbits: int) -> np.ndarray:
    i = np.arange(1 << nbits)
    return i ^ (i >> 1)


@dataclass(frozen=True, eq=False)
class Constellation:
    """Square QAM constellation: points, per-point bit labels, and a pmf.

    Attributes
    ----------
    points : np.ndarray
        Complex amplitudes, length M.
    labels : np.ndarray
        (M, log2(M)) uint8 bit matrix; row i is the label of points[i].
        The first log2(M)/2 bits address the I rail, the rest the Q rail;
        within each rail bit 0 is the sign bit of a binary-reflected Gray
        code over the ascending amplitude levels.
    pmf : np.ndarray
        Probability per point; nonnegative, sums to 1.
    scaling : float
        Grid scale Δ; points = Δ × odd-integer template.
    """

    points: np.ndarray
    labels: np.ndarray
    pmf: np.ndarray
    scaling: float
    _label_ints: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.complex128)
        labels = np.asarray(self.labels, dtype=np.uint8)
        pmf = np.asarray(self.pmf, dtype=np.float64)
        m = points.size
        if labels.shape != (m, int(np.log2(m))):
            raise ValueError(f"labels must have shape ({m}, log2({m}))")
        if pmf.shape != (m,):
            raise ValueError(f"pmf must have length {m}")
        if np.any(pmf < 0):
            raise ValueError("pmf entries must be nonnegative")
        if abs(pmf.sum() - 1.0) > PMF_SUM_TOL:
            raise ValueError(f"pmf must sum to 1 within {PMF_SUM_TOL}")
        ints = labels @ (1 << np.arange(labels.shape[1] - 1, -1, -1))
        if np.unique(ints).size != m:
            raise ValueError("labels must be distinct")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "pmf", pmf)
        object.__setattr__(self, "_label_ints", ints.astype(np.int64))

    @property
    def order(self) -> int:
        return self.points.size

    @property
    def bits_per_symbol(self) -> int:
        return self.labels.shape[1]

    def index_of_labels(self, bits: np.ndarray) -> np.ndarray:
        """Map rows of label bits, shape (..., bits_per_symbol), to point indices."""
        bits = np.asarray(bits, dtype=np.int64)
        ints = bits @ (1 << np.arange(self.bits_per_symbol - 1, -1, -1))
        lut = np.empty(self.order, dtype=np.int64)
        lut[self._label_ints] = np.arange(self.order)
        return lut[ints]


def build_qam(order: int, labeling: str = "gray") -> Constellation:
    """Build a square QAM constellation with unit average power under the
    uniform pmf and binary-reflected Gray labeling applied per rail
    (I-rail bits first).

    Parameters
    ----------
    order : {4, 16, 64}
        Constellation size.
    labeling : str
        Only "gray" is supported.

    Returns
    -------
    Constellation
    """
    if order not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported QAM order {order}; expected one of {SUPPORTED_ORDERS}")
    if labeling != "gray":
        raise ValueError(f"unsupported labeling {labeling!r}; only 'gray' is implemented")
    k = int(np.log2(order)) // 2  # bits per rail
    nlev = 1 << k
    levels = np.arange(-(nlev - 1), nlev, 2, dtype=np.float64)  # ascending odd grid
    # invert the Gray map: label g sits at the level index whose gray code is g
    gray = _gray_codes(k)
    rail_labels = np.zeros((nlev, k), dtype=np.uint8)
    for idx, g in enumerate(gray):
        rail_labels[idx] = [(g >> (k - 1 - b)) & 1 for b in range(k)]

    m = order
    points = np.empty(m, dtype=np.complex128)
    labels = np.empty((m, 2 * k), dtype=np.uint8)
    for ii in range(nlev):
        for qq in range(nlev):
            j = ii * nlev + qq
            points[j] = levels[ii] + 1j * levels[qq]
            labels[j, :k] = rail_labels[ii]
            labels[j, k:] = rail_labels[qq]

    scaling = 1.0 / np.sqrt(np.mean(np.abs(points) ** 2))
    pmf = np.full(m, 1.0 / m)
    return Constellation(points * scaling, labels, pmf, scaling)


def set_pmf(c: Constellation, pmf: np.ndarray) -> Constellation:
    """Return a copy of ``c`` carrying a new pmf; points and labels unchanged."""
    pmf = np.asarray(pmf, dtype=np.float64)
    if pmf.shape != (c.order,):
        raise ValueError(f"pmf must have length {c.order}, got {pmf.shape}")
    if np.any(pmf < 0):
        raise ValueError("pmf entries must be nonnegative")
    if abs(pmf.sum() - 1.0) > PMF_SUM_TOL:
        raise ValueError(f"pmf must sum to 1 within {PMF_SUM_TOL} (got sum {pmf.sum()!r})")
    return replace(c, pmf=pmf, _label_ints=None)


def scale(c: Constellation, s: float) -> Constellation:
    """Scale the constellation geometry by s > 0; pmf unchanged."""
    if not s > 0:
        raise ValueError("scale factor must be positive")
    return replace(c, points=c.points * s, scaling=c.scaling * s, _label_ints=None)


def average_power(c: Constellation) -> float:
    """pmf-weighted mean of |x|^2."""
    return float(np.sum(c.pmf * np.abs(c.points) ** 2))


def min_distance(c: Constellation) -> float:
    """Minimum Euclidean distance between constellation points (= 2Δ on the grid)."""
    return 2.0 * c.scaling


def bit_marginals(c: Constellation) -> np.ndarray:
    """Per-bit-position probability of bit = 1 under the symbol pmf."""
    return c.pmf @ c.labels


def to_table(c: Constellation) -> str:
    """Serialize to a plain-text table: index, re, im, label, pmf."""
    buf = io.StringIO()
    buf.write("# index re im label pmf\n")
    for j in range(c.order):
        label = "".join(str(b) for b in c.labels[j])
        buf.write(f"{j} {float(c.points[j].real)!r} {float(c.points[j].imag)!r} "
                  f"{label} {float(c.pmf[j])!r}\n")
    return buf.getvalue()


def from_table(text: str) -> Constellation:
    """Parse the output of :func:`to_table`."""
    points, labels, pmf = [], [], []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        _, re_s, im_s, label, p_s = line.split()
        points.append(complex(float(re_s), float(im_s)))
        labels.append([int(b) for b in label])
        pmf.append(float(p_s))
    points = np.asarray(points)
    # recover Δ from the point grid: smallest distinct positive I coordinate
    pos = np.unique(np.abs(points.real))
    pos = pos[pos > 0]
    scaling = float(pos.min())
    return Constellation(points, np.asarray(labels, dtype=np.uint8),
                         np.asarray(pmf), scaling)


def save_table(c: Constellation, path) -> None:
    with open(path, "w") as f:
        f.write(to_table(c))


def load_table(path) -> Constellation:
    with open(path) as f:
        return from_table(f.read())
