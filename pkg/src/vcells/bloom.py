"""Bloom filters over AP sets, parameter sizing, and the index file format.

Hashing
-------
Each item (the canonical BSSID string, UTF-8 encoded) is hashed twice with
a seeded 64-bit hash, and the k probe positions are derived by double
hashing:

    g_i = (h1 + i * h2) mod m      for i in 0..k-1

The 64-bit hash is FNV-1a with the seed XORed into the offset basis,
followed by the splitmix64 finalizer for avalanche. All arithmetic is
modulo 2**64:

    h = 14695981039346656037 XOR seed
    for each byte b:  h = (h XOR b) * 1099511628211
    h ^= h >> 30;  h *= 0xBF58476D1CE4E5B9
    h ^= h >> 27;  h *= 0x94D049BB133111EB
    h ^= h >> 31

This is fully specified so an implementation in any language reproduces
bit-identical filters; reference vectors are pinned in the test suite.

False-positive rate
-------------------
After n insertions, a probe for a fresh item answers true with
probability p = (1 - (1 - 1/m)**(k*n))**k. The evaluation runs in the
log domain so it stays exact for the million-bit range where repeated
multiplication underflows.

Index file (.vcbf)
------------------
Little-endian throughout. Header: magic ``VCBF``, u8 version (=1),
u64 m, u32 k, u64 seed1, u64 seed2, u32 cell count. Then per cell:
u32 cell id, f64 anchor lat, f64 anchor lon, u32 item count, and
ceil(m/8) filter bytes (bit i lives at byte i//8, bit i%8, LSB first).
The file ends with a u32 CRC32C (Castagnoli) of all preceding bytes.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

from .cells import VcellList
from .geo import GeoPoint

_MASK64 = (1 << 64) - 1
_FNV_OFFSET = 14695981039346656037
_FNV_PRIME = 1099511628211

DEFAULT_SEED_1 = 0x9E3779B97F4A7C15
DEFAULT_SEED_2 = 0xC2B2AE3D27D4EB4F

MAGIC = b"VCBF"
FORMAT_VERSION = 1


class IndexFormatError(ValueError):
    """Corrupt or unsupported .vcbf content."""


def mix64(z: int) -> int:
    """splitmix64 finalizer: avalanche a 64-bit value."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def hash64(data: bytes, seed: int) -> int:
    """Seeded FNV-1a 64 over ``data``, finalized with mix64."""
    h = (_FNV_OFFSET ^ seed) & _MASK64
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return mix64(h)


@dataclass(frozen=True)
class BloomParams:
    """Filter geometry shared by every cell of an index."""

    m: int
    k: int
    seed1: int = DEFAULT_SEED_1
    seed2: int = DEFAULT_SEED_2

    def __post_init__(self):
        if self.m < 8:
            raise ValueError(f"m={self.m}; need at least 8 bits")
        if not 1 <= self.k <= 64:
            raise ValueError(f"k={self.k} out of range [1, 64]")
        for s in (self.seed1, self.seed2):
            if not 0 <= s <= _MASK64:
                raise ValueError("seeds must be unsigned 64-bit integers")

    def positions(self, item: str) -> list[int]:
        """The k probe positions for an item (double hashing)."""
        data = item.encode("utf-8")
        h1 = hash64(data, self.seed1)
        h2 = hash64(data, self.seed2)
        m = self.m
        return [(h1 + i * h2) % m for i in range(self.k)]


class BloomFilter:
    """A plain m-bit Bloom filter; no false negatives, counted inserts.

    ``count`` tracks insertion calls (inserting a duplicate changes no
    bits but still increments), matching the FP-formula convention used
    for sizing.
    """

    __slots__ = ("params", "bits", "count")

    def __init__(self, params: BloomParams, bits: bytearray | None = None, count: int = 0):
        nbytes = (params.m + 7) // 8
        if bits is None:
            bits = bytearray(nbytes)
        elif len(bits) != nbytes:
            raise ValueError(f"bit array has {len(bits)} bytes, expected {nbytes}")
        self.params = params
        self.bits = bits
        self.count = count

    def insert(self, item: str) -> None:
        bits = self.bits
        for pos in self.params.positions(item):
            bits[pos >> 3] |= 1 << (pos & 7)
        self.count += 1

    def contains(self, item: str) -> bool:
        return self.test_positions(self.params.positions(item))

    def test_positions(self, positions: list[int]) -> bool:
        """Membership test against precomputed probe positions."""
        bits = self.bits
        for pos in positions:
            if not bits[pos >> 3] & (1 << (pos & 7)):
                return False
        return True

    def popcount(self) -> int:
        return sum(bin(b).count("1") for b in self.bits)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BloomFilter):
            return NotImplemented
        return (
            self.params == other.params
            and self.bits == other.bits
            and self.count == other.count
        )


def fp_rate(m: int, n: int, k: int) -> float:
    """False-positive probability (1 - (1 - 1/m)**(k*n))**k.

    Evaluated in the log domain; exact for n=0 (0.0) and m=1 (1.0).
    """
    if m < 1 or k < 1 or n < 0:
        raise ValueError(f"need m >= 1, n >= 0, k >= 1; got m={m}, n={n}, k={k}")
    if n == 0:
        return 0.0
    if m == 1:
        return 1.0
    # (1-1/m)^(kn) = exp(k*n*log1p(-1/m)); 1 minus it via expm1 for precision
    one_minus = -math.expm1(k * n * math.log1p(-1.0 / m))
    return one_minus**k


def size_for(
    n: int, target_p: float, seed1: int = DEFAULT_SEED_1, seed2: int = DEFAULT_SEED_2
) -> BloomParams:
    """Standard sizing for n items at the target false-positive rate:
    m = ceil(-n ln p / (ln 2)^2) (floored at 8 bits), k = round((m/n) ln 2),
    clamped to [1, 64]. The result satisfies fp_rate(m, n, k) <= 1.1 * target_p.
    """
    if n < 1:
        raise ValueError(f"n={n}; need at least one item")
    if not 0.0 < target_p < 1.0:
        raise ValueError(f"target_p={target_p} out of range (0, 1)")
    m = max(8, math.ceil(-n * math.log(target_p) / math.log(2) ** 2))
    k = max(1, min(64, round((m / n) * math.log(2))))
    return BloomParams(m=m, k=k, seed1=seed1, seed2=seed2)


@dataclass(frozen=True)
class IndexEntry:
    """One cell's filter plus the metadata needed to answer a lookup."""

    vcell_id: int
    anchor: GeoPoint
    n: int
    filter: BloomFilter


@dataclass(frozen=True)
class VcellIndex:
    """Per-cell Bloom filters under shared parameters, in journey order.

    ``trace_id`` and ``cc`` are in-memory provenance only; the binary
    format does not carry them.
    """

    params: BloomParams
    entries: tuple[IndexEntry, ...]
    trace_id: str = ""
    cc: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if not self.entries:
            raise ValueError("index must contain at least one cell")
        for e in self.entries:
            if e.filter.params != self.params:
                raise ValueError("all index entries must share the index parameters")

    def __len__(self) -> int:
        return len(self.entries)


def build_index(
    vcells: VcellList,
    params: BloomParams | None = None,
    target_p: float | None = None,
) -> VcellIndex:
    """Encode every cell's AP set into a Bloom filter.

    Exactly one sizing policy applies: fixed ``params``, or ``target_p``,
    which sizes for the largest cell so every cell meets the target.
    """
    if (params is None) == (target_p is None):
        raise ValueError("pass exactly one of params or target_p")
    if params is None:
        params = size_for(max(c.n_aps for c in vcells.cells), target_p)
    entries = []
    for cell in vcells.cells:
        bf = BloomFilter(params)
        for ap in sorted(cell.aps):
            bf.insert(ap)
        entries.append(
            IndexEntry(vcell_id=cell.vcell_id, anchor=cell.anchor, n=cell.n_aps, filter=bf)
        )
    return VcellIndex(
        params=params, entries=tuple(entries), trace_id=vcells.trace_id, cc=vcells.cc
    )


# CRC32C (Castagnoli), reflected polynomial 0x82F63B78, as used by iSCSI/ext4.
def _crc32c_table() -> list[int]:
    table = []
    for i in range(256):
        crc = i
        for _ in range(8):
            crc = (crc >> 1) ^ 0x82F63B78 if crc & 1 else crc >> 1
        table.append(crc)
    return table


_CRC32C_TABLE = _crc32c_table()


def crc32c(data: bytes, crc: int = 0) -> int:
    crc ^= 0xFFFFFFFF
    table = _CRC32C_TABLE
    for b in data:
        crc = table[(crc ^ b) & 0xFF] ^ (crc >> 8)
    return crc ^ 0xFFFFFFFF


_HEADER = struct.Struct("<4sBQIQQI")  # magic, version, m, k, seed1, seed2, cell count
_ENTRY = struct.Struct("<IddI")  # vcell_id, lat, lon, n


def serialize_index(index: VcellIndex) -> bytes:
    """Encode an index to the .vcbf byte format (bit-exact round trip)."""
    p = index.params
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, p.m, p.k, p.seed1, p.seed2, len(index.entries))]
    for e in index.entries:
        parts.append(_ENTRY.pack(e.vcell_id, e.anchor.lat, e.anchor.lon, e.n))
        parts.append(bytes(e.filter.bits))
    body = b"".join(parts)
    return body + struct.pack("<I", crc32c(body))


def deserialize_index(data: bytes) -> VcellIndex:
    """Decode .vcbf bytes; raises IndexFormatError on any corruption."""
    if len(data) < _HEADER.size + 4:
        raise IndexFormatError("truncated index: shorter than header")
    if data[:4] != MAGIC:
        raise IndexFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    magic, version, m, k, seed1, seed2, n_cells = _HEADER.unpack_from(data, 0)
    if version != FORMAT_VERSION:
        raise IndexFormatError(f"unsupported index version {version}")
    try:
        params = BloomParams(m=m, k=k, seed1=seed1, seed2=seed2)
    except ValueError as exc:
        raise IndexFormatError(f"invalid parameters in header: {exc}") from exc

    nbytes = (m + 7) // 8
    expected = _HEADER.size + n_cells * (_ENTRY.size + nbytes) + 4
    if len(data) != expected:
        raise IndexFormatError(f"index is {len(data)} bytes, expected {expected}")

    (stored_crc,) = struct.unpack_from("<I", data, len(data) - 4)
    actual_crc = crc32c(data[:-4])
    if stored_crc != actual_crc:
        raise IndexFormatError(
            f"checksum mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )

    entries = []
    off = _HEADER.size
    for _ in range(n_cells):
        vcell_id, lat, lon, n = _ENTRY.unpack_from(data, off)
        off += _ENTRY.size
        bits = bytearray(data[off : off + nbytes])
        off += nbytes
        entries.append(
            IndexEntry(
                vcell_id=vcell_id,
                anchor=GeoPoint(lat, lon),
                n=n,
                filter=BloomFilter(params, bits=bits, count=n),
            )
        )
    return VcellIndex(params=params, entries=tuple(entries))
