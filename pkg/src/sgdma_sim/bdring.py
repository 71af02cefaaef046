"""Buffer-descriptor rings: construction, validation and the 64-byte image.

Descriptor image layout (little-endian)::

    offset  0  u64  next_bd_addr
    offset  8  u64  base_addr
    offset 16  u32  control: bits 0..25 length, bit 26 end_of_ring, bit 27 start_of_ring
    offset 20  u32  status:  bits 0..30 status_word, bit 31 complete
    offset 24..63   reserved, zero
"""

from __future__ import annotations

import bisect
import enum
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import CapacityExceeded, InvalidRing, OverlapDetected, ZeroLengthPayload
from .memmodel import MemoryMap, Region

BD_BYTES = 64
LENGTH_BITS = 26
MAX_LENGTH = (1 << LENGTH_BITS) - 1
MAX_RING_BDS = 1 << 16
STATUS_MASK = (1 << 31) - 1

_EOR_BIT = 1 << 26
_SOR_BIT = 1 << 27
_COMPLETE_BIT = 1 << 31
_LAYOUT = struct.Struct("<QQII40x")
_RANDOM_ATTEMPTS = 128


class BdFlag(enum.IntFlag):
    NONE = 0
    START_OF_RING = enum.auto()
    END_OF_RING = enum.auto()
    COMPLETE = enum.auto()


class Placement(str, enum.Enum):
    SEQUENTIAL = "sequential"
    RANDOM = "random"


@dataclass(frozen=True)
class BufferDescriptor:
    base_addr: int
    length: int
    next_bd_addr: int
    flags: BdFlag = BdFlag.NONE
    status_word: int = 0

    def pack(self) -> bytes:
        control = self.length & MAX_LENGTH
        if self.flags & BdFlag.END_OF_RING:
            control |= _EOR_BIT
        if self.flags & BdFlag.START_OF_RING:
            control |= _SOR_BIT
        status = self.status_word & STATUS_MASK
        if self.flags & BdFlag.COMPLETE:
            status |= _COMPLETE_BIT
        return _LAYOUT.pack(self.next_bd_addr, self.base_addr, control, status)

    @classmethod
    def unpack(cls, raw: bytes) -> "BufferDescriptor":
        next_addr, base, control, status = _LAYOUT.unpack(raw)
        flags = BdFlag.NONE
        if control & _EOR_BIT:
            flags |= BdFlag.END_OF_RING
        if control & _SOR_BIT:
            flags |= BdFlag.START_OF_RING
        if status & _COMPLETE_BIT:
            flags |= BdFlag.COMPLETE
        return cls(base, control & MAX_LENGTH, next_addr, flags, status & STATUS_MASK)


@dataclass(frozen=True)
class RingSpec:
    n_bds: int
    bytes_per_bd: int
    placement: Placement = Placement.SEQUENTIAL
    rng_seed: int = 0
    n_cycles: int = 1


@dataclass(frozen=True)
class BdRing:
    """Descriptors stored contiguously from ``bd_base_addr``."""

    bd_base_addr: int
    descriptors: tuple[BufferDescriptor, ...]
    n_cycles: int = 1
    placement: Placement = Placement.SEQUENTIAL
    rng_seed: int = 0

    def __len__(self) -> int:
        return len(self.descriptors)

    def addr_of(self, index: int) -> int:
        return self.bd_base_addr + BD_BYTES * index

    def index_of(self, addr: int) -> int | None:
        off = addr - self.bd_base_addr
        if off < 0 or off % BD_BYTES or off // BD_BYTES >= len(self.descriptors):
            return None
        return off // BD_BYTES

    def traversal(self) -> list[int]:
        """Descriptor indices in next-pointer order starting at the head.

        Raises :class:`InvalidRing` if the chain does not close over every
        descriptor.
        """
        order = _walk(self)
        if order is None or len(order) != len(self.descriptors):
            raise InvalidRing("descriptor chain is not a single closed cycle")
        return order

    def lengths(self) -> list[int]:
        """Payload lengths in traversal order (one ring pass)."""
        return [self.descriptors[i].length for i in self.traversal()]

    @property
    def payload_bytes(self) -> int:
        return sum(d.length for d in self.descriptors)


@dataclass(frozen=True)
class Violation:
    code: str
    bd_index: int | None
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.violations)

    def __iter__(self) -> Iterator[Violation]:
        return iter(self.violations)

    def __len__(self) -> int:
        return len(self.violations)

    @property
    def codes(self) -> set[str]:
        return {v.code for v in self.violations}

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, bd_index: int | None, message: str):
        self.violations.append(Violation(code, bd_index, message))


def _walk(ring: BdRing) -> list[int] | None:
    if not ring.descriptors:
        return None
    order = [0]
    seen = {0}
    cur = 0
    while True:
        nxt = ring.index_of(ring.descriptors[cur].next_bd_addr)
        if nxt == 0:
            return order
        if nxt is None or nxt in seen:
            return None
        order.append(nxt)
        seen.add(nxt)
        cur = nxt


def _check_prespec(spec: RingSpec, memory_map: MemoryMap):
    if spec.n_bds < 1:
        raise CapacityExceeded("a ring needs at least one descriptor")
    if spec.bytes_per_bd <= 0:
        raise ZeroLengthPayload("bytes_per_bd must be > 0")
    if spec.bytes_per_bd > MAX_LENGTH:
        raise CapacityExceeded(f"bytes_per_bd {spec.bytes_per_bd} overflows the 26-bit length field")
    if spec.n_bds * BD_BYTES > memory_map.ring_bytes:
        raise CapacityExceeded(
            f"{spec.n_bds} descriptors need {spec.n_bds * BD_BYTES} B; ring region holds {memory_map.ring_bytes} B")
    if spec.n_bds * spec.bytes_per_bd > memory_map.buffer_bytes:
        raise CapacityExceeded("buffers do not fit in the buffer region")
    if spec.n_cycles < 1:
        raise CapacityExceeded("n_cycles must be >= 1")


def _random_addresses(n: int, length: int, memory_map: MemoryMap, seed: int) -> list[int]:
    rng = np.random.default_rng(seed)
    base = memory_map.buffer_base
    n_slots = (memory_map.buffer_bytes - length) // BD_BYTES + 1
    starts: list[int] = []  # sorted
    out = []
    for _ in range(n):
        for _attempt in range(_RANDOM_ATTEMPTS):
            addr = base + BD_BYTES * int(rng.integers(n_slots))
            pos = bisect.bisect_left(starts, addr)
            if pos > 0 and starts[pos - 1] + length > addr:
                continue
            if pos < len(starts) and addr + length > starts[pos]:
                continue
            starts.insert(pos, addr)
            out.append(addr)
            break
        else:
            raise OverlapDetected(
                f"could not place buffer {len(out)} of {n} without overlap after {_RANDOM_ATTEMPTS} draws")
    return out


def create_ring(spec: RingSpec, memory_map: MemoryMap | None = None) -> BdRing:
    memory_map = memory_map or MemoryMap()
    _check_prespec(spec, memory_map)
    n, length = spec.n_bds, spec.bytes_per_bd
    if Placement(spec.placement) is Placement.SEQUENTIAL:
        addrs = [memory_map.buffer_base + i * length for i in range(n)]
    else:
        addrs = _random_addresses(n, length, memory_map, spec.rng_seed)
    head = memory_map.ring_base
    descs = []
    for i, addr in enumerate(addrs):
        flags = BdFlag.NONE
        if i == 0:
            flags |= BdFlag.START_OF_RING
        if i == n - 1:
            flags |= BdFlag.END_OF_RING
        nxt = head + BD_BYTES * ((i + 1) % n)
        descs.append(BufferDescriptor(addr, length, nxt, flags))
    ring = BdRing(head, tuple(descs), spec.n_cycles, Placement(spec.placement), spec.rng_seed)
    report = validate_ring(ring, memory_map)
    if not report.ok:  # construction bug, not a user error
        raise InvalidRing(f"constructed ring failed validation: {report.codes}")
    return ring


def validate_ring(ring: BdRing, memory_map: MemoryMap | None = None) -> ValidationReport:
    memory_map = memory_map or MemoryMap()
    report = ValidationReport()
    n = len(ring.descriptors)
    if n == 0:
        report.add("EmptyRing", None, "ring has no descriptors")
        return report
    if n > MAX_RING_BDS:
        report.add("TooManyDescriptors", None, f"{n} descriptors exceed {MAX_RING_BDS}")
    if ring.n_cycles < 1:
        report.add("InvalidCycleCount", None, "n_cycles must be >= 1")
    if ring.bd_base_addr % BD_BYTES:
        report.add("MisalignedDescriptor", 0, f"ring base {ring.bd_base_addr:#x} is not 64-byte aligned")
    if not memory_map.contains(Region.RING, ring.bd_base_addr, n * BD_BYTES):
        report.add("RingOutOfRegion", None, "descriptor storage lies outside the ring region")
    for i, d in enumerate(ring.descriptors):
        if d.length == 0:
            report.add("ZeroLengthPayload", i, "descriptor has zero length")
        elif d.length > MAX_LENGTH:
            report.add("LengthFieldOverflow", i, f"length {d.length} does not fit 26 bits")
        if d.status_word > STATUS_MASK or d.status_word < 0:
            report.add("StatusFieldOverflow", i, "status word does not fit 31 bits")
        if not memory_map.contains(Region.BUFFER, d.base_addr, max(d.length, 1)):
            report.add("BufferOutOfRegion", i, f"buffer {d.base_addr:#x}+{d.length} is outside the buffer region")
    order = _walk(ring)
    if order is None:
        report.add("RingNotClosed", None, "following next pointers from the head does not return to it")
    elif len(order) != n:
        missing = sorted(set(range(n)) - set(order))
        report.add("UnreachableDescriptor", missing[0], f"{len(missing)} descriptors are not on the cycle")
    return report


def serialize_ring(ring: BdRing, memory_map: MemoryMap | None = None) -> bytes:
    report = validate_ring(ring, memory_map)
    if not report.ok:
        raise InvalidRing("; ".join(f"{v.code}: {v.message}" for v in report))
    return b"".join(d.pack() for d in ring.descriptors)


def deserialize_ring(image: bytes, bd_base_addr: int | None = None, n_cycles: int = 1,
                     placement: Placement = Placement.SEQUENTIAL, rng_seed: int = 0) -> BdRing:
    """Inverse of :func:`serialize_ring`; does not validate."""
    if len(image) == 0 or len(image) % BD_BYTES:
        raise InvalidRing(f"image length {len(image)} is not a positive multiple of {BD_BYTES}")
    if bd_base_addr is None:
        bd_base_addr = MemoryMap().ring_base
    descs = tuple(BufferDescriptor.unpack(image[i:i + BD_BYTES]) for i in range(0, len(image), BD_BYTES))
    return BdRing(bd_base_addr, descs, n_cycles, placement, rng_seed)


def write_ring_image(path: str | Path, ring: BdRing, memory_map: MemoryMap | None = None):
    Path(path).write_bytes(serialize_ring(ring, memory_map))


def read_ring_image(path: str | Path, bd_base_addr: int | None = None) -> BdRing:
    return deserialize_ring(Path(path).read_bytes(), bd_base_addr)


def unroll(ring: BdRing) -> BdRing:
    """A one-pass ring with ``n_cycles * len(ring)`` descriptors sharing the same buffers."""
    order = ring.traversal()
    seq = [ring.descriptors[i] for i in order] * ring.n_cycles
    n = len(seq)
    descs = []
    for i, d in enumerate(seq):
        flags = BdFlag.NONE
        if i == 0:
            flags |= BdFlag.START_OF_RING
        if i == n - 1:
            flags |= BdFlag.END_OF_RING
        descs.append(BufferDescriptor(d.base_addr, d.length, ring.bd_base_addr + BD_BYTES * ((i + 1) % n), flags))
    return replace(ring, descriptors=tuple(descs), n_cycles=1)


def ring_from_lengths(lengths: Sequence[int], n_cycles: int = 1, memory_map: MemoryMap | None = None) -> BdRing:
    """Closed ring with the given payload lengths packed sequentially."""
    memory_map = memory_map or MemoryMap()
    n = len(lengths)
    head = memory_map.ring_base
    addr = memory_map.buffer_base
    descs = []
    for i, length in enumerate(lengths):
        flags = BdFlag.NONE
        if i == 0:
            flags |= BdFlag.START_OF_RING
        if i == n - 1:
            flags |= BdFlag.END_OF_RING
        descs.append(BufferDescriptor(addr, int(length), head + BD_BYTES * ((i + 1) % n), flags))
        addr += -(-int(length) // BD_BYTES) * BD_BYTES
    return BdRing(head, tuple(descs), n_cycles)
