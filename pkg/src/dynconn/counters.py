"""Approximate counters in a small floating representation.

A count ``C`` is stored as ``(mantissa, exponent)`` with value ``mantissa * 2**exponent``.
Encoding keeps the leading mantissa bits and drops the rest, so values are
always rounded down.  ``boxplus`` adds two counters at full integer width and
re-encodes the sum.

A node keeps one counter per depth ``1..d_max``.  Those are packed into a single
integer (``PackedCounters``) of lanes; each lane holds a mantissa field with a
guard bit followed by an exponent field with a guard bit.  ``packed_add`` adds
every lane at once with shift/mask arithmetic, and ``packed_add_scalar`` is the
per-slot reference used as a fallback and as a test oracle.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

from .errors import ContractError, CounterRangeError

BETA = 2
MIN_MANTISSA_BITS = 4
MIN_EXPONENT_BITS = 3

# Flip to "0" to force the per-slot loop everywhere (debugging aid).
USE_SWAR = os.environ.get("DYNCONN_SWAR", "1") != "0"


def log_log(n: int) -> int:
    """``ceil(log2(log2 n))`` clamped to at least 1."""
    if n < 4:
        return 1
    return max(1, math.ceil(math.log2(math.log2(n)) - 1e-12))


def depth_bound(n: int) -> int:
    """``d_max = max(1, floor(log2 n))``."""
    return max(1, n.bit_length() - 1)


class ApproxCounter(NamedTuple):
    mantissa: int
    exponent: int

    @property
    def value(self) -> int:
        return self.mantissa << self.exponent


ZERO = ApproxCounter(0, 0)


@dataclass(frozen=True)
class CounterFormat:
    mantissa_bits: int
    exponent_bits: int

    def __post_init__(self) -> None:
        if self.mantissa_bits < 1 or self.exponent_bits < 1:
            raise ContractError("counter fields need at least one bit")

    @classmethod
    def for_n(cls, n: int, beta: int = BETA, extra_bit: bool = True) -> CounterFormat:
        """Default format for ``n`` vertices.

        ``extra_bit`` adds one mantissa bit beyond ``beta * loglog n``.  Without it
        a single addition can lose slightly more than a ``log^-beta n`` fraction
        (for n = 2**16: 512 plus 3 rounds to 512), so the two-sided addition bound
        would not hold.
        """
        ll = log_log(n)
        mant = max(MIN_MANTISSA_BITS, beta * ll + (1 if extra_bit else 0))
        exp = max(MIN_EXPONENT_BITS, ll + 1)
        # make sure n**2 stays representable
        need = max(0, (n * n).bit_length() - mant)
        while (1 << exp) - 1 < need:
            exp += 1
        return cls(mant, exp)

    @property
    def max_value(self) -> int:
        return ((1 << self.mantissa_bits) - 1) << ((1 << self.exponent_bits) - 1)


def encode(count: int, fmt: CounterFormat) -> ApproxCounter:
    """Keep the top ``mantissa_bits`` bits of ``count``; the exponent counts the dropped bits."""
    if count < 0:
        raise CounterRangeError(f"negative count {count}")
    m = fmt.mantissa_bits
    bl = count.bit_length()
    if bl <= m:
        return ApproxCounter(count, 0)
    e = bl - m
    if e >= 1 << fmt.exponent_bits:
        raise CounterRangeError(f"count {count} does not fit the counter format")
    return ApproxCounter(count >> e, e)


def decode(c: ApproxCounter) -> int:
    return c.mantissa << c.exponent


def boxplus(a: ApproxCounter, b: ApproxCounter, fmt: CounterFormat) -> ApproxCounter:
    """Round-down sum: ``encode(decode(a) + decode(b))``."""
    return encode(decode(a) + decode(b), fmt)


def is_canonical(c: ApproxCounter, fmt: CounterFormat) -> bool:
    if c.exponent == 0:
        return 0 <= c.mantissa < 1 << fmt.mantissa_bits
    return (c.mantissa >> (fmt.mantissa_bits - 1)) == 1 and c.mantissa < 1 << fmt.mantissa_bits


class CounterLayout:
    """Bit layout of a packed array of ``slots`` counters (slot numbers start at 1)."""

    __slots__ = (
        "fmt", "slots", "m", "e", "width", "mant_lane", "exp_lane", "exp_guard",
        "carry", "lane_ones", "even", "odd", "exp_shift", "_full",
    )

    def __init__(self, fmt: CounterFormat, slots: int) -> None:
        if slots < 1:
            raise ContractError("need at least one counter slot")
        self.fmt = fmt
        self.slots = slots
        self.m = fmt.mantissa_bits
        self.e = fmt.exponent_bits
        self.exp_shift = self.m + 1
        self.width = self.m + 1 + self.e + 1
        w = self.width
        rep = sum(1 << (k * w) for k in range(slots))
        self.lane_ones = rep
        self.mant_lane = rep * ((1 << self.m) - 1)
        self.carry = rep << self.m
        self.exp_lane = rep * ((1 << self.e) - 1)
        self.exp_guard = rep << self.e
        even = sum(1 << (k * w) for k in range(0, slots, 2))
        self.even = even * ((1 << w) - 1)
        self.odd = (rep - even) * ((1 << w) - 1)
        self._full = rep * ((1 << w) - 1)

    @classmethod
    def for_n(cls, n: int, fmt: CounterFormat | None = None) -> CounterLayout:
        return cls(fmt or CounterFormat.for_n(n), depth_bound(n))

    def _check(self, i: int) -> None:
        if not 1 <= i <= self.slots:
            raise ContractError(f"counter slot {i} outside 1..{self.slots}")

    def lane(self, c: ApproxCounter) -> int:
        return c.mantissa | (c.exponent << self.exp_shift)

    def get(self, packed: int, i: int) -> ApproxCounter:
        self._check(i)
        x = packed >> ((i - 1) * self.width)
        return ApproxCounter(x & ((1 << self.m) - 1), (x >> self.exp_shift) & ((1 << self.e) - 1))

    def get_value(self, packed: int, i: int) -> int:
        x = packed >> ((i - 1) * self.width)
        return (x & ((1 << self.m) - 1)) << ((x >> self.exp_shift) & ((1 << self.e) - 1))

    def set(self, packed: int, i: int, c: ApproxCounter) -> int:
        self._check(i)
        shift = (i - 1) * self.width
        packed &= ~(((1 << self.width) - 1) << shift)
        return packed | (self.lane(c) << shift)

    def set_count(self, packed: int, i: int, count: int) -> int:
        return self.set(packed, i, encode(count, self.fmt))

    def pack(self, counters: list[ApproxCounter]) -> int:
        if len(counters) != self.slots:
            raise ContractError("wrong number of counters")
        out = 0
        for k, c in enumerate(counters):
            out |= self.lane(c) << (k * self.width)
        return out

    def unpack(self, packed: int) -> list[ApproxCounter]:
        return [self.get(packed, i) for i in range(1, self.slots + 1)]

    def slot_mask(self, i: int) -> int:
        return ((1 << self.width) - 1) << ((i - 1) * self.width)

    @lru_cache(maxsize=4096)
    def mask_for_slots(self, slot_bits: int) -> int:
        """Lane mask for a bitmap whose bit ``i-1`` selects slot ``i``."""
        out = 0
        full = (1 << self.width) - 1
        k = 0
        while slot_bits:
            if slot_bits & 1:
                out |= full << (k * self.width)
            slot_bits >>= 1
            k += 1
        return out

    def any_increase(self, old: int, new: int) -> bool:
        """True if some slot of ``new`` is larger than the same slot of ``old``.

        Lane words compare like the values they encode because encodings are canonical.
        """
        if new == old:
            return False
        w = self.width
        full = (1 << w) - 1
        while new:
            if (new & full) > (old & full):
                return True
            new >>= w
            old >>= w
        return False

    def __hash__(self) -> int:
        return hash((self.fmt, self.slots))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, CounterLayout) and (self.fmt, self.slots) == (other.fmt, other.slots)


def packed_get(packed: int, i: int, layout: CounterLayout) -> ApproxCounter:
    return layout.get(packed, i)


def packed_set(packed: int, i: int, c: ApproxCounter, layout: CounterLayout) -> int:
    return layout.set(packed, i, c)


def packed_add_scalar(a: int, b: int, layout: CounterLayout) -> int:
    """Per-slot loop; reference for ``packed_add``."""
    out = 0
    fmt = layout.fmt
    for i in range(1, layout.slots + 1):
        s = boxplus(layout.get(a, i), layout.get(b, i), fmt)
        out |= layout.lane(s) << ((i - 1) * layout.width)
    return out


def _spread(bits: int, width: int) -> int:
    # one bit per lane (at the lane's bit 0) -> all ones across that lane
    return bits * ((1 << width) - 1)


def _shift_lanes_right(x: int, amount: int, layout: CounterLayout) -> int:
    """Shift each lane's mantissa right by that lane's entry of ``amount`` (exponent-field units)."""
    w = layout.width
    ones = layout.lane_ones
    k = 0
    while True:
        step = 1 << k
        if step >= layout.m:
            break
        sel = _spread((amount >> k) & ones, w)
        if sel:
            moved = 0
            # even and odd lanes separately, so bits leaving a lane land in an idle lane
            for part in (layout.even, layout.odd):
                src = x & sel & part
                if src:
                    moved |= (src >> step) & part
            x = (x & ~sel) | (moved & layout.mant_lane)
        k += 1
    return x


def packed_add(a: int, b: int, layout: CounterLayout, swar: bool | None = None) -> int:
    """Lane-wise ``boxplus`` of two packed arrays."""
    if not b:
        return a
    if not a:
        return b
    if not (USE_SWAR if swar is None else swar):
        return packed_add_scalar(a, b, layout)
    w = layout.width
    m = layout.m
    ones = layout.lane_ones
    es = layout.exp_shift
    ea = (a >> es) & layout.exp_lane
    eb = (b >> es) & layout.exp_lane
    # lanes where ea >= eb
    ge = (((ea | layout.exp_guard) - eb) & layout.exp_guard) >> layout.e
    sel = _spread(ge, w)
    ma = a & layout.mant_lane
    mb = b & layout.mant_lane
    hi_e = (ea & sel) | (eb & ~sel & layout._full)
    lo_e = (eb & sel) | (ea & ~sel & layout._full)
    hi_m = (ma & sel) | (mb & ~sel & layout._full)
    lo_m = (mb & sel) | (ma & ~sel & layout._full)
    d = hi_e - lo_e
    # lanes whose gap reaches the mantissa width contribute nothing
    big = 0
    if m <= 1 << layout.e:
        big = ((d | layout.exp_guard) - ones * m) & layout.exp_guard
    if big:
        kill = _spread(big >> layout.e, w)
        lo_m &= ~kill
        d &= ~kill
    lo_m = _shift_lanes_right(lo_m, d, layout)
    s = hi_m + lo_m
    c = (s & layout.carry) >> m
    if c:
        csel = _spread(c, w)
        s = (s & ~csel) | (((s & csel) >> 1) & layout.mant_lane)
        hi_e = hi_e + c
    return (s & layout.mant_lane) | (hi_e << es)
