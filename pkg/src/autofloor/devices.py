"""Built-in device presets.

Per-slot capacities are the whole-chip totals divided evenly by the slot count:

=======  =====  ==========  ==========  ========  ======  =====  =======
device   grid   LUT         FF          BRAM18K   DSP     URAM   HBM ch
=======  =====  ==========  ==========  ========  ======  =====  =======
u250     4x2    1728K / 8   3456K / 8   5376 / 8  12288/8 1280/8 0
u280     3x2    434K / 6    2607K / 6   4032 / 6  9024/6  960/6  16 in each bottom-row slot
=======  =====  ==========  ==========  ========  ======  =====  =======

Even division ignores the platform region and IO columns that make real slots
uneven, so treat these as approximations; load an inline grid for anything
more precise.
"""

from __future__ import annotations

from .model import DeviceGrid, PartitionDirective, ResourceVector, Slot

HBM_CHANNELS = 32
HBM_GROUP_SIZE = 4


def _clock_region(row: int, col: int) -> str:
    # each slot spans a 4x4 block of clock regions
    return f"CLOCKREGION_X{4 * col}Y{4 * row}:CLOCKREGION_X{4 * col + 3}Y{4 * row + 3}"


def u250() -> DeviceGrid:
    cap = ResourceVector(lut=1_728_000 // 8, ff=3_456_000 // 8, bram18k=5376 // 8, dsp=12288 // 8, uram=1280 // 8)
    slots = [Slot(r, c, cap, region=_clock_region(r, c)) for r in range(4) for c in range(2)]
    schedule = [PartitionDirective.parse(s) for s in ("H", "H", "V")]
    return DeviceGrid(4, 2, tuple(slots), tuple(schedule), name="u250")


def u280() -> DeviceGrid:
    cap = ResourceVector(lut=434_000 // 6, ff=2_607_000 // 6, bram18k=4032 // 6, dsp=9024 // 6, uram=960 // 6)
    per_slot = HBM_CHANNELS // 2
    slots = []
    for r in range(3):
        for c in range(2):
            if r == 0:
                ids = tuple(range(c * per_slot, (c + 1) * per_slot))
                slots.append(Slot(r, c, ResourceVector(*cap.as_tuple()[:-1], per_slot), hbm_channels=ids,
                                  region=_clock_region(r, c)))
            else:
                slots.append(Slot(r, c, cap, region=_clock_region(r, c)))
    schedule = [PartitionDirective.parse(s) for s in ("H2:1", "H", "V")]
    groups = tuple(tuple(range(g, g + HBM_GROUP_SIZE)) for g in range(0, HBM_CHANNELS, HBM_GROUP_SIZE))
    return DeviceGrid(3, 2, tuple(slots), tuple(schedule), hbm_groups=groups, name="u280")


PRESETS = {"u250": u250, "u280": u280}


def preset(name: str) -> DeviceGrid:
    try:
        return PRESETS[name.lower()]()
    except KeyError:
        raise KeyError(f"unknown device preset {name!r}; known: {', '.join(sorted(PRESETS))}") from None
