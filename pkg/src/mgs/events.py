from __future__ import annotations

from dataclasses import dataclass, field, fields

#: Column order of the one-row CSV form of an event log.
CSV_COLUMNS = ("terms", "narrow_adds", "wide_adds", "flushes", "skips",
               "final_merges", "clip_events", "avg_bitwidth", "proxy")


@dataclass
class EventLog:
    """Hardware-relevant event counts of one dot product.

    ``shifts`` counts alignment shifts (one per FP8 flush or merge, one per
    term for a conventional FP8 MAC); ``multiplies`` and ``skip_checks`` feed
    the energy proxy.  ``partial_sum_bit_trace`` holds, when recorded, the
    minimal signed width of the running sum after every consumed term.
    """

    terms: int = 0
    narrow_adds: int = 0
    wide_adds: int = 0
    flushes: int = 0
    skips: int = 0
    final_merges: int = 0
    clip_events: int = 0
    buffer_watermark: int = 0
    shifts: int = 0
    multiplies: int = 0
    skip_checks: int = 0
    partial_sum_bit_trace: list[int] | None = field(default=None, repr=False)

    def counts(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)
                if f.name != "partial_sum_bit_trace"}

    def __add__(self, other: EventLog) -> EventLog:
        out = EventLog(**{k: v + getattr(other, k) for k, v in self.counts().items()})
        out.buffer_watermark = max(self.buffer_watermark, other.buffer_watermark)
        if self.partial_sum_bit_trace is not None or other.partial_sum_bit_trace is not None:
            out.partial_sum_bit_trace = (self.partial_sum_bit_trace or []) + (other.partial_sum_bit_trace or [])
        return out


def signed_width(s: int) -> int:
    """Minimal signed bitwidth ``ceil(log2(|s| + 1)) + 1`` used for the bit trace."""
    return abs(s).bit_length() + 1
