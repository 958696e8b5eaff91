"""AEMP v1.2 fleet snapshots: parsing, fuel bucketing and distribution fitting.

All timestamps are handled as UTC; feeds that omit the offset are read as UTC.
"""
from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from .stochproc import CompoundPoissonFit, fit_compound_poisson_mle

AEMP_NS = "http://schemas.aemp.org/fleet"
MIN_BUCKETS = 30


class TelemetryError(ValueError):
    pass


class TelemetryParseError(TelemetryError):
    pass


class UnitError(TelemetryError):
    pass


class DataIntegrityError(TelemetryError):
    pass


class InsufficientDataError(TelemetryError):
    pass


_DT = re.compile(
    r"(\d{4})-(\d{2})-(\d{2})[T ](\d{2}):(\d{2}):(\d{2})(?:\.(\d+))?(Z|[+-]\d{2}:?\d{2})?$"
)
_DUR = re.compile(r"P(?:(\d+(?:\.\d+)?)D)?(?:T(?:(\d+(?:\.\d+)?)H)?(?:(\d+(?:\.\d+)?)M)?(?:(\d+(?:\.\d+)?)S)?)?$")


def parse_datetime(text: str) -> datetime:
    """ISO 8601 instant; fractions beyond microseconds are cut, missing offsets mean UTC."""
    m = _DT.match(text.strip())
    if not m:
        raise TelemetryParseError(f"bad timestamp '{text}'")
    y, mo, d, h, mi, s, frac, tz = m.groups()
    us = int((frac or "0")[:6].ljust(6, "0"))
    off = timezone.utc
    if tz and tz != "Z":
        sign = 1 if tz[0] == "+" else -1
        digits = tz[1:].replace(":", "")
        off = timezone(sign * timedelta(hours=int(digits[:2]), minutes=int(digits[2:])))
    dt = datetime(int(y), int(mo), int(d), int(h), int(mi), int(s), us, tzinfo=off)
    return dt.astimezone(timezone.utc)


def parse_duration(text: str) -> timedelta:
    """ISO 8601 duration limited to days, hours, minutes and seconds (``P28DT7H``)."""
    m = _DUR.match(text.strip())
    if not m or text.strip() in ("P", "PT"):
        raise TelemetryParseError(f"bad duration '{text}'")
    d, h, mi, s = (float(x) if x else 0.0 for x in m.groups())
    return timedelta(days=d, hours=h, minutes=mi, seconds=s)


def format_duration(td: timedelta) -> str:
    secs = td.total_seconds()
    days, rem = divmod(secs, 86400)
    h, rem = divmod(rem, 3600)
    mi, s = divmod(rem, 60)
    out = f"P{int(days)}D" if days else "P"
    t = "".join(f"{int(v)}{u}" for v, u in ((h, "H"), (mi, "M")) if v)
    if s:
        t += f"{s:g}S"
    return out + ("T" + t if t else ("" if days else "T0H"))


def _fmt_dt(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


@dataclass(frozen=True)
class EquipmentSnapshot:
    make: str | None
    model: str | None
    equipment_id: str | None
    serial_number: str | None = None
    timestamp: datetime | None = None
    latitude: float | None = None
    longitude: float | None = None
    location_time: datetime | None = None
    operating_hours: timedelta | None = None
    fuel_consumed: float | None = None
    fuel_time: datetime | None = None
    odometer: float | None = None
    flags: tuple = field(default=())

    @property
    def has_fuel(self) -> bool:
        return self.fuel_consumed is not None


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _child(el, name):
    for c in el:
        if _local(c.tag) == name:
            return c
    return None


def _text(el, name):
    c = _child(el, name) if el is not None else None
    return c.text.strip() if c is not None and c.text is not None else None


def _float(v, what):
    if v is None:
        return None
    try:
        return float(v)
    except ValueError:
        raise TelemetryParseError(f"{what}: '{v}' is not a number") from None


def _dt_attr(el):
    v = el.get("datetime") if el is not None else None
    return parse_datetime(v) if v else None


def parse_aemp_fleet(xml: str | bytes) -> list:
    """One :class:`EquipmentSnapshot` per ``Equipment`` element, in document order.

    The snapshot timestamp is the fuel reading's time, else the location's,
    else the fleet ``snapshotTime``.
    """
    try:
        root = ET.fromstring(xml)
    except ET.ParseError as e:
        line, col = e.position
        raise TelemetryParseError(f"malformed XML at line {line}, column {col}: {e}") from None
    if _local(root.tag) != "Fleet":
        raise TelemetryParseError(f"root element is '{_local(root.tag)}', expected 'Fleet'")
    fleet_time = parse_datetime(root.get("snapshotTime")) if root.get("snapshotTime") else None
    out = []
    for eq in root:
        if _local(eq.tag) != "Equipment":
            continue
        head = _child(eq, "EquipmentHeader")
        loc = _child(eq, "Location")
        hours = _child(eq, "CumulativeOperatingHours")
        fuel = _child(eq, "FuelUsed")
        dist = _child(eq, "Distance")
        flags = []
        consumed = None
        if fuel is None:
            flags.append("missing_fuel")
        else:
            unit = _text(fuel, "FuelUnits")
            if unit is None or unit.lower() != "liter":
                raise UnitError(f"unsupported fuel unit '{unit}' (expected 'liter')")
            consumed = _float(_text(fuel, "FuelConsumed"), "FuelConsumed")
            if consumed is None:
                flags.append("missing_fuel")
        odo = None
        if dist is not None:
            odo_unit = _text(dist, "OdometerUnits")
            odo = _float(_text(dist, "Odometer"), "Odometer")
            if odo is not None and odo_unit and odo_unit.lower() != "kilometer":
                raise UnitError(f"unsupported odometer unit '{odo_unit}' (expected 'kilometer')")
        hrs = _text(hours, "Hour")
        ts = _dt_attr(fuel) or _dt_attr(loc) or fleet_time
        out.append(EquipmentSnapshot(
            make=_text(head, "Make"),
            model=_text(head, "Model"),
            equipment_id=_text(head, "EquipmentID"),
            serial_number=_text(head, "SerialNumber"),
            timestamp=ts,
            latitude=_float(_text(loc, "Latitude"), "Latitude"),
            longitude=_float(_text(loc, "Longitude"), "Longitude"),
            location_time=_dt_attr(loc),
            operating_hours=parse_duration(hrs) if hrs else None,
            fuel_consumed=consumed,
            fuel_time=_dt_attr(fuel),
            odometer=odo,
            flags=tuple(flags),
        ))
    return out


def format_aemp_fleet(snapshots, snapshot_time: datetime | None = None) -> str:
    """Serialize snapshots back to AEMP XML (only the fields this module reads)."""
    ET.register_namespace("", AEMP_NS)

    def sub(parent, name, text=None, **attrs):
        el = ET.SubElement(parent, f"{{{AEMP_NS}}}{name}", attrs)
        if text is not None:
            el.text = text
        return el

    attrs = {"version": "0"}
    if snapshot_time is not None:
        attrs["snapshotTime"] = _fmt_dt(snapshot_time)
    root = ET.Element(f"{{{AEMP_NS}}}Fleet", attrs)
    for s in snapshots:
        eq = sub(root, "Equipment")
        head = sub(eq, "EquipmentHeader")
        for name, v in (("Make", s.make), ("Model", s.model), ("EquipmentID", s.equipment_id),
                        ("SerialNumber", s.serial_number)):
            if v is not None:
                sub(head, name, v)
        if s.latitude is not None or s.longitude is not None:
            kw = {"datetime": _fmt_dt(s.location_time)} if s.location_time else {}
            loc = sub(eq, "Location", **kw)
            if s.latitude is not None:
                sub(loc, "Latitude", repr(s.latitude))
            if s.longitude is not None:
                sub(loc, "Longitude", repr(s.longitude))
        if s.operating_hours is not None:
            sub(sub(eq, "CumulativeOperatingHours"), "Hour", format_duration(s.operating_hours))
        if s.fuel_consumed is not None:
            ts = s.fuel_time or s.timestamp
            fu = sub(eq, "FuelUsed", **({"datetime": _fmt_dt(ts)} if ts else {}))
            sub(fu, "FuelUnits", "liter")
            sub(fu, "FuelConsumed", repr(s.fuel_consumed))
        if s.odometer is not None:
            d = sub(eq, "Distance")
            sub(d, "OdometerUnits", "kilometer")
            sub(d, "Odometer", repr(s.odometer))
    return ET.tostring(root, encoding="unicode", xml_declaration=True)


def deduplicate(snapshots) -> list:
    """Drop repeated ``(equipment_id, timestamp)`` pairs and sort by id, then time."""
    seen, out = set(), []
    for s in snapshots:
        k = (s.equipment_id, s.timestamp)
        if k in seen:
            continue
        seen.add(k)
        out.append(s)
    return sorted(out, key=lambda s: (s.equipment_id or "", s.timestamp or datetime.min.replace(tzinfo=timezone.utc)))


def group_by_asset(snapshots) -> dict:
    out = {}
    for s in deduplicate(snapshots):
        out.setdefault(s.equipment_id, []).append(s)
    return out


@dataclass
class BucketSeries:
    start: datetime
    minutes: int
    values: list  # int per bucket, None where the bucket is not covered

    @property
    def starts(self) -> list:
        return [self.start + timedelta(minutes=self.minutes * k) for k in range(len(self.values))]


def bucket_series(snapshots, bucket: int = 15, max_gap: timedelta | None = None) -> BucketSeries:
    """Per-bucket consumption from cumulative fuel readings of one asset.

    Cumulative fuel at bucket boundaries is interpolated linearly between the
    readings that straddle them. A bucket is missing unless both of its
    boundaries lie within the observed span (and, with ``max_gap``, inside a
    stretch whose consecutive readings are at most ``max_gap`` apart).
    """
    pts = [s for s in snapshots if s.has_fuel and s.timestamp is not None]
    pts = sorted({s.timestamp: s for s in pts}.values(), key=lambda s: s.timestamp)
    if len(pts) < 2:
        raise InsufficientDataError("need at least two fuel readings")
    for a, b in zip(pts, pts[1:]):
        if b.fuel_consumed < a.fuel_consumed:
            raise DataIntegrityError(
                f"cumulative fuel drops from {a.fuel_consumed:g} at {a.timestamp.isoformat()} "
                f"to {b.fuel_consumed:g} at {b.timestamp.isoformat()}"
            )
    t = np.array([s.timestamp.timestamp() for s in pts])
    f = np.array([s.fuel_consumed for s in pts])
    width = bucket * 60.0
    first = np.floor(t[0] / width) * width
    nb = int(np.ceil((t[-1] - first) / width))
    edges = first + width * np.arange(nb + 1)
    cum = np.interp(edges, t, f)
    covered = (edges[:-1] >= t[0]) & (edges[1:] <= t[-1])
    if max_gap is not None:
        gap = max_gap.total_seconds()
        big = np.flatnonzero(np.diff(t) > gap)
        for k in big:
            covered &= ~((edges[1:] > t[k]) & (edges[:-1] < t[k + 1]))
    vals = [int(np.floor(d + 0.5)) if c else None for d, c in zip(np.diff(cum), covered)]
    start = datetime.fromtimestamp(first, tz=timezone.utc)
    return BucketSeries(start, bucket, vals)


def bucket_consumption(snapshots, bucket: int = 15, max_gap: timedelta | None = None) -> list:
    """Per-bucket liters rounded to the nearest integer; ``None`` marks missing buckets."""
    return bucket_series(snapshots, bucket, max_gap).values


_DAYS = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"]


@dataclass(frozen=True)
class ActivityWindow:
    """Weekly window, e.g. ``Mon-Fri 07:00-16:00`` (UTC, end exclusive)."""

    days: frozenset
    start: int  # minutes after midnight
    end: int

    def __call__(self, when: datetime) -> bool:
        when = when.astimezone(timezone.utc)
        m = when.hour * 60 + when.minute
        return when.weekday() in self.days and self.start <= m < self.end

    @classmethod
    def parse(cls, spec: str) -> "ActivityWindow":
        m = re.fullmatch(r"\s*(\w{3})(?:-(\w{3}))?\s+(\d{1,2}):(\d{2})-(\d{1,2}):(\d{2})\s*", spec)
        if not m or m.group(1).lower() not in _DAYS or (m.group(2) and m.group(2).lower() not in _DAYS):
            raise ValueError(f"bad window '{spec}' (expected e.g. 'Mon-Fri 07:00-16:00')")
        d0 = _DAYS.index(m.group(1).lower())
        d1 = _DAYS.index(m.group(2).lower()) if m.group(2) else d0
        days = frozenset(range(d0, d1 + 1)) if d0 <= d1 else frozenset(list(range(d0, 7)) + list(range(d1 + 1)))
        h0, m0, h1, m1 = (int(x) for x in m.groups()[2:])
        return cls(days, h0 * 60 + m0, h1 * 60 + m1)


@dataclass(frozen=True)
class FitReport:
    fit: CompoundPoissonFit
    buckets_used: int
    window: str

    @property
    def lam(self):
        return self.fit.lam

    @property
    def jump_mean(self):
        return self.fit.jump_mean

    @property
    def log_likelihood(self):
        return self.fit.log_likelihood

    @property
    def degenerate(self):
        return self.fit.degenerate


def fit_asset_distribution(buckets, activity_window=None, starts=None) -> FitReport:
    """Compound-Poisson MLE on the active, non-missing buckets.

    Parameters
    ----------
    buckets : BucketSeries or sequence of int/None
    activity_window : None, boolean mask, or callable on bucket start times
        Callables need ``starts`` unless ``buckets`` is a :class:`BucketSeries`.
    """
    label = "all"
    if isinstance(buckets, BucketSeries):
        starts = buckets.starts
        values = buckets.values
    else:
        values = list(buckets)
    if activity_window is None:
        mask = [True] * len(values)
    elif callable(activity_window):
        if starts is None:
            raise ValueError("a callable window needs bucket start times")
        mask = [bool(activity_window(s)) for s in starts]
        label = str(activity_window)
    else:
        mask = [bool(x) for x in activity_window]
        label = "mask"
        if len(mask) != len(values):
            raise ValueError("window mask length differs from the bucket count")
    data = [v for v, k in zip(values, mask) if k and v is not None]
    if len(data) < MIN_BUCKETS:
        raise InsufficientDataError(f"{len(data)} active buckets; at least {MIN_BUCKETS} are needed")
    return FitReport(fit_compound_poisson_mle(data), len(data), label)


def synthetic_snapshots(per_bucket, start: datetime, bucket: int = 15, equipment_id: str = "SYN",
                        initial: float = 0.0, model: str = "synthetic") -> list:
    """Readings aligned with bucket boundaries that reproduce ``per_bucket`` exactly."""
    cum = initial + np.concatenate([[0.0], np.cumsum(per_bucket)])
    return [
        EquipmentSnapshot("synthetic", model, equipment_id, timestamp=start + timedelta(minutes=bucket * k),
                          fuel_consumed=float(c))
        for k, c in enumerate(cum)
    ]


def format_report(rows) -> str:
    """Tab-separated table: asset, model, lambda, jump distribution, buckets, window, log-likelihood."""
    lines = ["asset\tmodel\tlambda\tjump\tbuckets\twindow\tloglik\tflag"]
    for asset, model, rep in rows:
        flag = "degenerate" if rep.degenerate else ""
        lines.append(f"{asset}\t{model}\t{rep.lam:.6g}\tPoisson({rep.jump_mean:.6g})\t{rep.buckets_used}\t"
                     f"{rep.window}\t{rep.log_likelihood:.6f}\t{flag}")
    return "\n".join(lines) + "\n"


__all__ = [
    "ActivityWindow", "BucketSeries", "DataIntegrityError", "EquipmentSnapshot", "FitReport",
    "InsufficientDataError", "TelemetryError", "TelemetryParseError", "UnitError", "bucket_consumption",
    "bucket_series", "deduplicate", "fit_asset_distribution", "format_aemp_fleet", "format_report",
    "group_by_asset", "parse_aemp_fleet", "parse_datetime", "parse_duration", "synthetic_snapshots",
]
