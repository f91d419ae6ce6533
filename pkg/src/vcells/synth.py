"""Deterministic generator of AP deployments and scan traces along a path.

Stands in for field collection: APs are scattered in a corridor around a
route polyline, then a simulated walker scans at fixed intervals while
moving at constant speed. Obstacles and device variability are abstracted
into a single per-AP, per-scan detection probability.

Randomness
----------
All draws come from splitmix64, chosen because it is tiny and trivially
portable. State advances by the 64-bit odd constant 0x9E3779B97F4A7C15;
each output is the splitmix64 finalizer (see bloom.mix64) of the advanced
state. Independent streams derive their initial state as

    state0 = mix64(seed XOR mix64(stream_tag))

with stream tag 1 for deployment and 2 for trace generation, so the same
seed yields the same deployment regardless of scan parameters.

Uniform floats in [0, 1) take the top 53 bits: (u64 >> 11) * 2**-53.
Poisson counts are drawn by summing unit exponentials -ln(1 - u) until
they exceed the mean (one float per step), which is underflow-free for
large means. Draw order is fixed: the deployment stream draws the AP
count, then per AP the along-path distance and lateral offset; the trace
stream draws one float per (scan, in-range AP) pair, scanning in order
and visiting APs in deployment order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .bloom import mix64
from .geo import GeoPoint, haversine, path_lengths, point_along
from .scanlog import Fingerprint, ScanTrace, canonical_ap

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15

STREAM_DEPLOYMENT = 1
STREAM_TRACE = 2

# locally administered MAC prefix for generated APs
_AP_PREFIX = (0x02, 0x76, 0x63)


class SplitMix64:
    """The splitmix64 sequence from a (seed, stream) pair."""

    __slots__ = ("state",)

    def __init__(self, seed: int, stream: int):
        self.state = mix64((seed & _MASK64) ^ mix64(stream))

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK64
        return mix64(self.state)

    def next_float(self) -> float:
        """Uniform in [0, 1), 53-bit resolution."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + self.next_float() * (hi - lo)

    def poisson(self, mean: float) -> int:
        """Poisson count via summed unit exponentials; exact and
        underflow-free for any mean >= 0."""
        if mean < 0:
            raise ValueError("poisson mean must be non-negative")
        count = 0
        acc = 0.0
        while True:
            acc += -math.log(1.0 - self.next_float())
            if acc > mean:
                return count
            count += 1


@dataclass(frozen=True)
class SynthConfig:
    """Everything a simulation run depends on."""

    seed: int
    path: tuple[GeoPoint, ...]
    ap_density_per_km: float
    detect_radius_m: float
    detect_prob: float
    speed_kph: float
    scan_interval_s: float

    def __post_init__(self):
        object.__setattr__(self, "path", tuple(self.path))
        if len(self.path) < 2:
            raise ValueError("path needs at least two vertices")
        if not self.ap_density_per_km > 0:
            raise ValueError("ap_density_per_km must be positive")
        if not self.detect_radius_m > 0:
            raise ValueError("detect_radius_m must be positive")
        if not 0.0 < self.detect_prob <= 1.0:
            raise ValueError("detect_prob must be in (0, 1]")
        if not self.speed_kph > 0:
            raise ValueError("speed_kph must be positive")
        if not self.scan_interval_s > 0:
            raise ValueError("scan_interval_s must be positive")


@dataclass(frozen=True)
class ApDeployment:
    """Deployed APs: (canonical BSSID, position) pairs, ids unique."""

    aps: tuple[tuple[str, GeoPoint], ...]

    def __post_init__(self):
        object.__setattr__(self, "aps", tuple(self.aps))
        ids = [a for a, _ in self.aps]
        if len(set(ids)) != len(ids):
            raise ValueError("deployment contains duplicate BSSIDs")

    def __len__(self) -> int:
        return len(self.aps)


def _ap_id(i: int) -> str:
    if not 0 <= i <= 0xFFFFFF:
        raise ValueError("AP counter exceeds 24-bit space")
    a, b, c = _AP_PREFIX
    return f"{a:02x}:{b:02x}:{c:02x}:{(i >> 16) & 0xFF:02x}:{(i >> 8) & 0xFF:02x}:{i & 0xFF:02x}"


def gen_deployment(cfg: SynthConfig) -> ApDeployment:
    """Scatter APs along the path corridor, fully determined by the seed.

    The AP count is Poisson(density * path_km); each AP sits at a uniform
    along-path distance with a uniform lateral offset in
    [-detect_radius, +detect_radius].
    """
    cumulative = path_lengths(cfg.path)
    total_m = cumulative[-1]
    if total_m <= 0:
        raise ValueError("zero-length path")
    rng = SplitMix64(cfg.seed, STREAM_DEPLOYMENT)
    count = rng.poisson(cfg.ap_density_per_km * total_m / 1000.0)
    aps = []
    for i in range(count):
        d = rng.uniform(0.0, total_m)
        off = rng.uniform(-cfg.detect_radius_m, cfg.detect_radius_m)
        aps.append((_ap_id(i), point_along(cfg.path, cumulative, d, off)))
    return ApDeployment(aps=tuple(aps))


def gen_trace(dep: ApDeployment, cfg: SynthConfig, trace_id: str = "synthetic") -> ScanTrace:
    """Walk the path scanning every scan_interval_s at speed_kph.

    Scan positions sit every speed*interval meters along the path starting
    at 0. A scan's AP set contains each deployed AP within detect_radius
    of the scan position, kept independently with detect_prob. Timestamps
    are seq * interval milliseconds.
    """
    cumulative = path_lengths(cfg.path)
    total_m = cumulative[-1]
    if total_m <= 0:
        raise ValueError("zero-length path")
    spacing = cfg.speed_kph / 3.6 * cfg.scan_interval_s
    rng = SplitMix64(cfg.seed, STREAM_TRACE)

    scans = []
    seq = 0
    d = 0.0
    while d <= total_m + 1e-9:
        pos = point_along(cfg.path, cumulative, d)
        seen = set()
        for ap_id, ap_pos in dep.aps:
            if haversine(pos, ap_pos) <= cfg.detect_radius_m:
                if rng.next_float() < cfg.detect_prob:
                    seen.add(ap_id)
        scans.append(
            Fingerprint(
                seq=seq,
                timestamp_ms=round(seq * cfg.scan_interval_s * 1000),
                pos=pos,
                aps=frozenset(seen),
            )
        )
        seq += 1
        d = seq * spacing
    return ScanTrace(trace_id=trace_id, scans=tuple(scans), speed_hint_kph=cfg.speed_kph)


def write_deployment(dep: ApDeployment, target) -> None:
    """Write the ground-truth sidecar: {"aps": [{bssid, lat, lon}, ...]}."""
    obj = {
        "aps": [
            {"bssid": ap_id, "lat": pos.lat, "lon": pos.lon} for ap_id, pos in dep.aps
        ]
    }
    body = json.dumps(obj, indent=2)
    if hasattr(target, "write"):
        target.write(body)
    else:
        with open(target, "w", encoding="utf-8") as fh:
            fh.write(body)


def read_deployment(source) -> ApDeployment:
    """Read a deployment sidecar written by write_deployment."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    try:
        obj = json.loads(text)
        aps = tuple(
            (canonical_ap(a["bssid"]), GeoPoint(a["lat"], a["lon"])) for a in obj["aps"]
        )
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValueError(f"invalid deployment file: {exc}") from exc
    return ApDeployment(aps=aps)
