"""Problem data model, random scenario generation and the instance file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .channel import ChannelParams, db_to_linear, first_null_angle, gain_matrix
from .geometry import (
    EARTH_RADIUS_M,
    GeodeticPoint,
    geodetic_array_to_cartesian,
    local_offsets_to_geodetic,
    place_constellation,
    ranges_and_angles,
)

FORMAT_TAG = "leoalloc-instance/1"

try:
    _Dumper = yaml.CSafeDumper
    _Loader = yaml.CSafeLoader
except AttributeError:  # pragma: no cover - libyaml missing
    _Dumper = yaml.SafeDumper
    _Loader = yaml.SafeLoader


class InstanceFormatError(ValueError):
    """A problem-instance document is malformed; ``field`` names the culprit."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Everything one optimization run needs, in linear SI units.

    Matrices are indexed ``[satellite, terminal]``.  Internally SUEs and BSs
    are often handled together as "terminals": SUEs first, then BSs (see
    :attr:`gains`, :attr:`demand`, :attr:`power_cap`).
    """

    h: np.ndarray
    g: np.ndarray
    demand_sue: np.ndarray
    demand_bs: np.ndarray
    p_max: np.ndarray
    P_max: np.ndarray
    W_leo: np.ndarray
    noise: np.ndarray
    ue_counts: np.ndarray
    ue_demand: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        conv = {
            "h": 2,
            "g": 2,
            "demand_sue": 1,
            "demand_bs": 1,
            "p_max": 1,
            "P_max": 1,
            "W_leo": 1,
            "noise": 1,
        }
        for name, ndim in conv.items():
            arr = np.array(getattr(self, name), dtype=float)
            if arr.ndim != ndim:
                raise InstanceFormatError(name, f"expected {ndim}-d array, got shape {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise InstanceFormatError(name, "entries must be finite")
            object.__setattr__(self, name, arr)
        counts = np.array(self.ue_counts, dtype=np.int64).reshape(-1)
        object.__setattr__(self, "ue_counts", counts)
        M, K = self.h.shape
        if self.g.shape[0] != M:
            raise InstanceFormatError("g", f"expected {M} rows, got {self.g.shape[0]}")
        N = self.g.shape[1]
        for name, size in (
            ("demand_sue", K),
            ("p_max", K),
            ("demand_bs", N),
            ("P_max", N),
            ("ue_counts", N),
            ("W_leo", M),
            ("noise", M),
        ):
            if getattr(self, name).shape[0] != size:
                raise InstanceFormatError(name, f"expected length {size}")
        if M < 1:
            raise InstanceFormatError("W_leo", "need at least one satellite")
        for name in ("demand_sue", "demand_bs", "p_max", "P_max", "W_leo", "noise"):
            if np.any(getattr(self, name) <= 0):
                raise InstanceFormatError(name, "entries must be strictly positive")
        for name in ("h", "g"):
            mat = getattr(self, name)
            if np.any(mat < 0):
                raise InstanceFormatError(name, "gains must be non-negative")
            if mat.shape[1] and np.any(mat.max(axis=0) <= 0):
                raise InstanceFormatError(name, "every terminal needs a positive gain to some satellite")
        if np.any(counts < 1):
            raise InstanceFormatError("ue_counts", "every BS must serve at least one UE")
        if self.ue_demand is not None:
            ued = np.array(self.ue_demand, dtype=float).reshape(-1)
            if ued.shape[0] != N:
                raise InstanceFormatError("ue_demand", f"expected length {N}")
            if not np.allclose(counts * ued, self.demand_bs, rtol=1e-12, atol=0.0):
                raise InstanceFormatError("demand_bs", "must equal ue_counts * ue_demand")
            object.__setattr__(self, "ue_demand", ued)

    # sizes -------------------------------------------------------------
    @property
    def M(self) -> int:
        return self.h.shape[0]

    @property
    def K(self) -> int:
        return self.h.shape[1]

    @property
    def N(self) -> int:
        return self.g.shape[1]

    @property
    def T(self) -> int:
        return self.K + self.N

    # unified terminal views --------------------------------------------
    @property
    def gains(self) -> np.ndarray:
        return np.hstack((self.h, self.g))

    @property
    def demand(self) -> np.ndarray:
        return np.concatenate((self.demand_sue, self.demand_bs))

    @property
    def power_cap(self) -> np.ndarray:
        return np.concatenate((self.p_max, self.P_max))

    def replace(self, **changes) -> "ProblemInstance":
        return dataclasses.replace(self, **changes)

    def __eq__(self, other):
        if not isinstance(other, ProblemInstance):
            return NotImplemented
        for f in dataclasses.fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if a is None or b is None or a.shape != b.shape or not np.array_equal(a, b):
                    return False
            elif a != b:
                return False
        return True


@dataclass
class ScenarioConfig:
    """Random-scenario parameters; defaults follow the reference simulation setup."""

    M: int = 3
    N: int = 10
    K: int = 10
    area_side: float = 5000.0
    center_lat: float = 40.0
    center_lon: float = 20.0
    mean_ues_per_bs: float = 10.0
    demand_per_user: float = 1e8
    sat_altitude: float = 340e3
    lat_spacing: float = 0.02
    leo_bandwidth: float | list = 500e6
    p_max_dbw: float = 20.0
    P_max_dbw: float = 40.0
    earth_radius: float = EARTH_RADIUS_M
    channel: ChannelParams = field(default_factory=ChannelParams)
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.channel, dict):
            self.channel = ChannelParams(**self.channel)
        # YAML 1.1 reads "5e10" (no sign in the exponent) as a string
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.type in ("float", "int") and isinstance(v, str):
                setattr(self, f.name, float(v) if f.type == "float" else int(v))
        if isinstance(self.leo_bandwidth, (list, tuple)):
            self.leo_bandwidth = [float(w) for w in self.leo_bandwidth]
        elif isinstance(self.leo_bandwidth, str):
            self.leo_bandwidth = float(self.leo_bandwidth)
        for name in ("M", "area_side", "mean_ues_per_bs", "demand_per_user", "sat_altitude", "lat_spacing"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.N < 0 or self.K < 0:
            raise ValueError("N and K must be non-negative")
        if np.any(np.asarray(self.bandwidths()) <= 0):
            raise ValueError("leo_bandwidth must be positive")

    def bandwidths(self) -> np.ndarray:
        bw = np.asarray(self.leo_bandwidth, dtype=float)
        if bw.ndim == 0:
            return np.full(self.M, float(bw))
        if bw.shape != (self.M,):
            raise ValueError(f"leo_bandwidth needs {self.M} entries")
        return bw

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes) -> "ScenarioConfig":
        d = self.to_dict()
        d.update(changes)
        return ScenarioConfig.from_dict(d)


def _sample_ue_counts(rng: np.random.Generator, mean: float, n: int) -> np.ndarray:
    counts = rng.poisson(mean, n)
    while np.any(counts == 0):
        zero = counts == 0
        counts[zero] = rng.poisson(mean, int(zero.sum()))
    return counts


def generate_scenario(config: ScenarioConfig) -> ProblemInstance:
    """Draw terminal positions and cell loads, then evaluate all channel gains."""
    rng = np.random.default_rng(config.seed)
    half = config.area_side / 2.0
    sue_xy = rng.uniform(-half, half, size=(config.K, 2))
    bs_xy = rng.uniform(-half, half, size=(config.N, 2))
    ue_counts = _sample_ue_counts(rng, config.mean_ues_per_bs, config.N)

    center = GeodeticPoint(config.center_lat, config.center_lon, 0.0)
    sats = place_constellation(center, config.M, config.lat_spacing, config.sat_altitude, config.earth_radius)

    def to_xyz(xy):
        lat, lon = local_offsets_to_geodetic(center, xy[:, 0], xy[:, 1], config.earth_radius)
        return lat, lon, geodetic_array_to_cartesian(lat, lon, 0.0, config.earth_radius).reshape(-1, 3)

    sue_lat, sue_lon, sue_xyz = to_xyz(sue_xy)
    bs_lat, bs_lon, bs_xyz = to_xyz(bs_xy)
    params = config.channel
    null = first_null_angle(params)
    for xyz, kind in ((sue_xyz, "SUE"), (bs_xyz, "BS")):
        if len(xyz):
            _, theta = ranges_and_angles(sats, xyz)
            if np.any(theta.min(axis=0) >= null):
                raise ValueError(f"some {kind} lies outside every satellite's main lobe")

    h = gain_matrix(sats, sue_xyz, "SUE", params) if config.K else np.zeros((config.M, 0))
    g = gain_matrix(sats, bs_xyz, "BS", params) if config.N else np.zeros((config.M, 0))
    R = config.demand_per_user
    return ProblemInstance(
        h=h,
        g=g,
        demand_sue=np.full(config.K, R),
        demand_bs=ue_counts * R,
        p_max=np.full(config.K, float(db_to_linear(config.p_max_dbw))),
        P_max=np.full(config.N, float(db_to_linear(config.P_max_dbw))),
        W_leo=config.bandwidths(),
        noise=np.full(config.M, params.noise_density),
        ue_counts=ue_counts,
        ue_demand=np.full(config.N, R),
        meta={
            "seed": int(config.seed),
            "config": config.to_dict(),
            "positions": {
                "sue_lat": sue_lat.tolist(),
                "sue_lon": sue_lon.tolist(),
                "bs_lat": bs_lat.tolist(),
                "bs_lon": bs_lon.tolist(),
                "sat_lat": [
                    config.center_lat + (i - (config.M - 1) / 2.0) * config.lat_spacing for i in range(config.M)
                ],
            },
        },
    )


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------

_HEADER = """\
# leoalloc problem instance
#
# Units (all linear, SI):
#   h, g        channel gains, dimensionless; rows = satellites, columns = SUEs / BSs
#   demand_sue  required SUE rate, bit/s          demand_bs  required BS backhaul rate, bit/s
#   p_max       SUE transmit power cap, W          P_max      BS transmit power cap, W
#   W_leo       bandwidth budget per satellite, Hz noise      noise density per satellite, W/Hz
#   ue_counts   UEs behind each BS                 ue_demand  per-UE rate behind each BS, bit/s
# demand_bs[n] must equal ue_counts[n] * ue_demand[n] when ue_demand is present.
"""

_REQUIRED = ("h", "g", "demand_sue", "demand_bs", "p_max", "P_max", "W_leo", "noise", "ue_counts")


def _plain(obj: Any):
    """Recursively convert numpy containers/scalars into YAML-safe Python objects."""
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def instance_to_dict(inst: ProblemInstance) -> dict:
    d = {"format": FORMAT_TAG, "M": inst.M, "N": inst.N, "K": inst.K}
    for name in _REQUIRED:
        d[name] = getattr(inst, name).tolist()
    if inst.ue_demand is not None:
        d["ue_demand"] = inst.ue_demand.tolist()
    d["meta"] = _plain(inst.meta)
    return d


def dump_yaml(doc: dict, header: str = "") -> str:
    return header + yaml.dump(_plain(doc), Dumper=_Dumper, sort_keys=False, default_flow_style=None, width=120)


def save_instance(inst: ProblemInstance, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_yaml(instance_to_dict(inst), _HEADER))
    return path


def instance_from_dict(doc: Any) -> ProblemInstance:
    if not isinstance(doc, dict):
        raise InstanceFormatError("<document>", "expected a mapping of fields")
    fmt = doc.get("format", FORMAT_TAG)
    if fmt != FORMAT_TAG:
        raise InstanceFormatError("format", f"unsupported format {fmt!r}")
    for name in _REQUIRED:
        if name not in doc:
            raise InstanceFormatError(name, "missing required field")
    kwargs = {}
    for name in _REQUIRED + ("ue_demand",):
        if name not in doc:
            continue
        try:
            arr = np.array(doc[name], dtype=np.int64 if name == "ue_counts" else float)
        except (TypeError, ValueError) as exc:
            raise InstanceFormatError(name, f"not numeric: {exc}") from None
        if name == "ue_counts" and not np.array_equal(arr, np.array(doc[name], dtype=float)):
            raise InstanceFormatError(name, "must be integers")
        kwargs[name] = arr
    # empty matrices come back as shape (M, 0) only if rows are present
    M = int(doc.get("M", len(kwargs["W_leo"])))
    for name in ("h", "g"):
        if kwargs[name].size == 0:
            kwargs[name] = np.zeros((M, 0))
    for key, name in (("M", "W_leo"), ("K", "demand_sue"), ("N", "demand_bs")):
        if key in doc and int(doc[key]) != len(kwargs[name]):
            raise InstanceFormatError(key, f"declared {doc[key]} but {name} has {len(kwargs[name])} entries")
    meta = doc.get("meta") or {}
    if not isinstance(meta, dict):
        raise InstanceFormatError("meta", "expected a mapping")
    return ProblemInstance(meta=meta, **kwargs)


def load_instance(path) -> ProblemInstance:
    text = Path(path).read_text()
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise InstanceFormatError("<document>", f"invalid YAML: {exc}") from None
    return instance_from_dict(doc)
