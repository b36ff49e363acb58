import re
from datetime import datetime
from typing import Dict, List, Mapping, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from noc.errors import ConfigurationError
from noc.routing import RoutingVariant, validate_variant
from noc.topology import Placement, build_mesh, faults_for_percent
from noc.traffic import TrafficPattern
from utils.config import HERMES_DEFAULT_SEEDS, HERMES_WATCHDOG_HORIZON, HERMES_WORKERS


class TrafficConfig(BaseModel):
    pattern: TrafficPattern = TrafficPattern.UNIFORM
    rate: float = 0.1
    packet_size_flits: int = Field(6, ge=1)
    seed: int = 0
    trace_file: Optional[str] = None

    @model_validator(mode="after")
    def check_pattern(self):
        if self.pattern == TrafficPattern.TRACE:
            if not self.trace_file:
                raise ValueError("trace traffic needs trace_file")
        elif not 0 < self.rate <= 1:
            raise ValueError(f"rate must be in (0, 1] flits/node/cycle, got {self.rate}")
        return self


_LINK = re.compile(r"^\d+[NESWnesw]$")


class FaultEventConfig(BaseModel):
    """Faults that appear mid-run: a random count, explicit links, or both."""

    cycle: int = Field(..., ge=0)
    faults: int = Field(0, ge=0)
    links: List[str] = []

    @field_validator("links")
    @classmethod
    def check_links(cls, links):
        for link in links:
            if not _LINK.match(link):
                raise ValueError(f"link {link!r} is not of the form <node><N|E|S|W>")
        return [link.upper() for link in links]

    @classmethod
    def parse(cls, text: str) -> "FaultEventConfig":
        """``CYCLE:COUNT`` draws random faults; ``CYCLE:4S/7E`` names links."""
        cycle, _, what = text.strip().partition(":")
        if not cycle.strip().isdigit() or not what.strip():
            raise ValueError(f"fault event {text!r}: expected CYCLE:COUNT or CYCLE:LINK/LINK")
        what = what.strip()
        if what.isdigit():
            return cls(cycle=int(cycle), faults=int(what))
        return cls(cycle=int(cycle), links=[link for link in what.split("/") if link])


class ExperimentConfig(BaseModel):
    kx: int = Field(8, ge=1)
    ky: int = Field(8, ge=1)
    variant: RoutingVariant = RoutingVariant.H_XY
    vcs: int = 2
    faults: int = Field(0, ge=0)
    fault_percent: Optional[float] = None
    placement: Placement = Placement.RANDOM
    require_connected: bool = True
    faults_file: Optional[str] = None
    initiator: Optional[int] = None
    traffic: TrafficConfig = TrafficConfig()
    rates: List[float] = [0.1]
    seeds: List[int] = Field(default_factory=lambda: list(range(HERMES_DEFAULT_SEEDS)))
    warmup_cycles: int = Field(20_000, ge=0)
    measure_cycles: int = Field(200_000, ge=1)
    drain_cycles: int = Field(10_000, ge=0)
    total_budget: int = 1_000_000
    buffer_depth: int = Field(5, ge=1)
    watchdog_horizon: int = Field(HERMES_WATCHDOG_HORIZON, ge=1)
    workers: int = Field(HERMES_WORKERS, ge=1)
    dynamic_fault_cycle: int = Field(20_000, ge=0)
    dynamic_faults: int = Field(25, ge=0)
    dynamic_post_cycles: int = Field(60_000, ge=1)
    bin_cycles: int = Field(1_000, ge=1)
    fault_events: List[FaultEventConfig] = []

    @field_validator("fault_events", mode="before")
    @classmethod
    def parse_fault_events(cls, value):
        if isinstance(value, str):
            value = [item for item in value.split(",") if item.strip()]
        return [FaultEventConfig.parse(item) if isinstance(item, str) else item for item in value]

    @model_validator(mode="after")
    def check_invariants(self):
        try:
            validate_variant(self.variant, self.vcs)
        except ConfigurationError as e:
            raise ValueError(str(e)) from e
        if not self.seeds:
            raise ValueError("seeds must not be empty")
        if self.warmup_cycles + self.measure_cycles > self.total_budget:
            raise ValueError(
                f"warmup ({self.warmup_cycles}) + measure ({self.measure_cycles}) "
                f"exceeds the run budget of {self.total_budget} cycles"
            )
        for rate in self.rates:
            if not 0 <= rate <= 1:
                raise ValueError(f"rate {rate} outside [0, 1]")
        if self.initiator is not None and not 0 <= self.initiator < self.kx * self.ky:
            raise ValueError(f"initiator {self.initiator} outside the mesh")
        return self

    @property
    def n_nodes(self) -> int:
        return self.kx * self.ky

    def fault_count(self) -> int:
        if self.fault_percent is not None:
            return faults_for_percent(build_mesh(self.kx, self.ky), self.fault_percent)
        return self.faults

    @classmethod
    def from_flat(cls, values: Mapping[str, Optional[str]], **overrides) -> "ExperimentConfig":
        """
        Build a config from flat key=value settings.

        Traffic keys (pattern, rate, packet_size, trace_file) are nested into
        ``traffic``; ``rates`` is comma separated; ``seeds`` is a count and
        ``seed_list`` an explicit comma-separated list.
        """
        flat = {k.strip().lower(): v for k, v in values.items() if v is not None and v != ""}
        overrides = {k: v for k, v in overrides.items() if v is not None and v != ()}
        if "rate" in overrides and "rates" not in overrides:
            flat.pop("rates", None)
        if "seeds" in overrides:
            flat.pop("seed_list", None)
        flat.update(overrides)

        traffic = {}
        for key, field_name in (("pattern", "pattern"), ("rate", "rate"),
                                ("packet_size", "packet_size_flits"), ("trace_file", "trace_file")):
            if key in flat:
                traffic[field_name] = flat.pop(key)
        if "rates" in flat and isinstance(flat["rates"], str):
            flat["rates"] = [float(r) for r in flat["rates"].split(",") if r.strip()]
        if "seed_list" in flat:
            seed_list = flat.pop("seed_list")
            if isinstance(seed_list, str):
                seed_list = [int(s) for s in seed_list.split(",") if s.strip()]
            flat["seeds"] = seed_list
        elif "seeds" in flat and not isinstance(flat["seeds"], list):
            flat["seeds"] = list(range(int(flat["seeds"])))
        if "rate" in traffic and "rates" not in flat:
            flat["rates"] = [float(traffic["rate"])]
        if "rates" in flat and flat["rates"] and "rate" not in traffic:
            positive = [r for r in flat["rates"] if r > 0]
            if positive:
                traffic["rate"] = positive[0]
        if traffic:
            flat["traffic"] = traffic
        return cls.model_validate(flat)


class MetricsRecord(BaseModel):
    variant: RoutingVariant
    vcs: int
    fault_count: int
    placement: Placement
    pattern: TrafficPattern
    rate: float
    seed: int
    avg_latency: Optional[float] = None
    accepted_throughput: float = 0.0
    drop_count: int = 0
    dropped_unreachable: int = 0
    dropped_severed: int = 0
    packets_measured: int = 0
    packets_delivered: int = 0
    completed_fraction: float = 1.0
    avg_hops: Optional[float] = None
    ud_fraction: float = 0.0
    max_queue_depth: int = 0
    # flits per unidirectional link, keyed "src:dir"
    link_flits: Dict[str, int] = {}


class LatencyBin(BaseModel):
    start_cycle: int
    avg_latency: Optional[float] = None
    packets: int = 0


class DynamicSeries(BaseModel):
    variant: RoutingVariant
    seed: int
    fault_cycle: int
    resume_cycle: int
    bin_cycles: int
    bins: List[LatencyBin]
    pre_fault_latency: Optional[float] = None
    post_fault_latency: Optional[float] = None
    stabilization_cycles: Optional[int] = None
    dropped_unreachable: int = 0
    dropped_severed: int = 0


class SaturationResult(BaseModel):
    zero_load_latency: float
    threshold: float
    saturation_rate: float
    ceiling_reached: bool = False
    trials: List[List[Optional[float]]] = []


# Request / response bodies

class HealthResponse(BaseModel):
    status: str
    version: str


class PointRequest(BaseModel):
    config: ExperimentConfig = ExperimentConfig()
    rate: float = Field(..., ge=0, le=1)
    seed: int = 0


class SweepRequest(BaseModel):
    config: ExperimentConfig


class DynamicRequest(BaseModel):
    config: ExperimentConfig = ExperimentConfig()
    seed: int = 0


class PointResultResponse(BaseModel):
    id: int
    run_id: int
    variant: str
    vcs: int
    fault_count: int
    placement: str
    pattern: str
    rate: float
    seed: str
    avg_latency: Optional[float] = None
    throughput: float
    drops: float
    avg_hops: Optional[float] = None
    ud_fraction: Optional[float] = None

    class Config:
        from_attributes = True


class ExperimentRunResponse(BaseModel):
    id: int
    kind: str
    status: str
    created_at: datetime
    points: List[PointResultResponse] = []

    class Config:
        from_attributes = True
