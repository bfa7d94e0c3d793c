"""Scenario files: a YAML document describing one complete simulation
(plant parameters, topologies, gains, delays, events).

Field names carry explicit units (``tau_star_s``, ``B_S``, ``P_W``).  The
schema lives in ``data/scenario.schema.json`` and is enforced on load; the
packaged ``reference.scenario`` encodes the 4-DG reference experiment.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .comms import DelayBounds
from .plant import DgParams, DisturbanceBound, LoadComponent, LoadProfile, LoadRamp
from .topology import CommTopology, ElectricalGraph, GainSet

__all__ = [
    "ScenarioError",
    "Event",
    "Scenario",
    "load_scenario",
    "scenario_from_dict",
    "packaged_scenario_path",
    "dump_gains_file",
    "load_gains_file",
]

EVENT_KINDS = ("activate_freq_sc", "set_omega0", "connect_load", "set_vbar")


class ScenarioError(ValueError):
    """Scenario file failed validation."""


@dataclass(frozen=True)
class Event:
    """One scheduled working-point change."""

    t: float
    kind: str
    bus: int | None = None
    connected: bool | None = None
    value: float | None = None

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ScenarioError(f"unknown event kind {self.kind!r}")
        if self.kind == "connect_load" and (self.bus is None or self.connected is None):
            raise ScenarioError("connect_load needs bus and connected")
        if self.kind == "set_vbar" and (self.bus is None or self.value is None):
            raise ScenarioError("set_vbar needs bus and value_V")
        if self.kind == "set_omega0" and self.value is None:
            raise ScenarioError("set_omega0 needs value_rad_s")


@dataclass
class Scenario:
    """Validated, unit-normalized description of one run."""

    name: str
    duration: float
    step: float
    nominal_omega: float
    nominal_vbar: float
    electrical: ElectricalGraph
    dg_params: list[DgParams]
    loads: list[list[LoadComponent]]
    load_ramps: list[LoadRamp]
    comm: CommTopology
    gains: GainSet | None            # None => synthesize
    delay_bounds: DelayBounds
    delay_seed: int
    delay_step: float
    delay_tau0: float
    disturbance: DisturbanceBound
    events: list[Event] = field(default_factory=list)
    plant_mode: str = "full"
    boundary_layer: float = 0.0
    delayed_leader: bool = False
    couple_omega_bar: bool = False
    initial: dict | None = None

    @property
    def n_dg(self) -> int:
        return self.electrical.n_dg

    def load_profile(self) -> LoadProfile:
        """Fresh mutable load profile (per-run state)."""
        return LoadProfile([list(c) for c in self.loads], list(self.load_ramps))

    def with_gains(self, gains: GainSet) -> "Scenario":
        return replace(self, gains=gains)


_SCHEMA_CACHE = None


def _schema() -> dict:
    global _SCHEMA_CACHE
    if _SCHEMA_CACHE is None:
        ref = resources.files("droopsync").joinpath("data/scenario.schema.json")
        _SCHEMA_CACHE = json.loads(ref.read_text(encoding="utf-8"))
    return _SCHEMA_CACHE


def packaged_scenario_path(name: str) -> Path:
    """Filesystem path of a scenario shipped inside the package."""
    ref = resources.files("droopsync").joinpath(f"data/{name}")
    return Path(str(ref))


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    return scenario_from_dict(doc, source=str(path))


def scenario_from_dict(doc: dict, source: str = "<dict>") -> Scenario:
    import jsonschema

    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        raise ScenarioError(f"{source}: {exc.message} at "
                            f"{'/'.join(str(p) for p in exc.absolute_path)}") from exc

    n = int(doc["electrical"]["n_dg"])
    lines = tuple((int(l["i"]), int(l["j"]), float(l.get("G_S", 0.0)),
                   float(l["B_S"])) for l in doc["electrical"]["lines"])
    electrical = ElectricalGraph(n_dg=n, lines=lines)

    dgs = doc["dgs"]
    if len(dgs) != n:
        raise ScenarioError(f"{source}: expected {n} dg entries, got {len(dgs)}")
    dg_params = [DgParams(k_P=float(d["k_P_rad_per_Ws"]),
                          k_Q=float(d["k_Q_V_per_VAR"]),
                          k_v=float(d["k_v_s"]),
                          tau_P=float(d["tau_P_s"]),
                          tau_Q=float(d["tau_Q_s"])) for d in dgs]

    loads_doc = doc.get("loads", {})
    per_bus: list[list[LoadComponent]] = [[] for _ in range(n)]
    for entry in loads_doc.get("buses", []):
        b = int(entry["bus"])
        if not (1 <= b <= n):
            raise ScenarioError(f"{source}: load bus {b} out of range")
        per_bus[b - 1] = [LoadComponent(P=float(c["P_W"]), Q=float(c["Q_VAR"]),
                                        connected=bool(c.get("connected", True)))
                          for c in entry["components"]]
    ramps = [LoadRamp(bus=int(r["bus"]),
                      p_rate=float(r.get("p_rate_W_per_s", 0.0)),
                      q_rate=float(r.get("q_rate_VAR_per_s", 0.0)),
                      t_start=float(r["t_start_s"]),
                      t_end=float(r["t_end_s"]))
             for r in loads_doc.get("ramps", [])]

    comm_doc = doc["comm"]
    comm = CommTopology.make(n, [tuple(int(x) for x in e)
                                 for e in comm_doc["follower_edges"]],
                             [int(x) for x in comm_doc["leader_pins"]])

    ctrl = doc["controller"]
    m = tuple(float(x) for x in ctrl["m_rad_s2"])
    if len(m) != n:
        raise ScenarioError(f"{source}: m_rad_s2 must list {n} values")
    gains_doc = ctrl["gains"]
    if gains_doc == "synthesize":
        gains = None
    else:
        k = {(int(g["i"]), int(g["j"])): float(g["value"])
             for g in gains_doc["k"]}
        k_bar = {(int(g["i"]), int(g["j"])): float(g["value"])
                 for g in gains_doc.get("k_bar", [])}
        gains = GainSet(k=k, k_bar=k_bar, m=m)
        gains.validate_against(comm)

    delays = doc["delays"]
    bounds = DelayBounds(tau_star=float(delays["tau_star_s"]),
                         tau_g=float(delays["tau_g"]))

    dist = DisturbanceBound(Pi=float(ctrl["Pi_rad_s2"]),
                            Pi_P=float(ctrl.get("Pi_P_W", np.inf)),
                            Pi_Q=float(ctrl.get("Pi_Q_VAR", np.inf)))

    events = []
    for e in doc.get("events", []):
        events.append(Event(
            t=float(e["t_s"]), kind=str(e["kind"]),
            bus=int(e["bus"]) if "bus" in e else None,
            connected=bool(e["connected"]) if "connected" in e else None,
            value=float(e["value_rad_s"]) if "value_rad_s" in e
            else (float(e["value_V"]) if "value_V" in e else None)))
    events.sort(key=lambda ev: ev.t)

    duration = float(doc["duration_s"])
    step = float(doc["step_s"])
    if step <= 0:
        raise ScenarioError(f"{source}: step_s must be > 0")
    if events and events[-1].t > duration:
        raise ScenarioError(f"{source}: last event at t={events[-1].t} "
                            f"is beyond duration {duration}")

    nominal = doc.get("nominal", {})
    scn = Scenario(
        name=str(doc.get("name", Path(source).stem)),
        duration=duration,
        step=step,
        nominal_omega=float(nominal.get("omega_rad_s", 2 * math.pi * 50.0)),
        nominal_vbar=float(nominal.get("vbar_V", 220.0)),
        electrical=electrical,
        dg_params=dg_params,
        loads=per_bus,
        load_ramps=ramps,
        comm=comm,
        gains=GainSet(k=gains.k, k_bar=gains.k_bar, m=m) if gains else None,
        delay_bounds=bounds,
        delay_seed=int(delays.get("seed", 0)),
        delay_step=float(delays.get("step_s", 5e-5)),
        delay_tau0=float(delays.get("tau0_s", 0.0)),
        disturbance=dist,
        events=events,
        plant_mode=str(doc.get("plant_mode", "full")),
        boundary_layer=float(ctrl.get("boundary_layer_rad_s", 0.0)),
        delayed_leader=bool(ctrl.get("delayed_leader", False)),
        couple_omega_bar=bool(ctrl.get("couple_omega_bar", False)),
        initial=doc.get("initial"),
    )
    if scn.plant_mode not in ("full", "linear"):
        raise ScenarioError(f"{source}: plant_mode must be full or linear")
    return scn


def dump_gains_file(path, gains: GainSet, cert, check=None) -> None:
    """Write synthesized gains plus certificate as a YAML document."""
    doc = {
        "gains": {
            "k": [{"i": i, "j": j, "value": float(v)}
                  for (i, j), v in sorted(gains.k.items())],
            "k_bar": [{"i": i, "j": j, "value": float(v)}
                      for (i, j), v in sorted(gains.k_bar.items())],
        },
        "certificate": {
            "form": cert.form,
            "tau_star_s": float(cert.tau_star),
            "tau_g": float(cert.tau_g),
            "margin": float(cert.margin),
            "Q": cert.Q.tolist(),
            "R": cert.R.tolist(),
            "P": cert.P.tolist(),
            "M": cert.M.tolist(),
            "T": cert.T.tolist(),
            "X": cert.X.tolist(),
        },
    }
    if check is not None:
        doc["check"] = {"accepted": bool(check.accepted),
                        "margin": float(check.margin),
                        "lambda_max_xi": float(check.lambda_max_xi)}
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def load_gains_file(path):
    """Read a gains+certificate document back into objects."""
    from .lmi import LmiCertificate

    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    k = {(int(g["i"]), int(g["j"])): float(g["value"])
         for g in doc["gains"]["k"]}
    k_bar = {(int(g["i"]), int(g["j"])): float(g["value"])
             for g in doc["gains"]["k_bar"]}
    c = doc["certificate"]
    cert = LmiCertificate(
        Q=np.array(c["Q"]), R=np.array(c["R"]), P=np.array(c["P"]),
        M=np.array(c["M"]), T=np.array(c["T"]), X=np.array(c["X"]),
        tau_star=float(c["tau_star_s"]), tau_g=float(c["tau_g"]),
        margin=float(c["margin"]), form=str(c["form"]))
    return GainSet(k=k, k_bar=k_bar), cert
