"""Scenario configuration: JSON schema, validation, bundled scenarios.

A scenario file is a JSON object with sections:

    name, horizon, dt, comm_dt, seed
    dgus[]      {id, R_t, L_t, C_t, V_ref, I_t_s, K[3]}
    lines[]     {from, to, R, t_activate}
    noise       {w_bar[3], rho_bar[3], hold_dt}
    loads[]     {dgu, breakpoints[[t, A]...]} or {dgu, toggle {a, b, period}}
    consensus   {k_I}
    watermark   {slope_exponent_per_dgu[], T_bar}   (null exponent -> slope 0)
    attacks[]   {from, to, t_record, t_attack, period}
    detector    {lambda, e0_margin}

All numbers are SI.  validate_scenario returns every violation it can find
rather than stopping at the first; severity "error" blocks running while
"warning" does not.
"""

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .comm import ReplayAttackConfig
from .control import ConsensusConfig
from .grid import (DguParams, Line, LoadSchedule, MicrogridTopology,
                   NoiseBounds, build_matrices, closed_loop_matrix,
                   hurwitz_margin, toggle_breakpoints)

DEFAULT_DT = 1e-4
DEFAULT_LAMBDA = 5.0
DEFAULT_E0_MARGIN = 3.0


@dataclass
class Violation:
    path: str
    message: str
    severity: str = "error"   # "error" | "warning"

    def __str__(self):
        return f"[{self.severity}] {self.path}: {self.message}"


class ScenarioValidationError(Exception):
    """Raised when a scenario has error-severity violations."""

    def __init__(self, violations):
        self.violations = violations
        lines = "\n".join(str(v) for v in violations)
        super().__init__(f"invalid scenario:\n{lines}")


@dataclass
class DetectorConfig:
    lam: float = DEFAULT_LAMBDA
    e0_margin: float = DEFAULT_E0_MARGIN


@dataclass
class Scenario:
    """Validated, fully-resolved simulation scenario."""

    name: str
    horizon: float
    dt: float
    comm_dt: float
    seed: int
    dgus: dict                      # id -> DguParams
    topology: MicrogridTopology
    noise: NoiseBounds
    loads: dict                     # id -> LoadSchedule
    consensus: ConsensusConfig
    slopes: dict                    # id -> watermark slope c (0 disables)
    t_bar: float
    attacks: list = field(default_factory=list)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    raw: dict = None                # the source dict, kept for sweeps/export

    @property
    def dgu_ids(self):
        return list(self.dgus)

    def comm_start(self):
        """Communication begins when the last line has closed."""
        if not self.topology.lines:
            return 0.0
        return max(ln.t_activate for ln in self.topology.lines)


# ------------------------------------------------------------- validation

def _grid_aligned(x, step):
    return abs(round(x / step) * step - x) <= 1e-9 * max(1.0, abs(x))


def _expand_loads(entry, horizon):
    if "toggle" in entry:
        tg = entry["toggle"]
        return toggle_breakpoints(tg["a"], tg["b"], tg["period"], max(horizon, tg["period"]))
    return [tuple(bp) for bp in entry["breakpoints"]]


def validate_scenario(raw: dict):
    """Structural and invariant checks; returns a list of Violations."""
    v = []
    err = lambda path, msg: v.append(Violation(path, msg, "error"))
    warn = lambda path, msg: v.append(Violation(path, msg, "warning"))

    horizon = raw.get("horizon")
    dt = raw.get("dt", DEFAULT_DT)
    comm_dt = raw.get("comm_dt", dt)
    if not isinstance(horizon, (int, float)) or horizon < 0:
        err("horizon", "must be a number >= 0")
        horizon = 0.0
    if not isinstance(dt, (int, float)) or dt <= 0:
        err("dt", "must be a number > 0")
        return v
    if comm_dt < dt or not _grid_aligned(comm_dt, dt):
        err("comm_dt", "must be an integer multiple of dt")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        err("seed", "must be a non-negative integer")

    dgus = raw.get("dgus", [])
    if not dgus:
        err("dgus", "at least one DGU is required")
    ids = [d.get("id") for d in dgus]
    if len(set(ids)) != len(ids):
        err("dgus", f"duplicate DGU ids in {ids}")
    params = {}
    for n, d in enumerate(dgus):
        path = f"dgus[{n}]"
        for key in ("R_t", "L_t", "C_t", "I_t_s"):
            if d.get(key, 0) <= 0:
                err(path, f"{key} must be > 0")
        if len(d.get("K", [])) != 3:
            err(path, "K must have 3 entries")
        else:
            try:
                params[d["id"]] = DguParams(
                    R_t=d["R_t"], L_t=d["L_t"], C_t=d["C_t"],
                    V_ref=d.get("V_ref", 48.0), I_t_s=d["I_t_s"],
                    K=np.array(d["K"], dtype=float))
            except (ValueError, KeyError) as exc:
                err(path, str(exc))

    lines = []
    seen_edges = set()
    for n, ln in enumerate(raw.get("lines", [])):
        path = f"lines[{n}]"
        a, b = ln.get("from"), ln.get("to")
        if a not in params or b not in params:
            err(path, f"endpoints ({a},{b}) must be configured DGUs")
            continue
        if a == b:
            err(path, "self-loop")
            continue
        if frozenset((a, b)) in seen_edges:
            err(path, f"duplicate line between {a} and {b}")
            continue
        seen_edges.add(frozenset((a, b)))
        if ln.get("R", 0) <= 0:
            err(path, "R must be > 0")
            continue
        t_act = ln.get("t_activate", 0.0)
        if t_act < 0 or not _grid_aligned(t_act, comm_dt):
            err(path, f"t_activate={t_act} must be >= 0 and on the comm_dt grid")
            continue
        if t_act >= horizon > 0:
            warn(path, f"line activates at {t_act}, beyond the horizon")
        lines.append(Line(a=a, b=b, resistance=ln["R"], t_activate=t_act))

    noise = raw.get("noise", {})
    w_bar = noise.get("w_bar", [0.0, 0.0, 0.0])
    rho_bar = noise.get("rho_bar", [0.0, 0.0, 0.0])
    hold_dt = noise.get("hold_dt", comm_dt)
    if len(w_bar) != 3 or len(rho_bar) != 3 or min(min(w_bar), min(rho_bar)) < 0:
        err("noise", "w_bar and rho_bar must be non-negative 3-vectors")
    if hold_dt < dt or not _grid_aligned(hold_dt, dt):
        err("noise.hold_dt", "must be an integer multiple of dt")

    covered = set()
    for n, ld in enumerate(raw.get("loads", [])):
        path = f"loads[{n}]"
        i = ld.get("dgu")
        if i not in params:
            err(path, f"unknown DGU {i}")
            continue
        if i in covered:
            err(path, f"duplicate load schedule for DGU {i}")
        covered.add(i)
        try:
            bps = _expand_loads(ld, horizon)
            LoadSchedule(breakpoints=bps)
        except (ValueError, KeyError) as exc:
            err(path, str(exc))
            continue
        for t_bp, _ in bps:
            if not _grid_aligned(t_bp, dt):
                err(path, f"breakpoint at t={t_bp} is off the dt grid")
            if t_bp >= horizon > 0 and t_bp > 0:
                warn(path, f"breakpoint at t={t_bp} is beyond the horizon")
    missing = set(params) - covered
    if missing:
        err("loads", f"no load schedule for DGUs {sorted(missing)}")

    if raw.get("consensus", {}).get("k_I", 0) <= 0:
        err("consensus.k_I", "must be > 0")

    wmk = raw.get("watermark", {})
    t_bar = wmk.get("T_bar", 0)
    if t_bar <= 0:
        err("watermark.T_bar", "must be > 0")
    exps = wmk.get("slope_exponent_per_dgu", [None] * len(dgus))
    if len(exps) != len(dgus):
        err("watermark.slope_exponent_per_dgu", f"need one entry per DGU ({len(dgus)})")

    det = raw.get("detector", {})
    if det.get("lambda", DEFAULT_LAMBDA) <= 0:
        err("detector.lambda", "must be > 0")
    if det.get("e0_margin", DEFAULT_E0_MARGIN) < 0:
        err("detector.e0_margin", "must be >= 0")

    links = {(ln.a, ln.b) for ln in lines} | {(ln.b, ln.a) for ln in lines}
    for n, atk in enumerate(raw.get("attacks", [])):
        path = f"attacks[{n}]"
        pair = (atk.get("from"), atk.get("to"))
        if pair not in links:
            err(path, f"no communication link {pair[0]}->{pair[1]}")
            continue
        T0, Ta, T = atk.get("t_record"), atk.get("t_attack"), atk.get("period")
        try:
            ReplayAttackConfig(src=pair[0], dst=pair[1], t_record=T0,
                               t_attack=Ta, period=T)
        except (ValueError, TypeError) as exc:
            err(path, str(exc))
            continue
        if t_bar > 0 and T > t_bar:
            err(path, f"period {T} exceeds the watermark bound T_bar={t_bar}")
        for nm, t_val in (("t_record", T0), ("t_attack", Ta), ("period", T)):
            if not _grid_aligned(t_val, comm_dt):
                err(path, f"{nm}={t_val} must be on the comm_dt grid")
        act = next((ln.t_activate for ln in lines
                    if frozenset((ln.a, ln.b)) == frozenset(pair)), None)
        if act is not None and T0 < act:
            err(path, f"t_record={T0} precedes link activation at {act}")
        if Ta >= horizon > 0:
            warn(path, f"attack starts at {Ta}, beyond the horizon")

    # closed-loop stability and stiffness (needs valid electrics)
    if params and not any(x.severity == "error" for x in v):
        topo = MicrogridTopology(dgu_ids=list(params), lines=lines)
        for i, p in params.items():
            for label, at_time in (("isolated", -1.0), ("connected", math.inf)):
                mats = build_matrices(p, topo, i, at_time=at_time)
                margin = hurwitz_margin(closed_loop_matrix(mats, p.K))
                if margin >= 0:
                    err(f"dgus[id={i}].K",
                        f"closed loop not Hurwitz ({label}): max Re lambda = {margin:.3g}")
        tau = min([p.L_t / p.R_t for p in params.values()]
                  + [ln.resistance * params[i].C_t
                     for ln in lines for i in (ln.a, ln.b)])
        if dt > tau / 20:
            warn("dt", f"dt={dt} does not resolve the fastest time constant "
                       f"{tau:.3g}s (want dt <= {tau / 20:.3g}); expect stiffness")
    return v


def build_scenario(raw: dict) -> Scenario:
    """Construct a Scenario from a validated dict (raises on errors)."""
    violations = validate_scenario(raw)
    errors = [x for x in violations if x.severity == "error"]
    if errors:
        raise ScenarioValidationError(errors)
    dt = raw.get("dt", DEFAULT_DT)
    comm_dt = raw.get("comm_dt", dt)
    params = {d["id"]: DguParams(R_t=d["R_t"], L_t=d["L_t"], C_t=d["C_t"],
                                 V_ref=d.get("V_ref", 48.0), I_t_s=d["I_t_s"],
                                 K=np.array(d["K"], dtype=float))
              for d in raw["dgus"]}
    lines = [Line(a=ln["from"], b=ln["to"], resistance=ln["R"],
                  t_activate=ln.get("t_activate", 0.0))
             for ln in raw.get("lines", [])]
    noise_raw = raw.get("noise", {})
    noise = NoiseBounds(w_bar=noise_raw.get("w_bar", [0.0] * 3),
                        rho_bar=noise_raw.get("rho_bar", [0.0] * 3),
                        hold_dt=noise_raw.get("hold_dt", comm_dt))
    loads = {ld["dgu"]: LoadSchedule(breakpoints=_expand_loads(ld, raw["horizon"]))
             for ld in raw.get("loads", [])}
    exps = raw.get("watermark", {}).get("slope_exponent_per_dgu",
                                        [None] * len(params))
    slopes = {i: (0.0 if e is None else 10.0 ** e)
              for i, e in zip(params, exps)}
    det = raw.get("detector", {})
    attacks = [ReplayAttackConfig(src=a["from"], dst=a["to"],
                                  t_record=a["t_record"], t_attack=a["t_attack"],
                                  period=a["period"])
               for a in raw.get("attacks", [])]
    return Scenario(
        name=raw.get("name", "scenario"),
        horizon=float(raw["horizon"]),
        dt=float(dt),
        comm_dt=float(comm_dt),
        seed=int(raw.get("seed", 0)),
        dgus=params,
        topology=MicrogridTopology(dgu_ids=list(params), lines=lines),
        noise=noise,
        loads=loads,
        consensus=ConsensusConfig(k_I=raw["consensus"]["k_I"]),
        slopes=slopes,
        t_bar=float(raw["watermark"]["T_bar"]),
        attacks=attacks,
        detector=DetectorConfig(lam=det.get("lambda", DEFAULT_LAMBDA),
                                e0_margin=det.get("e0_margin", DEFAULT_E0_MARGIN)),
        raw=raw,
    )


def load_scenario(path) -> Scenario:
    """Load and validate a scenario JSON file."""
    with open(path) as fh:
        raw = json.load(fh)
    return build_scenario(raw)


# ------------------------------------------------------ bundled scenarios

def bundled_names():
    root = resources.files("dcmgsim") / "scenarios"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".scenario"))


def bundled_raw(name) -> dict:
    """Raw dict of a bundled scenario ('nominal', 'paper_fig2', 'paper_fig4')."""
    if not name.endswith(".scenario"):
        name += ".scenario"
    path = resources.files("dcmgsim") / "scenarios" / name
    if not path.is_file():
        raise FileNotFoundError(f"no bundled scenario {name!r}; "
                                f"have {bundled_names()}")
    return json.loads(path.read_text())


def bundled_scenario(name) -> Scenario:
    return build_scenario(bundled_raw(name))


def set_by_path(raw: dict, dotted: str, value):
    """Set a nested field by dotted path, with integer segments for lists.

    Example: set_by_path(raw, "watermark.slope_exponent_per_dgu.0", -3.4)
    """
    parts = dotted.split(".")
    node = raw
    for p in parts[:-1]:
        node = node[int(p)] if isinstance(node, list) else node[p]
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value
