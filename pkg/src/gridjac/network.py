"""Case ingestion and network reduction.

Builds the bus admittance matrix from a case file (constant-impedance
loads, generator transient reactances as branches to new internal nodes)
and Kron-reduces it to the generator internal nodes.  All quantities are
per-unit on the case base; angles are radians.
"""

from __future__ import annotations

import cmath
import copy
import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import CaseError, ReductionError

_SYM_TOL = 1e-10


@dataclass(frozen=True)
class Bus:
    id: int
    vm: float          # voltage magnitude, p.u. (supplied operating point)
    va: float = 0.0    # voltage angle, rad

    @property
    def voltage(self) -> complex:
        return self.vm * cmath.exp(1j * self.va)


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float = 0.0     # total line charging susceptance, half stamped at each end
    tap: float = 1.0   # off-nominal turns ratio on the from side (1.0 = plain line)
    status: bool = True

    @property
    def key(self) -> str:
        return f"{self.from_bus}-{self.to_bus}"


@dataclass(frozen=True)
class Load:
    bus: int
    p: float
    q: float


@dataclass(frozen=True)
class Generator:
    id: str
    bus: int
    xd_prime: float
    M: float
    D: float
    pm: float
    sigma: float = 0.0
    E: float | None = None        # EMF magnitude; computed from the operating point if absent
    # optional third-order parameters
    xd: float | None = None
    td0: float | None = None
    avr_gain: float | None = None
    avr_t: float | None = None


@dataclass(frozen=True)
class ReducedNetwork:
    """Generator-internal-node equivalent: Y = G + jB plus EMF magnitudes."""

    G: np.ndarray
    B: np.ndarray
    E: np.ndarray

    def __post_init__(self):
        G = np.asarray(self.G, dtype=float)
        B = np.asarray(self.B, dtype=float)
        E = np.asarray(self.E, dtype=float)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "E", E)
        n = len(E)
        if n < 2:
            raise CaseError("reduced network needs at least 2 generators")
        if G.shape != (n, n) or B.shape != (n, n):
            raise CaseError("G/B shape does not match EMF vector length")
        if np.max(np.abs(G - G.T)) > _SYM_TOL or np.max(np.abs(B - B.T)) > _SYM_TOL:
            raise CaseError("reduced admittance matrix is not symmetric")

    @property
    def n(self) -> int:
        return len(self.E)

    @property
    def Y(self) -> np.ndarray:
        return self.G + 1j * self.B


@dataclass(frozen=True)
class RawCase:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    loads: tuple[Load, ...]
    generators: tuple[Generator, ...]
    base_mva: float = 100.0
    name: str = ""
    reduced: ReducedNetwork | None = None

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "loads", tuple(self.loads))
        object.__setattr__(self, "generators", tuple(self.generators))
        self.validate()

    def validate(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise CaseError("duplicate bus ids")
        known = set(ids)
        for b in self.buses:
            if b.vm <= 0:
                raise CaseError(f"bus {b.id}: voltage magnitude must be > 0")
        for br in self.branches:
            if br.from_bus not in known or br.to_bus not in known:
                raise CaseError(f"branch {br.key}: unknown endpoint bus")
            if br.r == 0 and br.x == 0:
                raise CaseError(f"branch {br.key}: zero impedance")
        for ld in self.loads:
            if ld.bus not in known:
                raise CaseError(f"load references unknown bus {ld.bus}")
        gids = [g.id for g in self.generators]
        if len(set(gids)) != len(gids):
            raise CaseError("duplicate generator ids")
        # a reduced-only case (E/G/B supplied directly) carries no topology,
        # so generator bus references are not resolvable there
        check_refs = bool(self.buses) or self.reduced is None
        for g in self.generators:
            if check_refs and g.bus not in known:
                raise CaseError(f"generator {g.id} references unknown bus {g.bus}")
            if g.M <= 0:
                raise CaseError(f"generator {g.id}: M must be > 0")
            if g.D < 0 or g.sigma < 0:
                raise CaseError(f"generator {g.id}: D and sigma must be >= 0")

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    def bus_index(self) -> dict:
        return {b.id: i for i, b in enumerate(self.buses)}

    def generator(self, gen_id: str) -> Generator:
        for g in self.generators:
            if g.id == gen_id:
                return g
        raise CaseError(f"unknown generator {gen_id!r}")

    # ------------------------------------------------------------------ io

    @classmethod
    def from_dict(cls, d: dict) -> "RawCase":
        red = None
        if d.get("reduced"):
            r = d["reduced"]
            red = ReducedNetwork(np.array(r["G"], float), np.array(r["B"], float),
                                 np.array(r["E"], float))
        return cls(
            buses=tuple(Bus(b["id"], float(b["vm"]), float(b.get("va", 0.0)))
                        for b in d.get("buses", [])),
            branches=tuple(Branch(b["from"], b["to"], float(b["r"]), float(b["x"]),
                                  float(b.get("b", 0.0)), float(b.get("tap", 1.0)),
                                  bool(b.get("status", True)))
                           for b in d.get("branches", [])),
            loads=tuple(Load(l["bus"], float(l["p"]), float(l["q"]))
                        for l in d.get("loads", [])),
            generators=tuple(Generator(
                id=str(g["id"]), bus=g["bus"], xd_prime=float(g["xd_prime"]),
                M=float(g["M"]), D=float(g["D"]), pm=float(g["pm"]),
                sigma=float(g.get("sigma", 0.0)),
                E=(float(g["E"]) if "E" in g and g["E"] is not None else None),
                xd=(float(g["xd"]) if g.get("xd") is not None else None),
                td0=(float(g["td0"]) if g.get("td0") is not None else None),
                avr_gain=(float(g["avr_gain"]) if g.get("avr_gain") is not None else None),
                avr_t=(float(g["avr_t"]) if g.get("avr_t") is not None else None),
            ) for g in d.get("generators", [])),
            base_mva=float(d.get("base_mva", 100.0)),
            name=str(d.get("name", "")),
            reduced=red,
        )

    @classmethod
    def from_json(cls, path) -> "RawCase":
        with open(path) as f:
            try:
                d = json.load(f)
            except json.JSONDecodeError as e:
                raise CaseError(f"{path}: not valid JSON ({e})") from e
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "base_mva": self.base_mva,
            "buses": [{"id": b.id, "vm": b.vm, "va": b.va} for b in self.buses],
            "branches": [{"from": b.from_bus, "to": b.to_bus, "r": b.r, "x": b.x,
                          "b": b.b, "tap": b.tap, "status": b.status}
                         for b in self.branches],
            "loads": [{"bus": l.bus, "p": l.p, "q": l.q} for l in self.loads],
            "generators": [],
        }
        for g in self.generators:
            gd = {"id": g.id, "bus": g.bus, "xd_prime": g.xd_prime, "M": g.M,
                  "D": g.D, "pm": g.pm, "sigma": g.sigma}
            for k in ("E", "xd", "td0", "avr_gain", "avr_t"):
                v = getattr(g, k)
                if v is not None:
                    gd[k] = v
            d["generators"].append(gd)
        if self.reduced is not None:
            d["reduced"] = {"G": self.reduced.G.tolist(), "B": self.reduced.B.tolist(),
                            "E": self.reduced.E.tolist()}
        return d


# ---------------------------------------------------------------------- ops


def internal_emf(v_terminal: complex, s_gen: complex, xd_prime: float):
    """EMF behind transient reactance: E∠δ = V + j·xd'·(S/V)*.

    Returns (magnitude, angle_rad).
    """
    if abs(v_terminal) <= 0:
        raise CaseError("terminal voltage magnitude must be > 0")
    e = v_terminal + 1j * xd_prime * np.conj(s_gen / v_terminal)
    return abs(e), cmath.phase(e)


def build_augmented_ybus(case: RawCase) -> np.ndarray:
    """Node admittance matrix over buses + generator internal nodes.

    Loads become shunt admittances (P - jQ)/|V|^2 at the supplied voltage;
    each generator adds a 1/(j·xd') branch from its terminal bus to a new
    internal node appended after the buses (in generator order).
    """
    idx = case.bus_index()
    nb, ng = len(case.buses), case.n_gen
    if nb == 0 or ng == 0:
        raise CaseError("case carries no bus/generator topology")
    Y = np.zeros((nb + ng, nb + ng), dtype=complex)
    for br in case.branches:
        if not br.status:
            continue
        i, j = idx[br.from_bus], idx[br.to_bus]
        y = 1.0 / complex(br.r, br.x)
        bsh = 1j * br.b / 2.0
        a = br.tap if br.tap else 1.0
        Y[i, i] += (y + bsh) / (a * a)
        Y[j, j] += y + bsh
        Y[i, j] -= y / a
        Y[j, i] -= y / a
    vm = {b.id: b.vm for b in case.buses}
    for ld in case.loads:
        v = vm[ld.bus]
        Y[idx[ld.bus], idx[ld.bus]] += complex(ld.p, -ld.q) / v**2
    for k, g in enumerate(case.generators):
        if g.xd_prime == 0:
            raise CaseError(f"generator {g.id}: xd'=0, internal node coincides "
                            "with the terminal bus")
        i, gi = idx[g.bus], nb + k
        y = 1.0 / (1j * g.xd_prime)
        Y[gi, gi] += y
        Y[i, i] += y
        Y[gi, i] -= y
        Y[i, gi] -= y
    return Y


def _islands(Y: np.ndarray, elim: list, keep: list) -> list:
    """Eliminated nodes with no admittance path to any kept node."""
    n = Y.shape[0]
    adj = np.abs(Y) > 1e-14
    np.fill_diagonal(adj, False)
    reached = set(keep)
    frontier = list(keep)
    while frontier:
        i = frontier.pop()
        for j in np.nonzero(adj[i])[0]:
            if j not in reached:
                reached.add(int(j))
                frontier.append(int(j))
    return [i for i in elim if i not in reached]


def kron_reduce(y_aug: np.ndarray, keep) -> np.ndarray:
    """Schur complement onto the kept nodes: Ykk - Yke Yee^-1 Yek."""
    y_aug = np.asarray(y_aug, dtype=complex)
    n = y_aug.shape[0]
    keep = sorted(int(k) for k in keep)
    elim = [i for i in range(n) if i not in set(keep)]
    if not elim:
        return y_aug.copy()
    Ykk = y_aug[np.ix_(keep, keep)]
    Yke = y_aug[np.ix_(keep, elim)]
    Yek = y_aug[np.ix_(elim, keep)]
    Yee = y_aug[np.ix_(elim, elim)]
    try:
        sol = np.linalg.solve(Yee, Yek)
    except np.linalg.LinAlgError:
        sol = None
    if sol is None or not np.all(np.isfinite(sol)):
        isl = _islands(y_aug, elim, keep)
        raise ReductionError(
            "eliminated-node submatrix is singular"
            + (f"; islanded node indices {isl}" if isl else ""))
    return Ykk - Yke @ sol


def reduce_case(case: RawCase) -> ReducedNetwork:
    """Reduce a case to its generator internal nodes.

    If the case supplies a ``reduced`` section it is returned as-is
    (bypass used when only the equivalent matrices are published).
    """
    if case.reduced is not None:
        return case.reduced
    Y = build_augmented_ybus(case)
    nb = len(case.buses)
    keep = list(range(nb, nb + case.n_gen))
    Yred = kron_reduce(Y, keep)
    idx = case.bus_index()
    E = np.empty(case.n_gen)
    for k, g in enumerate(case.generators):
        if g.E is not None:
            E[k] = g.E
            continue
        bus = case.buses[idx[g.bus]]
        # reactive output is not in the schema; recover it from the case
        # network so E matches the supplied operating point
        s = _gen_injection(case, Y, k)
        E[k], _ = internal_emf(bus.voltage, s, g.xd_prime)
    return ReducedNetwork(Yred.real.copy(), Yred.imag.copy(), E)


def internal_angles(case: RawCase) -> np.ndarray:
    """Operating-point internal EMF angles, one per generator (rad)."""
    Y = build_augmented_ybus(case)
    idx = case.bus_index()
    out = np.empty(case.n_gen)
    for k, g in enumerate(case.generators):
        bus = case.buses[idx[g.bus]]
        s = _gen_injection(case, Y, k)
        _, out[k] = internal_emf(bus.voltage, s, g.xd_prime)
    return out


def _gen_injection(case: RawCase, y_aug: np.ndarray, k: int) -> complex:
    """Complex power injected by generator k at its terminal bus.

    Computed as the power flowing into the network (branches + loads) at
    the supplied bus voltages, so the operating point is consistent even
    when the case file carries no reactive dispatch.
    """
    idx = case.bus_index()
    nb = len(case.buses)
    g = case.generators[k]
    if sum(1 for gg in case.generators if gg.bus == g.bus) > 1:
        raise CaseError(f"bus {g.bus} hosts several generators; supply E "
                        "explicitly to attribute the injection")
    i = idx[g.bus]
    v = np.array([b.voltage for b in case.buses] + [0.0] * case.n_gen, dtype=complex)
    # current into the bus rows from the network with internal nodes open:
    # the xd' branch contributes v_i * y only through the diagonal, remove it
    y_row = y_aug[i, :nb].copy()
    yg = 1.0 / (1j * g.xd_prime)
    inj = v[i] * np.conj((y_row @ v[:nb]) - yg * v[i])
    return inj


# ------------------------------------------------------------ contingencies


@dataclass(frozen=True)
class ContingencyEvent:
    """One parameter/topology change.

    kind: set_xd_prime | scale_damping | set_pm | branch_status
    target: generator id, or "from-to" branch key for branch_status
    value: new xd' / damping factor / new Pm / bool status
    """
    kind: str
    target: str
    value: float | bool

    KINDS = ("set_xd_prime", "scale_damping", "set_pm", "branch_status")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise CaseError(f"unknown contingency kind {self.kind!r}")

    @property
    def touches_network(self) -> bool:
        return self.kind in ("set_xd_prime", "branch_status")

    @classmethod
    def from_dict(cls, d: dict) -> "ContingencyEvent":
        kind = d["type"]
        if kind == "branch_status":
            return cls(kind, str(d["branch"]), bool(d["value"]))
        if kind not in cls.KINDS:
            raise CaseError(f"unknown contingency kind {kind!r}")
        return cls(kind, str(d["gen"]), float(d["value"]))

    def to_dict(self) -> dict:
        if self.kind == "branch_status":
            return {"type": self.kind, "branch": self.target, "value": bool(self.value)}
        return {"type": self.kind, "gen": self.target, "value": float(self.value)}


def apply_contingency(case: RawCase, events) -> RawCase:
    """Return a case with the events applied (order matters).

    Callers must rebuild/reduce the network afterwards when an event
    touches electrical parameters.
    """
    if isinstance(events, ContingencyEvent):
        events = [events]
    gens = list(case.generators)
    branches = list(case.branches)
    for ev in events:
        if ev.kind == "branch_status":
            hits = [i for i, br in enumerate(branches) if br.key == ev.target]
            if not hits:
                raise CaseError(f"unknown branch {ev.target!r}")
            for i in hits:
                branches[i] = replace(branches[i], status=bool(ev.value))
            continue
        hits = [i for i, g in enumerate(gens) if g.id == ev.target]
        if not hits:
            raise CaseError(f"unknown generator {ev.target!r}")
        i = hits[0]
        if ev.kind == "set_xd_prime":
            gens[i] = replace(gens[i], xd_prime=float(ev.value))
        elif ev.kind == "scale_damping":
            gens[i] = replace(gens[i], D=gens[i].D * float(ev.value))
        elif ev.kind == "set_pm":
            gens[i] = replace(gens[i], pm=float(ev.value))
    new_case = copy.copy(case)
    object.__setattr__(new_case, "generators", tuple(gens))
    object.__setattr__(new_case, "branches", tuple(branches))
    new_case.validate()
    return new_case
