"""Problem data for multi-period oxygen distribution.

All volumes are Nm3 (per period unless the field name says ``total``);
adjustment rates are dimensionless.  Instances are frozen dataclasses and
are safe to share between threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

# per-period total demand statistics (mean, std) for the three demand levels
LEVEL_STATS = {
    "high": (3.98e4, 5.08e3),
    "medium": (3.50e4, 3.46e3),
    "low": (3.15e4, 3.32e3),
}
LEVEL_LABEL = {"high": "A", "medium": "B", "low": "C"}


@dataclass(frozen=True)
class Horizon:
    period_count: int = 32
    period_minutes: int = 15

    @property
    def minutes(self) -> int:
        return self.period_count * self.period_minutes


@dataclass(frozen=True)
class AsuSpec:
    id: str
    load_min: float
    load_max: float
    ramp_max: float


@dataclass(frozen=True)
class ContinuousUser:
    id: str
    rate_min: float
    rate_max: float
    nominal_total: float
    deviation_total: float

    def curve(self, period_count: int) -> "DemandCurve":
        """Flat per-period split of the horizon totals."""
        return DemandCurve.flat(self.nominal_total, self.deviation_total, period_count)


@dataclass(frozen=True)
class DemandCurve:
    nominal: tuple[float, ...]
    deviation: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "nominal", tuple(float(v) for v in self.nominal))
        object.__setattr__(self, "deviation", tuple(float(v) for v in self.deviation))

    @classmethod
    def flat(cls, nominal_total: float, deviation_total: float, period_count: int) -> "DemandCurve":
        return cls((nominal_total / period_count,) * period_count,
                   (deviation_total / period_count,) * period_count)

    @property
    def length(self) -> int:
        return len(self.nominal)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.nominal), np.array(self.deviation)


@dataclass(frozen=True)
class DiscreteUser:
    id: str
    scenarios: tuple[DemandCurve, ...]

    def __post_init__(self):
        object.__setattr__(self, "scenarios", tuple(self.scenarios))


@dataclass(frozen=True)
class Gasholder:
    capacity: float
    level_min: float
    level_max: float
    level_mid: float
    level_init: float

    @classmethod
    def from_capacity(cls, capacity: float, init_fraction: float = 0.5) -> "Gasholder":
        return cls(capacity, 0.1 * capacity, 0.9 * capacity, 0.5 * capacity, init_fraction * capacity)

    @property
    def half_range(self) -> float:
        return 0.5 * (self.level_max - self.level_min)


@dataclass(frozen=True)
class ObjectiveWeights:
    gamma1: float = 1.0
    gamma2: float = 2.0
    gamma3: float = 20.0


@dataclass(frozen=True)
class Instance:
    horizon: Horizon
    asus: tuple[AsuSpec, ...]
    continuous_users: tuple[ContinuousUser, ...]
    discrete_users: tuple[DiscreteUser, ...]
    gasholder: Gasholder
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    name: str = ""

    def __post_init__(self):
        for f in ("asus", "continuous_users", "discrete_users"):
            object.__setattr__(self, f, tuple(getattr(self, f)))

    @property
    def scenario_count(self) -> int:
        return len(self.discrete_users[0].scenarios) if self.discrete_users else 0

    def with_initial_level(self, level: float) -> "Instance":
        return replace(self, gasholder=replace(self.gasholder, level_init=float(level)))

    def with_ramp(self, ramp_max: float) -> "Instance":
        return replace(self, asus=tuple(replace(a, ramp_max=float(ramp_max)) for a in self.asus))

    def with_eta(self, eta: float) -> "Instance":
        """Copy with every deviation reset to ``eta`` times its nominal value."""
        cont = tuple(replace(u, deviation_total=eta * u.nominal_total) for u in self.continuous_users)
        disc = tuple(replace(u, scenarios=tuple(DemandCurve(c.nominal, tuple(eta * v for v in c.nominal))
                                                 for c in u.scenarios))
                     for u in self.discrete_users)
        return replace(self, continuous_users=cont, discrete_users=disc)


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str

    def __str__(self) -> str:
        return f"{self.field}: {self.rule}"


class InstanceFormatError(ValueError):
    """Malformed instance file; message names the offending location."""


class InstanceValidationError(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


# -- validation --------------------------------------------------------------

def validate(instance: Instance) -> list[Violation]:
    """Every broken type invariant, as data.  Empty list means valid."""
    out: list[Violation] = []

    def check(ok: bool, where: str, rule: str) -> None:
        if not ok:
            out.append(Violation(where, rule))

    h = instance.horizon
    check(isinstance(h.period_count, int) and h.period_count >= 1, "horizon.period_count", "period_count >= 1")
    check(isinstance(h.period_minutes, int) and h.period_minutes >= 1, "horizon.period_minutes",
          "period_minutes >= 1")
    check(len(instance.asus) >= 1, "asus", "at least one ASU")
    for k, a in enumerate(instance.asus):
        w = f"asus[{k}]"
        check(0 <= a.load_min <= a.load_max, w, "0 <= load_min <= load_max")
        check(a.ramp_max >= 0, f"{w}.ramp_max", "ramp_max >= 0")
    for k, u in enumerate(instance.continuous_users):
        w = f"continuous_users[{k}]"
        check(0 < u.rate_min <= u.rate_max, w, "0 < rate_min <= rate_max")
        check(u.nominal_total > 0, f"{w}.nominal_total", "nominal_total > 0")
        check(0 <= u.deviation_total < u.nominal_total, f"{w}.deviation_total",
              "0 <= deviation_total < nominal_total")
    n_scen = None
    for k, u in enumerate(instance.discrete_users):
        w = f"discrete_users[{k}]"
        check(len(u.scenarios) >= 1, f"{w}.scenarios", "at least one scenario")
        if n_scen is None:
            n_scen = len(u.scenarios)
        check(len(u.scenarios) == n_scen, f"{w}.scenarios", "all discrete users share the scenario count")
        for s, c in enumerate(u.scenarios):
            cw = f"{w}.scenarios[{s}]"
            check(len(c.nominal) == h.period_count and len(c.deviation) == h.period_count, cw,
                  "curve spans the horizon")
            check(all(0 <= dv <= nv for nv, dv in zip(c.nominal, c.deviation)), cw,
                  "0 <= deviation <= nominal per period")
    g = instance.gasholder
    check(0 <= g.level_min < g.level_mid < g.level_max <= g.capacity, "gasholder",
          "0 <= level_min < level_mid < level_max <= capacity")
    check(g.level_min <= g.level_init <= g.level_max, "gasholder.level_init",
          "level_min <= level_init <= level_max")
    check(math.isclose(g.level_mid, 0.5 * (g.level_min + g.level_max), rel_tol=1e-9, abs_tol=1e-9),
          "gasholder.level_mid", "level_mid = (level_min + level_max)/2")
    wt = instance.weights
    check(wt.gamma1 >= 0 and wt.gamma2 >= 0 and wt.gamma3 >= 0, "weights", "all weights >= 0")
    return out


# -- per-period demand arrays ------------------------------------------------

@dataclass(frozen=True)
class DemandData:
    """Per-user, per-period nominal/deviation arrays fed to the model builders.

    ``cont_*`` have shape (continuous users, periods); ``disc_*`` have shape
    (discrete users, scenarios, periods).
    """

    cont_nominal: np.ndarray
    cont_deviation: np.ndarray
    disc_nominal: np.ndarray
    disc_deviation: np.ndarray

    @classmethod
    def from_instance(cls, instance: Instance) -> "DemandData":
        T = instance.horizon.period_count
        cn = np.array([u.curve(T).nominal for u in instance.continuous_users]).reshape(-1, T)
        cd = np.array([u.curve(T).deviation for u in instance.continuous_users]).reshape(-1, T)
        S = instance.scenario_count
        shape = (len(instance.discrete_users), S, T)
        dn = np.array([[c.nominal for c in u.scenarios] for u in instance.discrete_users]).reshape(shape)
        dd = np.array([[c.deviation for c in u.scenarios] for u in instance.discrete_users]).reshape(shape)
        return cls(cn, cd, dn, dd)

    @property
    def period_count(self) -> int:
        return self.cont_nominal.shape[1] if self.cont_nominal.size else self.disc_nominal.shape[2]

    @property
    def scenario_count(self) -> int:
        return self.disc_nominal.shape[1] if self.disc_nominal.size else 0

    @property
    def scenario_nominal(self) -> np.ndarray:
        """(S, T) discrete demand summed over discrete users."""
        return self.disc_nominal.sum(axis=0)

    @property
    def scenario_deviation(self) -> np.ndarray:
        return self.disc_deviation.sum(axis=0)

    def aggregate(self, rho: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Total nominal and deviation per period for adjustment rates and scenario weights."""
        rho = np.asarray(rho, float)
        y = np.asarray(y, float)
        nom = rho @ self.cont_nominal if self.cont_nominal.size else np.zeros(self.period_count)
        dev = rho @ self.cont_deviation if self.cont_deviation.size else np.zeros(self.period_count)
        if self.disc_nominal.size:
            nom = nom + y @ self.scenario_nominal
            dev = dev + y @ self.scenario_deviation
        return nom, dev

    def with_continuous(self, index: int, nominal: np.ndarray, deviation: np.ndarray) -> "DemandData":
        cn, cd = self.cont_nominal.copy(), self.cont_deviation.copy()
        cn[index], cd[index] = nominal, deviation
        return replace(self, cont_nominal=cn, cont_deviation=cd)

    def scaled_deviation(self, eta: float) -> "DemandData":
        return replace(self, cont_deviation=eta * self.cont_nominal, disc_deviation=eta * self.disc_nominal)


# -- synthetic instances -----------------------------------------------------

DP_MACHINES = ("DP1", "DP2")
DC_MACHINES = ("DC1", "DC2", "DC3")


def _heats(rng: np.random.Generator, machines: tuple[str, ...], minutes: int,
           intensity: np.ndarray) -> list[tuple[str, int, int]]:
    """Oxygen-blowing heats (machine, start, duration) over ``minutes``.

    Idle gaps are stretched by a slowly varying production intensity so the
    demand shows sustained peaks and valleys, not white noise.
    """
    out = []
    for mach in machines:
        t = int(rng.integers(0, 25))
        while True:
            dur = int(rng.integers(14, 23))
            if t + dur > minutes:
                break
            out.append((mach, t, dur))
            k = min(int(t + dur) * len(intensity) // minutes, len(intensity) - 1)
            gap = rng.uniform(6, 30) / intensity[k]
            t += dur + int(round(gap))
    return out


def _limit_capacity(heats: list[tuple[str, int, int]], limit: int, minutes: int) -> list[tuple[str, int, int]]:
    """Delay heats (in start order) so at most ``limit`` blow at once."""
    busy = np.zeros(minutes + 1, dtype=int)
    machine_free: dict[str, int] = {}
    out = []
    for mach, start, dur in sorted(heats, key=lambda h: (h[1], h[0])):
        t = max(start, machine_free.get(mach, 0))
        while t + dur <= minutes and busy[t:t + dur].max() >= limit:
            t += 1
        if t + dur > minutes:
            continue
        busy[t:t + dur] += 1
        machine_free[mach] = t + dur + 1
        out.append((mach, t, dur))
    return out


def _period_minutes(heats, machines, period_count: int, period_minutes: int) -> np.ndarray:
    tp = np.zeros(period_count)
    for mach, start, dur in heats:
        if mach not in machines:
            continue
        for p in range(start // period_minutes, min((start + dur - 1) // period_minutes, period_count - 1) + 1):
            lo, hi = p * period_minutes, (p + 1) * period_minutes
            tp[p] += max(0, min(hi, start + dur) - max(lo, start))
    return tp


def synthesize(level: str, seed: int, eta: float = 0.05, period_count: int = 32,
               period_minutes: int = 15, init_fraction: float = 0.5) -> Instance:
    """Synthetic instance whose total per-period demand (adjustment rate 1,
    any scenario) has exactly the mean and standard deviation listed for
    ``level`` in :data:`LEVEL_STATS`.

    Two ironmaking users and a small fixed-rate user are continuous; the
    dephosphorisation and decarbonisation shops are discrete, with scenario
    1 unconstrained (5 simultaneous heats) and scenario 2 limited to 4.
    """
    if level not in LEVEL_STATS:
        raise ValueError(f"level must be one of {sorted(LEVEL_STATS)}, got {level!r}")
    mean, std = LEVEL_STATS[level]
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, sorted(LEVEL_STATS).index(level)])
    T, minutes = period_count, period_count * period_minutes

    knots = rng.normal(0.0, 1.0, size=max(3, T // 6))
    intensity = np.exp(0.7 * np.interp(np.linspace(0, len(knots) - 1, T), np.arange(len(knots)), knots))
    heats1 = _heats(rng, DP_MACHINES + DC_MACHINES, minutes, intensity)
    heats2 = _limit_capacity(heats1, 4, minutes)
    tp = {s: {grp: _period_minutes(h, grp, T, period_minutes) for grp in (DP_MACHINES, DC_MACHINES)}
          for s, h in ((0, heats1), (1, heats2))}

    # continuous share: ironmaking ~40 %, other ~10 %, capped so discrete stays nonnegative
    iron = 0.4 * mean * (1.0 + rng.uniform(-0.05, 0.05))
    other = 0.1 * mean
    room = []
    for s in (0, 1):
        x = tp[s][DP_MACHINES] + tp[s][DC_MACHINES]
        room.append(mean - std * x.mean() / x.std())
    cont = min(iron + other, 0.95 * min(room))
    iron = max(cont - other, 0.5 * cont)
    other = cont - iron
    split = rng.uniform(0.45, 0.55)
    cont_users = (
        ContinuousUser("BF1", 0.8, 1.2, split * iron * T, eta * split * iron * T),
        ContinuousUser("BF2", 0.8, 1.2, (1 - split) * iron * T, eta * (1 - split) * iron * T),
        ContinuousUser("OTHER", 1.0, 1.0, other * T, eta * other * T),
    )
    disc_curves: dict[tuple[str, ...], list[DemandCurve]] = {DP_MACHINES: [], DC_MACHINES: []}
    for s in (0, 1):
        x_dp, x_dc = tp[s][DP_MACHINES], tp[s][DC_MACHINES]
        x = x_dp + x_dc
        scale = std / x.std()
        base = mean - cont - scale * x.mean()
        for grp, xg in ((DP_MACHINES, x_dp), (DC_MACHINES, x_dc)):
            nom = np.maximum(0.5 * base + scale * xg, 0.0)
            disc_curves[grp].append(DemandCurve(tuple(nom), tuple(eta * nom)))
    disc_users = (DiscreteUser("DP", tuple(disc_curves[DP_MACHINES])),
                  DiscreteUser("DC", tuple(disc_curves[DC_MACHINES])))
    asus = (AsuSpec("ASU1", 1.5e4, 2.0e4, 300.0), AsuSpec("ASU2", 1.5e4, 2.0e4, 300.0))
    return Instance(Horizon(period_count, period_minutes), asus, cont_users, disc_users,
                    Gasholder.from_capacity(6.0e4, init_fraction), ObjectiveWeights(1.0, 2.0, 20.0),
                    name=f"{LEVEL_LABEL[level]}-{level}-{seed}")


def total_demand(instance: Instance, scenario: int = 0) -> np.ndarray:
    """Per-period total nominal demand at adjustment rate 1 for one scenario."""
    data = DemandData.from_instance(instance)
    y = np.zeros(data.scenario_count)
    if y.size:
        y[scenario] = 1.0
    return data.aggregate(np.ones(len(instance.continuous_users)), y)[0]


# -- file I/O ----------------------------------------------------------------

def to_dict(instance: Instance) -> dict[str, Any]:
    d = asdict(instance)
    for u in d["discrete_users"]:
        u["scenarios"] = [{"nominal": list(c["nominal"]), "deviation": list(c["deviation"])}
                          for c in u["scenarios"]]
    return d


def _get(obj: Any, key: str, where: str) -> Any:
    if not isinstance(obj, dict):
        raise InstanceFormatError(f"{where}: expected an object")
    if key not in obj:
        raise InstanceFormatError(f"missing field '{where + '.' if where else ''}{key}'")
    return obj[key]


def _num(obj, key, where) -> float:
    v = _get(obj, key, where)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise InstanceFormatError(f"field '{where}.{key}' must be a number")
    return float(v)


def _list(obj, key, where) -> list:
    v = _get(obj, key, where)
    if not isinstance(v, list):
        raise InstanceFormatError(f"field '{where + '.' if where else ''}{key}' must be a list")
    return v


def from_dict(d: dict[str, Any]) -> Instance:
    h = _get(d, "horizon", "")
    pc, pm = _get(h, "period_count", "horizon"), _get(h, "period_minutes", "horizon")
    if not isinstance(pc, int) or not isinstance(pm, int):
        raise InstanceFormatError("horizon fields must be integers")
    asus = tuple(AsuSpec(str(_get(a, "id", f"asus[{k}]")), _num(a, "load_min", f"asus[{k}]"),
                         _num(a, "load_max", f"asus[{k}]"), _num(a, "ramp_max", f"asus[{k}]"))
                 for k, a in enumerate(_list(d, "asus", "")))
    cont = tuple(ContinuousUser(str(_get(u, "id", f"continuous_users[{k}]")),
                                _num(u, "rate_min", f"continuous_users[{k}]"),
                                _num(u, "rate_max", f"continuous_users[{k}]"),
                                _num(u, "nominal_total", f"continuous_users[{k}]"),
                                _num(u, "deviation_total", f"continuous_users[{k}]"))
                 for k, u in enumerate(_list(d, "continuous_users", "")))
    disc = []
    for k, u in enumerate(_list(d, "discrete_users", "")):
        where = f"discrete_users[{k}]"
        scen = []
        for s, c in enumerate(_list(u, "scenarios", where)):
            cw = f"{where}.scenarios[{s}]"
            nom, dev = _list(c, "nominal", cw), _list(c, "deviation", cw)
            if len(nom) != len(dev):
                raise InstanceFormatError(f"{cw}: nominal and deviation lengths differ")
            scen.append(DemandCurve(tuple(map(float, nom)), tuple(map(float, dev))))
        disc.append(DiscreteUser(str(_get(u, "id", where)), tuple(scen)))
    g = _get(d, "gasholder", "")
    gas = Gasholder(*(_num(g, k, "gasholder") for k in
                      ("capacity", "level_min", "level_max", "level_mid", "level_init")))
    w = _get(d, "weights", "")
    weights = ObjectiveWeights(*(_num(w, k, "weights") for k in ("gamma1", "gamma2", "gamma3")))
    return Instance(Horizon(pc, pm), asus, cont, tuple(disc), gas, weights, name=str(d.get("name", "")))


def save(instance: Instance, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(to_dict(instance), indent=2) + "\n")


def load(path: Union[str, Path], check: bool = True) -> Instance:
    """Read an instance file; raises :class:`InstanceFormatError` on malformed
    content and :class:`InstanceValidationError` on broken invariants."""
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    inst = from_dict(d)
    if check:
        bad = validate(inst)
        if bad:
            raise InstanceValidationError(bad)
    return inst


def default_instance(level: str = "medium", seed: int = 0, eta: Optional[float] = None) -> Instance:
    return synthesize(level, seed, eta=0.05 if eta is None else eta)
