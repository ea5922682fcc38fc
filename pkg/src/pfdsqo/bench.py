"""Benchmark problem families and feasible starting points.

Two families are provided:

* a scalable chain model grown out of Hock-Schittkowski problem 118,
  ``build_hs118(q)``, with ``3q`` variables arranged in ``q`` periods of
  three units each;
* multi-period economic power dispatch, ``build_epd(family)``, with cubic
  generation costs and an optional smooth valve-point ripple.

Builders are pure and return ``(TwoBlockProblem, VariableSplit)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .problem import TwoBlockProblem, dense, is_partially_feasible, measure_feasibility
from .qp import Infeasible, QpProblem, solve_qp


@dataclass(frozen=True)
class VariableSplit:
    """Where each block variable lives in the family's natural ordering.

    ``x_index[j]`` is the natural position of ``x[j]``; likewise for ``y``.
    ``start`` is an optional prescribed initial point in block ordering.
    """

    x_index: np.ndarray
    y_index: np.ndarray
    x_labels: tuple[str, ...] = ()
    y_labels: tuple[str, ...] = ()
    start: np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.x_index) + len(self.y_index)

    def to_natural(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        n1 = len(self.x_index)
        z = np.empty(self.size)
        z[self.x_index] = u[:n1]
        z[self.y_index] = u[n1:]
        return z

    def from_natural(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.concatenate([z[self.x_index], z[self.y_index]])


# ---------------------------------------------------------------------------
# HS118 chain model

HS118_OPTIMUM = np.array([8, 49, 3, 1, 56, 0, 1, 63, 6, 3, 70, 12, 5, 77, 18], dtype=float)
HS118_OPTIMAL_VALUE = 664.82045


@dataclass(frozen=True)
class Hs118Family:
    q: int

    def __post_init__(self):
        if int(self.q) != self.q or self.q < 5:
            raise ValueError(f"q must be an integer >= 5, got {self.q}")

    def demands(self) -> np.ndarray:
        """Right-hand sides of the per-period demand rows (one per period)."""
        base = [60.0, 50.0, 70.0, 85.0, 100.0]
        extra = [100.0 + 5.0 * (j - 4) for j in range(6, self.q + 1)]
        return np.array(base + extra)[: self.q]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper bounds in natural ordering ``x_1..x_{3q}``."""
        q = self.q
        lo = np.zeros(3 * q)
        lo[:3] = [8.0, 43.0, 3.0]
        hi = np.empty(3 * q)
        hi[:3] = [21.0, 57.0, 16.0]
        for j in range(2, q + 1):  # 1-based period index
            k = 3 * (j - 1)
            if j <= 5:
                hi[k : k + 3] = [90.0, 120.0, 60.0]
            else:
                hi[k : k + 3] = [90.0 + 3 * j, 120.0 + 6 * j, 60.0 + j]
        return lo, hi


# Per-unit coefficients: linear, quadratic, cubic, and whether the
# transcendental term uses sin (True) or cos (False).
_HS118_UNITS = (
    (2.3, 0.0001, -0.0005, True),
    (1.7, 0.0001, 0.0008, False),
    (2.2, 0.00015, 0.001, False),
)


def _chain_cost(unit: int, s: float):
    lin, quad, cub, use_sin = _HS118_UNITS[unit]
    trig, dtrig = (np.sin, np.cos) if use_sin else (np.cos, lambda z: -np.sin(z))

    def value(z):
        z = np.asarray(z, dtype=float)
        out = lin * z.sum() + quad * (z @ z)
        if s:
            out += s * (cub * np.sum(z**3) + np.sum(np.exp(trig(z))))
        return float(out)

    def grad(z):
        z = np.asarray(z, dtype=float)
        g = lin + 2 * quad * z
        if s:
            g = g + s * (3 * cub * z**2 + np.exp(trig(z)) * dtrig(z))
        return g

    def hess_diag(z):
        z = np.asarray(z, dtype=float)
        h = np.full(z.shape, 2 * quad)
        if s:
            e = np.exp(trig(z))
            d1 = dtrig(z)
            d2 = -trig(z)  # second derivative of sin is -sin, of cos is -cos
            h = h + s * (6 * cub * z + e * (d1**2 + d2))
        return h

    return value, grad, hess_diag


def _sum_blocks(parts, sizes):
    offsets = np.cumsum([0, *sizes])

    def value(z):
        return sum(v(z[offsets[i] : offsets[i + 1]]) for i, (v, _, _) in enumerate(parts))

    def grad(z):
        return np.concatenate([g(z[offsets[i] : offsets[i + 1]]) for i, (_, g, _) in enumerate(parts)])

    def hess(z):
        return np.diag(np.concatenate([h(z[offsets[i] : offsets[i + 1]]) for i, (_, _, h) in enumerate(parts)]))

    return value, grad, hess


def _ramp_rows(n_chain: int, offset: int, width: int) -> np.ndarray:
    """Rows ``z[offset+i] - z[offset+i-1]`` for ``i = 1..n_chain-1``."""
    R = np.zeros((n_chain - 1, width))
    idx = np.arange(1, n_chain)
    R[idx - 1, offset + idx] = 1.0
    R[idx - 1, offset + idx - 1] = -1.0
    return R


def build_hs118(q: int) -> tuple[TwoBlockProblem, VariableSplit]:
    """Chain model with ``x = (a_0..a_{q-1}, b_0..b_{q-1})`` and ``y = (c_0..c_{q-1})``.

    ``a_i, b_i, c_i`` are the natural variables ``x_{3i+1}, x_{3i+2}, x_{3i+3}``.
    Demand rows (one per period, ``a_i + b_i + c_i >= D_i``) are stored
    negated in ``E``/``F``. Period-to-period ramps and the variable bounds
    are range rows on ``C`` (for ``a``, ``b``) and ``D`` (for ``c``).
    """
    fam = Hs118Family(q)
    q = fam.q
    s = float(np.sign(q - 5))
    f_val, f_grad, f_hess = _sum_blocks([_chain_cost(0, s), _chain_cost(1, s)], [q, q])
    t_val, t_grad, t_hess = _sum_blocks([_chain_cost(2, s)], [q])

    dem = fam.demands()
    m2 = dem.size
    eye = np.eye(q)[:m2]
    E = -np.hstack([eye, eye])
    F = -eye
    d = -dem

    lo_nat, hi_nat = fam.bounds()
    a_lo, b_lo, c_lo = lo_nat[0::3], lo_nat[1::3], lo_nat[2::3]
    a_hi, b_hi, c_hi = hi_nat[0::3], hi_nat[1::3], hi_nat[2::3]

    C = np.vstack([_ramp_rows(q, 0, 2 * q), _ramp_rows(q, q, 2 * q), np.eye(2 * q)])
    l = np.concatenate([np.full(q - 1, -7.0), np.full(q - 1, -7.0), a_lo, b_lo])
    v = np.concatenate([np.full(q - 1, 6.0), np.full(q - 1, 7.0), a_hi, b_hi])
    D = np.vstack([_ramp_rows(q, 0, q), np.eye(q)])
    s_lo = np.concatenate([np.full(q - 1, -7.0), c_lo])
    r_hi = np.concatenate([np.full(q - 1, 6.0), c_hi])

    problem = TwoBlockProblem(
        f_val, f_grad, f_hess, t_val, t_grad, t_hess,
        n1=2 * q, n2=q,
        E=E, F=F, d=d,
        C=C, l=l, v=v,
        D=D, s=s_lo, r=r_hi,
        name=f"hs118-q{q}",
    )
    x_index = np.concatenate([np.arange(0, 3 * q, 3), np.arange(1, 3 * q, 3)])
    y_index = np.arange(2, 3 * q, 3)
    labels = lambda idx: tuple(f"x{i + 1}" for i in idx)
    split = VariableSplit(x_index, y_index, labels(x_index), labels(y_index))
    return problem, split


def audit_hs118_transcription(problem: TwoBlockProblem, split: VariableSplit) -> list[str]:
    """Structural checks of a built chain model; returns a list of problems found."""
    issues = []
    q = problem.n2
    if problem.scale[:2] != (2 * q, q) or problem.m1 != 0:
        issues.append(f"unexpected scale {problem.scale}")
    if (problem.l1, problem.l2) != (4 * q - 2, 2 * q - 1):
        issues.append(f"range row counts {(problem.l1, problem.l2)}")
    # Ranges must stay within one block by construction; the ramp rows must
    # link a variable only to its own unit chain in the natural ordering.
    for M, index in ((dense(problem.C), split.x_index), (dense(problem.D), split.y_index)):
        for row in M:
            nz = np.flatnonzero(row)
            units = {int(index[j]) % 3 for j in nz}
            if len(units) != 1:
                issues.append(f"range row mixes units {sorted(units)}")
            if len(nz) == 2 and abs(int(index[nz[0]]) - int(index[nz[1]])) != 3:
                issues.append("ramp row does not join consecutive periods")
    return issues


# ---------------------------------------------------------------------------
# economic dispatch

# Unit counts per copy of the five-unit base system for the 20 replicated
# instances (rows: instance number 1..20).
REPLICATION_COUNTS = {
    1: (1, 2, 3, 2, 2), 2: (3, 3, 3, 3, 3), 3: (4, 4, 4, 4, 4), 4: (5, 6, 7, 7, 5),
    5: (5, 10, 10, 5, 10), 6: (8, 11, 12, 9, 10), 7: (10, 14, 16, 15, 15),
    8: (13, 18, 18, 13, 18), 9: (12, 20, 25, 20, 13), 10: (18, 22, 25, 18, 17),
    11: (20, 24, 27, 20, 19), 12: (22, 26, 29, 22, 21), 13: (26, 30, 30, 22, 22),
    14: (30, 33, 32, 25, 30), 15: (34, 37, 36, 29, 34), 16: (36, 39, 38, 30, 37),
    17: (40, 44, 41, 34, 41), 18: (44, 48, 45, 38, 45), 19: (48, 52, 48, 40, 52),
    20: (50, 54, 50, 42, 54),
}

UNIT_FIELDS = ("a", "b", "c", "d", "e", "f", "Pmin", "Pmax", "D", "U")


@dataclass(frozen=True)
class EpdFamily:
    """Unit data and load profile of a dispatch instance.

    Per-unit arrays have length ``N``; ``load`` has length ``T``. ``D`` and
    ``U`` are the down and up ramp limits per period.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    e: np.ndarray
    f: np.ndarray
    Pmin: np.ndarray
    Pmax: np.ndarray
    D: np.ndarray
    U: np.ndarray
    load: np.ndarray
    delta: int = 2
    name: str = "epd"

    def __post_init__(self):
        arrays = {k: np.array(getattr(self, k), dtype=float).reshape(-1) for k in UNIT_FIELDS}
        N = arrays["a"].size
        if N < 2:
            raise ValueError("need at least two units to form two blocks")
        for k, val in arrays.items():
            if val.size != N:
                raise ValueError(f"unit field {k} has {val.size} entries, expected {N}")
            if not np.all(np.isfinite(val)):
                raise ValueError(f"unit field {k} has non-finite entries")
            val.setflags(write=False)
            object.__setattr__(self, k, val)
        load = np.array(self.load, dtype=float).reshape(-1)
        if load.size < 1 or not np.all(np.isfinite(load)):
            raise ValueError("load profile must be a nonempty finite vector")
        load.setflags(write=False)
        object.__setattr__(self, "load", load)
        if self.delta not in (1, 2):
            raise ValueError("delta must be 1 or 2")
        if not np.all(arrays["Pmin"] < arrays["Pmax"]):
            raise ValueError("every unit needs Pmin < Pmax")
        if np.any(arrays["D"] <= 0) or np.any(arrays["U"] <= 0):
            raise ValueError("ramp limits must be positive")
        if np.any(load < self.Pmin.sum()) or np.any(load > self.Pmax.sum()):
            raise ValueError("load outside the total capacity range")

    @property
    def N(self) -> int:
        return self.a.size

    @property
    def T(self) -> int:
        return self.load.size

    @property
    def valve_point(self) -> bool:
        return bool(np.any(self.e != 0))

    @property
    def P0(self) -> np.ndarray:
        """Output before the first period."""
        return 0.5 * self.Pmax


def with_valve_point(family: EpdFamily, delta: int = 2) -> EpdFamily:
    """Enable the ripple term with ``e = 1e5 a`` and ``f = 2 b / (1e5 a)``."""
    if np.any(family.a <= 0):
        raise ValueError("valve-point coefficients need a > 0")
    e = 1e5 * family.a
    return replace(family, e=e, f=2 * family.b / e, delta=delta, name=family.name + "-vp")


def replicate(family: EpdFamily, counts, scale_load: bool = True, name: str | None = None) -> EpdFamily:
    """Copy unit ``i`` of ``family`` ``counts[i]`` times.

    With ``scale_load`` the load profile is multiplied by the ratio of total
    capacities so the replicated system carries a proportional load.
    """
    counts = np.asarray(counts, dtype=int)
    if counts.shape != (family.N,) or np.any(counts < 0) or counts.sum() < 2:
        raise ValueError("counts need one nonnegative entry per unit and at least two units in total")
    fields = {k: np.repeat(getattr(family, k), counts) for k in UNIT_FIELDS}
    load = family.load
    if scale_load:
        load = load * fields["Pmax"].sum() / family.Pmax.sum()
    return EpdFamily(**fields, load=load, delta=family.delta, name=name or f"{family.name}-N{counts.sum()}")


def replicate_instance(family: EpdFamily, number: int, scale_load: bool = True) -> EpdFamily:
    if number not in REPLICATION_COUNTS:
        raise ValueError(f"instance number must be in 1..{len(REPLICATION_COUNTS)}")
    return replicate(family, REPLICATION_COUNTS[number], scale_load, name=f"{family.name}-no{number}")


class UnitFileError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


def load_units_file(path, T: int | None = None) -> EpdFamily:
    """Read a unit data file.

    CSV with a header row. The first column, ``kind``, is ``unit`` or
    ``load``. Unit rows fill the columns ``a,b,c,d,e,f,Pmin,Pmax,D,U``;
    load rows give the period (1-based) in ``period`` and the demand in
    ``value``. Blank lines and lines starting with ``#`` are ignored.
    With ``T`` given, the first ``T`` load periods are used.
    """
    path = Path(path)
    units: list[list[float]] = []
    loads: dict[int, float] = {}
    try:
        lines = path.read_text().splitlines()
    except OSError as err:
        raise UnitFileError(path, 0, f"cannot read file: {err}") from err
    content = [(i + 1, ln) for i, ln in enumerate(lines) if ln.strip() and not ln.lstrip().startswith("#")]
    if not content:
        raise UnitFileError(path, 0, "file is empty")
    header_line, header_text = content[0]
    header = [h.strip() for h in next(csv.reader([header_text]))]
    required = ("kind", *UNIT_FIELDS, "period", "value")
    missing = [h for h in required if h not in header]
    if missing:
        raise UnitFileError(path, header_line, f"header lacks columns {', '.join(missing)}")
    col = {h: i for i, h in enumerate(header)}

    def number(row, name, lineno):
        try:
            text = row[col[name]].strip()
        except IndexError:
            raise UnitFileError(path, lineno, f"missing field '{name}'") from None
        try:
            val = float(text)
        except ValueError:
            raise UnitFileError(path, lineno, f"field '{name}' is not a number: {text!r}") from None
        if not math.isfinite(val):
            raise UnitFileError(path, lineno, f"field '{name}' is not finite")
        return val

    for lineno, text in content[1:]:
        row = next(csv.reader([text]))
        kind = row[0].strip().lower() if row else ""
        if kind == "unit":
            vals = [number(row, k, lineno) for k in UNIT_FIELDS]
            rec = dict(zip(UNIT_FIELDS, vals))
            if rec["Pmin"] >= rec["Pmax"]:
                raise UnitFileError(path, lineno, "field 'Pmax' must exceed 'Pmin'")
            for k in ("D", "U"):
                if rec[k] <= 0:
                    raise UnitFileError(path, lineno, f"field '{k}' must be positive")
            if rec["a"] < 0 or rec["b"] < 0:
                raise UnitFileError(path, lineno, "fields 'a' and 'b' must be nonnegative")
            units.append(vals)
        elif kind == "load":
            period = number(row, "period", lineno)
            if period != int(period) or period < 1:
                raise UnitFileError(path, lineno, "field 'period' must be a positive integer")
            if int(period) in loads:
                raise UnitFileError(path, lineno, f"period {int(period)} given twice")
            loads[int(period)] = number(row, "value", lineno)
        else:
            raise UnitFileError(path, lineno, f"field 'kind' must be 'unit' or 'load', got {kind!r}")
    if len(units) < 2:
        raise UnitFileError(path, content[-1][0], "need at least two unit rows")
    if not loads:
        raise UnitFileError(path, content[-1][0], "no load rows")
    n_periods = max(loads)
    gaps = sorted(set(range(1, n_periods + 1)) - set(loads))
    if gaps:
        raise UnitFileError(path, content[-1][0], f"load periods missing: {gaps[:5]}")
    load = np.array([loads[t] for t in range(1, n_periods + 1)])
    if T is not None:
        if T < 1 or T > load.size:
            raise ValueError(f"T={T} but the file has {load.size} load periods")
        load = load[:T]
    data = np.array(units).T
    try:
        return EpdFamily(*data, load=load, name=path.stem)
    except ValueError as err:
        raise UnitFileError(path, content[-1][0], str(err)) from err


def default_units_path() -> Path:
    return Path(__file__).with_name("data") / "units5.csv"


def _unit_costs(fam: EpdFamily, units: np.ndarray, T: int):
    a, b, c, d = (np.repeat(getattr(fam, k)[units], T) for k in "abcd")
    e, f, pmin = (np.repeat(getattr(fam, k)[units], T) for k in ("e", "f", "Pmin"))
    delta = fam.delta

    def value(P):
        P = np.asarray(P, dtype=float)
        out = np.sum(((a * P + b) * P + c) * P + d)
        if np.any(e):
            out += np.sum(e * np.abs(np.sin(f * (P - pmin))) ** delta)
        return float(out)

    def grad(P):
        P = np.asarray(P, dtype=float)
        g = (3 * a * P + 2 * b) * P + c
        if np.any(e):
            z = f * (P - pmin)
            if delta == 2:
                g = g + e * f * np.sin(2 * z)
            else:
                g = g + e * f * np.sign(np.sin(z)) * np.cos(z)
        return g

    def hess(P):
        P = np.asarray(P, dtype=float)
        h = 6 * a * P + 2 * b
        if np.any(e):
            z = f * (P - pmin)
            if delta == 2:
                h = h + 2 * e * f**2 * np.cos(2 * z)
            else:
                h = h - e * f**2 * np.abs(np.sin(z))
        return np.diag(h)

    return value, grad, hess


def _unit_ranges(fam: EpdFamily, units: np.ndarray):
    """Ramp rows then capacity rows for a group of units, unit-major by period."""
    T = fam.T
    n = units.size * T
    ramp = np.zeros((n, n))
    for k in range(units.size):
        base = k * T
        ramp[base, base] = 1.0
        for t in range(1, T):
            ramp[base + t, base + t] = 1.0
            ramp[base + t, base + t - 1] = -1.0
    lo_r = -np.repeat(fam.D[units], T)
    hi_r = np.repeat(fam.U[units], T)
    first = np.arange(units.size) * T
    lo_r[first] += fam.P0[units]
    hi_r[first] += fam.P0[units]
    M = sp.vstack([sp.csr_matrix(ramp), sp.identity(n, format="csr")]).tocsr()
    lo = np.concatenate([lo_r, np.repeat(fam.Pmin[units], T)])
    hi = np.concatenate([hi_r, np.repeat(fam.Pmax[units], T)])
    return M, lo, hi


def build_epd(family: EpdFamily, evaluation_only: bool = False) -> tuple[TwoBlockProblem, VariableSplit]:
    """Dispatch problem with units ``0..N1-1`` in ``x`` and the rest in ``y``.

    Variables are unit-major (``P_{i,1..T}`` contiguous). One balance row per
    period forms ``Ax + By = load``. ``delta = 1`` with a nonzero ripple is
    nonsmooth and is only built with ``evaluation_only=True``.
    """
    fam = family
    nonsmooth = fam.delta == 1 and fam.valve_point
    if nonsmooth and not evaluation_only:
        raise ValueError("delta=1 valve-point cost is nonsmooth; build with evaluation_only=True")
    N, T = fam.N, fam.T
    N1 = N // 2
    ux, uy = np.arange(N1), np.arange(N1, N)
    f_val, f_grad, f_hess = _unit_costs(fam, ux, T)
    t_val, t_grad, t_hess = _unit_costs(fam, uy, T)
    A = np.tile(np.eye(T), (1, N1))
    B = np.tile(np.eye(T), (1, N - N1))
    C, l, v = _unit_ranges(fam, ux)
    D, s, r = _unit_ranges(fam, uy)
    problem = TwoBlockProblem(
        f_val, f_grad, f_hess, t_val, t_grad, t_hess,
        n1=N1 * T, n2=(N - N1) * T,
        A=A, B=B, b=fam.load,
        C=C, l=l, v=v, D=D, s=s, r=r,
        smooth=not nonsmooth,
        name=fam.name,
    )
    idx = np.arange(N * T)
    labels = tuple(f"P{i + 1},{t + 1}" for i in range(N) for t in range(T))
    start = np.repeat(fam.Pmin, T)
    split = VariableSplit(idx[: N1 * T], idx[N1 * T :], labels[: N1 * T], labels[N1 * T :], start=start)
    return problem, split


def epd_lambda0(family: EpdFamily) -> np.ndarray:
    """Initial balance multipliers used for dispatch runs (all ones)."""
    return np.ones(family.T)


# ---------------------------------------------------------------------------
# starting points


def _reference_point(problem: TwoBlockProblem) -> np.ndarray:
    """Midpoint of the tightest single-variable bounds (0 where unbounded)."""
    u_ref = []
    for M, lo, hi, n in (
        (problem.C, problem.l, problem.v, problem.n1),
        (problem.D, problem.s, problem.r, problem.n2),
    ):
        low = np.full(n, -np.inf)
        high = np.full(n, np.inf)
        M = sp.csr_matrix(M)
        for i in range(M.shape[0]):
            cols = M.indices[M.indptr[i] : M.indptr[i + 1]]
            vals = M.data[M.indptr[i] : M.indptr[i + 1]]
            if cols.size != 1 or vals[0] == 0:
                continue
            j, a = cols[0], vals[0]
            lo_j, hi_j = (lo[i] / a, hi[i] / a) if a > 0 else (hi[i] / a, lo[i] / a)
            low[j] = max(low[j], lo_j)
            high[j] = min(high[j], hi_j)
        # clamp 0 into [low, high], then take the midpoint where both sides are finite
        mid = np.clip(0.0, low, high)
        both = np.isfinite(low) & np.isfinite(high)
        mid[both] = 0.5 * (low[both] + high[both])
        u_ref.append(mid)
    return np.concatenate(u_ref)


def find_feasible_start(problem: TwoBlockProblem, split: VariableSplit | None = None, tol: float = 1e-10) -> np.ndarray:
    """A point satisfying the inequality and range constraints.

    A prescribed start carried by ``split`` is returned unchanged when it is
    feasible; otherwise the projection of the bound midpoint onto the
    feasible set is computed with the QP engine.
    """
    if split is not None and split.start is not None:
        start = np.asarray(split.start, dtype=float)
        if is_partially_feasible(problem, start, tol):
            return start.copy()
    u_ref = _reference_point(problem)
    n = problem.n1 + problem.n2
    G = np.hstack([dense(problem.E), dense(problem.F)])
    R = np.vstack([
        np.hstack([dense(problem.C), np.zeros((problem.l1, problem.n2))]),
        np.hstack([np.zeros((problem.l2, problem.n1)), dense(problem.D)]),
    ])
    qp = QpProblem(
        np.eye(n), -u_ref, G, problem.d, R,
        np.concatenate([problem.l, problem.s]), np.concatenate([problem.v, problem.r]),
    )
    sol = solve_qp(qp, kkt_tol=1e-12)
    u = sol.z
    rep = measure_feasibility(problem, u)
    if max(rep.ineq_violation, rep.range_violation) > tol:
        raise Infeasible(
            f"projected start violates constraints by {max(rep.ineq_violation, rep.range_violation):.3e}"
        )
    return u
