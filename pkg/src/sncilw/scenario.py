"""Scenario files: JSON descriptions of a run, and state (de)serialization.

Complex numbers are stored as two-element ``[re, im]`` lists throughout.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .backlund import assemble_constraints, eigenpair, one_soliton_data, solve_initial_data
from .dynamics import IntegratorConfig, SpinPoleState, empty_state
from .elliptic import CaseKind
from .errors import ScenarioError
from .verify import DEFAULT_MONITOR_TOL
from .waves import periodic_grid, window_grid

DEFAULT_TOLERANCES = {**DEFAULT_MONITOR_TOL, "pde_res_max": 1e-6, "constraint_residual": 1e-8}

KNOWN_KEYS = {
    "name", "case", "ell", "delta", "x_min", "x_max", "n", "d", "N", "M_count", "poles_a", "poles_b",
    "spins_f", "spins_g", "M0", "one_soliton", "hermitian", "trace_M", "integrator", "times",
    "tolerances", "seed", "out", "description",
}


def to_json_complex(z):
    """Nested [re, im] lists for a complex scalar or array."""
    arr = np.asarray(z, complex)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def from_json_complex(obj, what: str = "value"):
    """Inverse of :func:`to_json_complex`; plain reals are accepted too."""
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{what}: not numeric ({exc})") from None
    if arr.ndim == 0:
        return complex(arr)
    if arr.shape[-1] != 2:
        raise ScenarioError(f"{what}: complex entries must be [re, im] pairs, got shape {arr.shape}")
    out = arr[..., 0] + 1j * arr[..., 1]
    return complex(out) if out.ndim == 0 else out


@dataclass
class Scenario:
    case: str
    d: int
    N: int
    M_count: int
    name: str = "scenario"
    ell: float | None = None
    delta: float | None = None
    x_min: float | None = None
    x_max: float | None = None
    n: int = 512
    poles_a: list = field(default_factory=list)
    poles_b: list = field(default_factory=list)
    spins_f: object = "random"
    spins_g: object = "random"
    M0: object = None
    one_soliton: dict | None = None
    hermitian: bool = False
    trace_M: complex = 0.0
    integrator: dict = field(default_factory=dict)
    times: list = field(default_factory=lambda: [0.0])
    tolerances: dict = field(default_factory=dict)
    seed: int = 0
    out: str | None = None
    description: str = ""

    def __post_init__(self):
        if self.case not in ("I", "II", "III", "IV"):
            raise ScenarioError(f"case: unknown tag {self.case!r}")
        try:
            self.case_kind()
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"case parameters: {exc}") from None
        if self.case == "IV" and self.N != self.M_count:
            raise ScenarioError(f"N={self.N} must equal M_count={self.M_count} in case IV")
        if self.d < 1 or self.N < 0 or self.M_count < 0:
            raise ScenarioError("d must be positive and N, M_count nonnegative")
        if self.case in ("I", "III") and (self.x_min is None or self.x_max is None or not self.x_max > self.x_min):
            raise ScenarioError("x_min < x_max required for a real-line case")
        if self.n < 8:
            raise ScenarioError("n must be at least 8")
        if self.times != sorted(self.times) or len(set(self.times)) != len(self.times):
            raise ScenarioError("times must be strictly increasing")
        if self.one_soliton is not None and not (self.N == self.M_count == 1):
            raise ScenarioError("one_soliton requires N = M_count = 1")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ScenarioError(f"tolerances: unknown names {sorted(unknown)}")
        self.integrator_config()

    def case_kind(self) -> CaseKind:
        return CaseKind(self.case, ell=self.ell, delta=self.delta)

    def integrator_config(self, strict: bool = False) -> IntegratorConfig:
        try:
            return IntegratorConfig(strict=strict, **self.integrator)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"integrator: {exc}") from None

    def grid(self) -> np.ndarray:
        """Periodic grid on [-ell, ell) or the inclusive window [x_min, x_max]."""
        if self.case in ("II", "IV"):
            return periodic_grid(self.ell, self.n)
        return window_grid(self.x_min, self.x_max, self.n)

    def tol(self) -> dict:
        return {**DEFAULT_TOLERANCES, **self.tolerances}

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("poles_a", "poles_b"):
            out[key] = to_json_complex(np.asarray(self.poles_a if key == "poles_a" else self.poles_b, complex))
        for key in ("spins_f", "spins_g", "M0"):
            val = getattr(self, key)
            if val is not None and not isinstance(val, str):
                out[key] = to_json_complex(val)
        out["trace_M"] = to_json_complex(self.trace_M)
        return {k: v for k, v in out.items() if v is not None}


def scenario_from_dict(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError("top level must be a JSON object")
    unknown = set(raw) - KNOWN_KEYS
    if unknown:
        raise ScenarioError(f"unknown keys {sorted(unknown)}")
    missing = {"case", "d", "N", "M_count"} - set(raw)
    if missing:
        raise ScenarioError(f"missing keys {sorted(missing)}")
    kw = dict(raw)
    for key in ("poles_a", "poles_b"):
        if key in kw:
            kw[key] = list(np.atleast_1d(from_json_complex(kw[key], key))) if kw[key] else []
    for key in ("spins_f", "spins_g", "M0"):
        if key in kw and kw[key] is not None and not isinstance(kw[key], str):
            kw[key] = np.atleast_2d(from_json_complex(kw[key], key))
    if "trace_M" in kw:
        kw["trace_M"] = complex(from_json_complex(kw["trace_M"], "trace_M"))
    if "times" in kw:
        kw["times"] = [float(t) for t in kw["times"]]
    for key in ("d", "N", "M_count", "n", "seed"):
        if key in kw and not isinstance(kw[key], int):
            raise ScenarioError(f"{key}: expected an integer, got {kw[key]!r}")
    try:
        return Scenario(**kw)
    except TypeError as exc:
        raise ScenarioError(str(exc)) from None


def load_scenario(path) -> Scenario:
    """Parse a scenario file; JSON errors name the line and column."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    sc = scenario_from_dict(raw)
    if sc.name == "scenario":
        sc.name = Path(path).stem
    return sc


def shipped_scenarios() -> list[str]:
    root = resources.files("sncilw") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def shipped_scenario_path(name: str) -> Path:
    path = Path(str(resources.files("sncilw") / "scenarios" / f"{name}.json"))
    if not path.exists():
        raise ScenarioError(f"no shipped scenario named {name!r}")
    return path


def resolve_scenario(spec: str) -> Scenario:
    """A file path, or the name of a shipped scenario."""
    p = Path(spec)
    return load_scenario(p if p.exists() else shipped_scenario_path(spec))


# --------------------------------------------------------------------------
# initial data


def _spins(spec, count: int, d: int, rng, what: str) -> np.ndarray:
    if isinstance(spec, str):
        if spec != "random":
            raise ScenarioError(f"{what}: expected an array or \"random\"")
        return rng.normal(size=(count, d)) + 1j * rng.normal(size=(count, d))
    arr = np.asarray(spec, complex).reshape(-1, d) if count else np.zeros((0, d), complex)
    if arr.shape != (count, d):
        raise ScenarioError(f"{what}: shape {arr.shape} does not match ({count}, {d})")
    return arr


def build_initial_data(sc: Scenario) -> tuple[SpinPoleState, dict]:
    """Admissible state for the scenario plus a summary of the solve."""
    case = sc.case_kind()
    d = sc.d
    M0 = None if sc.M0 is None else np.asarray(sc.M0, complex).reshape(d, d)
    if sc.N == 0 and sc.M_count == 0:
        if M0 is None:
            raise ScenarioError("M0 is required when there are no poles")
        return empty_state(M0), {"constraint_residual": 0.0, "kind": "empty"}

    a = np.asarray(sc.poles_a, complex)
    b = np.asarray(sc.poles_b, complex)
    if sc.hermitian and b.size == 0:
        b = a.conj()
    if a.size != sc.N or b.size != sc.M_count:
        raise ScenarioError(f"poles: got {a.size}/{b.size} positions for N={sc.N}, M_count={sc.M_count}")

    if sc.one_soliton is not None:
        if M0 is None:
            raise ScenarioError("one_soliton requires M0")
        e, f = eigenpair(M0, int(sc.one_soliton.get("eig_index", 0)))
        state = one_soliton_data(case, M0, a[0], b[0], (e, f))
        return state, {"constraint_residual": 0.0, "kind": "one_soliton", "v1": state.adot[0]}

    rng = np.random.default_rng(sc.seed)
    f = _spins(sc.spins_f, sc.N, d, rng, "spins_f")
    if sc.hermitian:
        if not np.allclose(b, a.conj(), atol=1e-14, rtol=0):
            raise ScenarioError("hermitian scenarios need poles_b = conj(poles_a)")
        g = f.conj()
    else:
        g = _spins(sc.spins_g, sc.M_count, d, rng, "spins_g")
    if case.tag == "IV":
        M0 = None
    elif M0 is None:
        raise ScenarioError(f"case {case.tag} requires M0")
    problem = assemble_constraints(case, a, b, f, g, M0=M0)
    sol = solve_initial_data(problem, trace_M=sc.trace_M, tol=sc.tol()["constraint_residual"])
    info = {"constraint_residual": sol.residual, "kind": "constraint_solve", "rank": sol.rank,
            "nullity": sol.nullity, "velocity_rank_deficiency": sol.velocity_rank_deficiency,
            **{f"res_{k}": v for k, v in sol.report.items()}}
    return sol.state, info


# --------------------------------------------------------------------------
# state files

_STATE_FIELDS = ("a", "adot", "b", "bdot", "e", "f", "g", "h", "M_bg")


def state_to_dict(state: SpinPoleState) -> dict:
    out = {"t": float(state.t), "d": state.d}
    for name in _STATE_FIELDS:
        out[name] = to_json_complex(getattr(state, name))
    return out


def state_from_dict(raw: dict) -> SpinPoleState:
    try:
        d = int(raw["d"])
        vals = {}
        for name in _STATE_FIELDS:
            arr = np.asarray(from_json_complex(raw[name], name), complex) if raw[name] else np.zeros(0, complex)
            vals[name] = arr
        for name in ("e", "f", "g", "h"):
            vals[name] = vals[name].reshape(-1, d)
        vals["M_bg"] = vals["M_bg"].reshape(d, d)
        return SpinPoleState(t=float(raw["t"]), **vals)
    except KeyError as exc:
        raise ScenarioError(f"state file: missing field {exc.args[0]!r}") from None


def save_state(path, state: SpinPoleState, meta: dict | None = None) -> None:
    payload = {"state": state_to_dict(state), "meta": _jsonable(meta or {})}
    Path(path).write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")


def load_state(path) -> tuple[SpinPoleState, dict]:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict) or "state" not in raw:
        raise ScenarioError(f"{path}: no \"state\" object")
    return state_from_dict(raw["state"]), raw.get("meta", {})


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return to_json_complex(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
