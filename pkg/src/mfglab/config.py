"""Scenario configuration: JSON schema, validation and canonical serialization.

A scenario document is a JSON object with exactly one kind block
(``games``, ``meeting``, ``mkv``, ``fbsde``, ``mfg`` or ``aiyagari``) plus
optional ``seed``, ``out_dir``, ``description`` and ``tolerances``.
Validation reports every violation with its field path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import InvalidArgument
from .measures import DistributionSpec

KINDS = ("games", "meeting", "mkv", "fbsde", "mfg", "aiyagari")
_REQUIRED = object()


class ConfigError(InvalidArgument):
    """Invalid scenario document; ``violations`` lists ``(path, message)`` pairs."""

    def __init__(self, violations, line=None, column=None):
        self.violations = list(violations)
        self.line, self.column = line, column
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.violations))


@dataclass(frozen=True)
class Field:
    kind: type | tuple
    default: Any = _REQUIRED
    check: Callable | None = None


def _positive(v):
    return None if v > 0 else "must be positive"


def _nonneg(v):
    return None if v >= 0 else "must be nonnegative"


def _open_unit(v):
    return None if 0 < v < 1 else "must lie in (0, 1)"


def _damping(v):
    return None if 0 < v <= 1 else "must lie in (0, 1]"


def _at_least(n):
    return lambda v: None if v >= n else f"must be at least {n}"


def _between(lo, hi):
    return lambda v: None if lo <= v <= hi else f"must lie in [{lo}, {hi}]"


def _choice(*opts):
    return lambda v: None if v in opts else f"must be one of {', '.join(map(repr, opts))}"


def _int_list(minimum):
    def check(v):
        if not all(isinstance(i, int) and not isinstance(i, bool) and i >= minimum for i in v):
            return f"must be a list of integers >= {minimum}"
        return None

    return check


NUM = (int, float)

SCHEMAS: dict[str, dict[str, Field]] = {
    "games": {
        "game": Field(str, _REQUIRED, _choice("prisoners_dilemma", "matching_pennies", "cournot", "custom")),
        "a": Field(NUM, 4.0),
        "c": Field(NUM, 1.0, _nonneg),
        "payoff1": Field(list, None),
        "payoff2": Field(list, None),
    },
    "meeting": {
        "A": Field(NUM, 1.0, _positive),
        "B": Field(NUM, 1.0, _positive),
        "C": Field(NUM, 1.0, _positive),
        "t0": Field(NUM, 9.0, _between(0.0, 24.0)),
        "nu": Field(dict, {"kind": "atom-mixture", "points": [1.0], "weights": [1.0]}),
        "quantile": Field(NUM, 0.75, _open_unit),
        "mode": Field(str, "self_consistent", _choice("self_consistent", "direct")),
        "tol": Field(NUM, 1e-10, _positive),
        "N_list": Field(list, [100, 1000, 10000], _int_list(1)),
        "replicates": Field(int, 5, _at_least(1)),
    },
    "mkv": {
        "kernel": Field(dict, {"name": "linear_pull", "strength": 1.0}),
        "sigma": Field(NUM, 1.0, _nonneg),
        "mu0": Field(dict, {"kind": "atom-mixture", "points": [0.0], "weights": [1.0]}),
        "T": Field(NUM, 1.0, _positive),
        "dt": Field(NUM, 0.01, _positive),
        "N": Field(list, [100, 1000], _int_list(1)),
        "replicates": Field(int, 3, _at_least(1)),
        "M": Field(int, 20000, _at_least(10)),
        "tol": Field(NUM, 1e-8, _positive),
        "max_iter": Field(int, 50, _at_least(1)),
    },
    "fbsde": {
        "instance": Field(str, _REQUIRED, _choice("black_scholes", "linear_coupled", "custom")),
        "s0": Field(NUM, 1.0, _positive),
        "strike": Field(NUM, 1.0, _positive),
        "r": Field(NUM, 0.05),
        "mu": Field(NUM, 0.1),
        "sigma": Field(NUM, 0.2, _positive),
        "T": Field(NUM, 1.0, _positive),
        "x0": Field(NUM, 0.5),
        "nt": Field(int, 400, _at_least(1)),
        "nx": Field(int, 401, _at_least(3)),
        "paths": Field(int, 2000, _at_least(1)),
        "regression_steps": Field(int, 200, _at_least(1)),
        "regression_paths": Field(int, 20000, _at_least(10)),
        "basis_degree": Field(int, 4, _between(1, 6)),
        "drift": Field(list, [0.0, 0.0, 0.0]),
        "vol": Field(list, [1.0, 0.0, 0.0]),
        "driver": Field(list, [0.0, 0.0, 0.0, 0.0]),
        "terminal": Field(list, [0.0, 1.0]),
        "x_domain": Field(list, None),
    },
    "mfg": {
        "preset": Field(str, _REQUIRED, _choice("lq_mean_field", "crowd_aversion", "custom")),
        "kappa": Field(NUM, 1.0, _nonneg),
        "terminal_weight": Field(NUM, 1.0, _nonneg),
        "target": Field(NUM, 0.0),
        "sigma": Field(NUM, 0.3, _positive),
        "m0": Field(NUM, 1.0),
        "s0": Field(NUM, 0.2, _positive),
        "T": Field(NUM, 1.0, _positive),
        "a_max": Field(NUM, 10.0, _positive),
        "radius": Field(NUM, 0.5, _positive),
        "action_cost": Field(NUM, 1.0, _positive),
        "state_weight": Field(NUM, 0.0, _nonneg),
        "state_target": Field(NUM, 0.0),
        "drift": Field(list, [0.0, 0.0, 1.0]),
        "x_domain": Field(list, None),
        "method": Field(str, "smp", _choice("smp", "hjb_fp", "both")),
        "nt": Field(int, 100, _at_least(1)),
        "nx": Field(int, 401, _at_least(3)),
        "hjb_nx": Field(int, 201, _at_least(3)),
        "particles": Field(int, 2000, _at_least(10)),
        "damping": Field(NUM, 1.0, _damping),
        "hjb_damping": Field(NUM, 0.5, _damping),
        "tol": Field(NUM, 1e-6, _positive),
        "max_iters": Field(int, 200, _at_least(1)),
        "epsilon_N": Field(list, [], _int_list(2)),
        "epsilon_seeds": Field(int, 3, _at_least(1)),
        "deviation_budget": Field(int, 1000, _at_least(2)),
    },
    "aiyagari": {
        "gamma": Field(NUM, 2.0, _positive),
        "alpha_share": Field(NUM, 0.36, _open_unit),
        "delta": Field(NUM, 0.08, _nonneg),
        "beta": Field(NUM, 0.05, _nonneg),
        "b_limit": Field(NUM, 0.0, _nonneg),
        "labor": Field(dict, {"kind": "ou", "vol": 0.2, "reversion": 1.0}),
        "l_min": Field(NUM, 0.2, _positive),
        "l_max": Field(NUM, 3.0, _positive),
        "T": Field(NUM, 50.0, _positive),
        "K0": Field(NUM, 4.0, _positive),
        "foc_convention": Field(str, "derived", _choice("derived", "paper_exact")),
        "paper_exact_ode": Field(bool, False),
        "include_beta": Field(bool, True),
        "printed_aggregate": Field(bool, False),
        "steps": Field(int, 1000, _at_least(100)),
        "method": Field(str, "newton", _choice("newton", "sweep")),
        "damping": Field(NUM, 0.5, _damping),
        "panel_N": Field(int, 10000, _at_least(0)),
    },
}

TOLERANCES = {
    "meeting_residual": 1e-8,
    "oracle_rel_error": 0.005,
    "cross_method_rel": 0.02,
    "picard_tol_factor": 2.0,
    "ode_residual": 1e-6,
    "mass_drift": 1e-8,
    "mean_path_error": 1e-3,
}


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    kind: str
    params: dict  # kind block with defaults filled in
    seed: int = 0
    out_dir: str | None = None
    description: str = ""
    tolerances: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)  # the document as given

    def to_json(self) -> str:
        return canonical_json(self.raw)

    def tol(self, name: str) -> float:
        return float(self.tolerances.get(name, TOLERANCES[name]))


def canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _type_ok(value, kind) -> bool:
    kinds = kind if isinstance(kind, tuple) else (kind,)
    if isinstance(value, bool) and bool not in kinds:
        return False
    return isinstance(value, kinds)


def _type_name(kind) -> str:
    kinds = kind if isinstance(kind, tuple) else (kind,)
    names = {int: "integer", float: "number", str: "string", list: "list", dict: "object", bool: "boolean"}
    return " or ".join(names[k] for k in kinds)


def _check_block(kind: str, block, violations) -> dict:
    if not isinstance(block, dict):
        violations.append((kind, "must be an object"))
        return {}
    schema = SCHEMAS[kind]
    out = {}
    for key in sorted(set(block) - set(schema)):
        violations.append((f"{kind}.{key}", "unknown field"))
    for key, spec in schema.items():
        path = f"{kind}.{key}"
        if key not in block:
            if spec.default is _REQUIRED:
                violations.append((path, "required field missing"))
            else:
                out[key] = spec.default
            continue
        value = block[key]
        if value is None and spec.default is None:
            out[key] = None
            continue
        if not _type_ok(value, spec.kind):
            violations.append((path, f"must be a {_type_name(spec.kind)}"))
            continue
        if spec.check is not None:
            msg = spec.check(value)
            if msg:
                violations.append((path, msg))
                continue
        out[key] = value
    return out


def _check_distribution(path, d, violations, positive=False):
    try:
        dist = DistributionSpec.from_dict(d)
    except (InvalidArgument, KeyError, TypeError) as e:
        violations.append((path, f"invalid distribution: {e}"))
        return
    if positive and not dist.support()[0] > 0:
        violations.append((path, "support must be strictly positive"))


def _cross_validate(kind: str, p: dict, violations):
    """Preconditions that involve several fields or a nested object."""
    if kind == "games":
        if p.get("game") == "cournot" and "a" in p and "c" in p and not p["a"] > p["c"]:
            violations.append(("games.a", "demand intercept must exceed marginal cost c"))
        if p.get("game") == "custom":
            for key in ("payoff1", "payoff2"):
                if not p.get(key):
                    violations.append((f"games.{key}", "required for a custom game"))
    elif kind == "meeting":
        if "nu" in p:
            _check_distribution("meeting.nu", p["nu"], violations, positive=True)
    elif kind == "mkv":
        if "mu0" in p:
            _check_distribution("mkv.mu0", p["mu0"], violations)
        if "T" in p and "dt" in p:
            n = round(p["T"] / p["dt"])
            if n < 1 or abs(n * p["dt"] - p["T"]) > 1e-12 * max(1.0, p["T"]):
                violations.append(("mkv.dt", "must divide T"))
        k = p.get("kernel")
        if isinstance(k, dict):
            names = ("zero", "linear_pull", "ou", "custom-polynomial", "tanh_pull")
            if k.get("name") not in names:
                violations.append(("mkv.kernel.name", f"must be one of {', '.join(names)}"))
            if "strength" in k and not _type_ok(k["strength"], NUM):
                violations.append(("mkv.kernel.strength", "must be a number"))
            if k.get("name") == "custom-polynomial":
                c = k.get("coeffs")
                rows = c if isinstance(c, list) else []
                ok = bool(rows) and all(
                    isinstance(r, list) and r and len(r) == len(rows[0]) and all(_type_ok(v, NUM) for v in r)
                    for r in rows
                )
                if not ok:
                    violations.append(("mkv.kernel.coeffs", "required rectangular list of number lists"))
            extra = set(k) - {"name", "strength", "coeffs"}
            for key in sorted(extra):
                violations.append((f"mkv.kernel.{key}", "unknown field"))
    elif kind == "fbsde":
        _check_interval("fbsde.x_domain", p.get("x_domain"), violations)
        if p.get("instance") == "custom":
            for key, n in (("drift", 3), ("vol", 3), ("driver", 4)):
                _check_numbers(f"fbsde.{key}", p.get(key), violations, length=n)
            _check_numbers("fbsde.terminal", p.get("terminal"), violations)
            vol = p.get("vol")
            if isinstance(vol, list) and len(vol) == 3 and not any(vol):
                violations.append(("fbsde.vol", "volatility must not vanish identically"))
        if p.get("instance") == "linear_coupled" and p.get("basis_degree", 4) < 2:
            violations.append(("fbsde.basis_degree", "coupled regression needs degree >= 2"))
    elif kind == "mfg":
        _check_interval("mfg.x_domain", p.get("x_domain"), violations)
        if p.get("epsilon_N") and p.get("method") == "hjb_fp":
            violations.append(("mfg.epsilon_N", "epsilon estimates need the particle (smp or both) method"))
        if p.get("preset") == "custom":
            _check_numbers("mfg.drift", p.get("drift"), violations, length=3)
            d = p.get("drift")
            if isinstance(d, list) and len(d) == 3 and d[2] == 0:
                violations.append(("mfg.drift", "the action coefficient must be nonzero"))
    elif kind == "aiyagari":
        lab = p.get("labor")
        if isinstance(lab, dict):
            for key in sorted(set(lab) - {"kind", "vol", "reversion"}):
                violations.append((f"aiyagari.labor.{key}", "unknown field"))
            if lab.get("kind", "ou") not in ("ou", "gbm"):
                violations.append(("aiyagari.labor.kind", "must be 'ou' or 'gbm'"))
            for key in ("vol", "reversion"):
                v = lab.get(key, 1.0)
                if not _type_ok(v, NUM) or v < 0 or (key == "reversion" and v == 0):
                    violations.append((f"aiyagari.labor.{key}", "must be a nonnegative number (reversion positive)"))
        if "l_min" in p and "l_max" in p and not p["l_min"] <= 1 <= p["l_max"]:
            violations.append(("aiyagari.l_min", "need l_min <= 1 <= l_max so that labor can average one"))


def _check_interval(path, xd, violations):
    if xd is not None and not (
        len(xd) == 2 and all(_type_ok(v, NUM) for v in xd) and xd[0] < xd[1]
    ):
        violations.append((path, "must be [lo, hi] with lo < hi"))


def _check_numbers(path, values, violations, length=None):
    if values is None:
        return
    if not all(_type_ok(v, NUM) for v in values) or not values:
        violations.append((path, "must be a nonempty list of numbers"))
    elif length is not None and len(values) != length:
        violations.append((path, f"must have {length} entries"))


def parse_document(text: str) -> dict:
    if not text.strip():
        raise ConfigError([("<document>", "empty document")], 1, 1)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError([("<document>", f"parse error at line {e.lineno}, column {e.colno}: {e.msg}")], e.lineno, e.colno)
    if not isinstance(doc, dict):
        raise ConfigError([("<document>", "top level must be a JSON object")])
    return doc


def validate_config(text: str) -> ScenarioConfig:
    """Parse and cross-validate a scenario document, listing all violations."""
    doc = parse_document(text)
    violations = []
    blocks = [k for k in KINDS if k in doc]
    allowed = set(KINDS) | {"seed", "out_dir", "description", "tolerances", "kind"}
    for key in sorted(set(doc) - allowed):
        violations.append((key, "unknown field"))
    if len(blocks) != 1:
        violations.append(("<document>", f"exactly one of {', '.join(KINDS)} is required, found {len(blocks)}"))
    if "kind" in doc and (len(blocks) != 1 or doc["kind"] != blocks[0]):
        violations.append(("kind", "must name the block that is present"))
    seed = doc.get("seed", 0)
    if not (isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0):
        violations.append(("seed", "must be a nonnegative integer"))
    if "out_dir" in doc and not isinstance(doc["out_dir"], str):
        violations.append(("out_dir", "must be a string"))
    if "description" in doc and not isinstance(doc["description"], str):
        violations.append(("description", "must be a string"))
    tols = doc.get("tolerances", {})
    if not isinstance(tols, dict):
        violations.append(("tolerances", "must be an object"))
        tols = {}
    for key, v in tols.items():
        if key not in TOLERANCES:
            violations.append((f"tolerances.{key}", "unknown tolerance"))
        elif not _type_ok(v, NUM) or not v > 0:
            violations.append((f"tolerances.{key}", "must be a positive number"))
    params = {}
    if len(blocks) == 1:
        kind = blocks[0]
        params = _check_block(kind, doc[kind], violations)
        _cross_validate(kind, params, violations)
        if not violations:
            from .runner import build

            try:
                build(kind, params)
            except (InvalidArgument, ValueError, TypeError) as e:
                violations.append((kind, str(e)))
    if violations:
        raise ConfigError(violations)
    return ScenarioConfig(
        blocks[0], params, seed, doc.get("out_dir"), doc.get("description", ""), dict(tols), doc
    )
