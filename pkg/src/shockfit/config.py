"""Run configuration: YAML parsing with line-numbered errors, object builders, round trip."""
from __future__ import annotations

import copy
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .background import BackgroundConstants, BackgroundShock, background_constants, solve_normal_shock
from .gas import DomainError, FlowState, GasModel, IgnitionParams, density
from .locator import POLICIES, Hypothesis, NozzlePerturbation, Profile


class ConfigError(ValueError):
    def __init__(self, msg, line=None):
        super().__init__(f"line {line}: {msg}" if line else msg)
        self.line = line


DEFAULTS = {
    "numerics": {"nx_up": 256, "nx_down": 192, "ny": 64, "tol": None, "root_policy": "nearest",
                 "max_sweeps": 100, "elliptic_tol": 1e-3, "root_tol": 1e-13},
    "output": {"directory": "shockfit-out", "formats": ["csv"]},
}
SECTIONS = ("gas", "inflow", "nozzle", "exit", "hypothesis", "numerics", "output", "sweep")


def _line_index(node, path=(), out=None):
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            _line_index(v, path + (k.value,), out)
            out.setdefault(path + (k.value,), k.start_mark.line + 1)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_index(v, path + (i,), out)
    return out


@dataclass
class RunConfig:
    data: dict
    lines: dict
    base_dir: Path

    # -- parsing ----------------------------------------------------------

    @classmethod
    def from_text(cls, text: str, base_dir: Path | str = ".") -> "RunConfig":
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            line = getattr(getattr(exc, "problem_mark", None), "line", None)
            raise ConfigError(f"malformed YAML: {exc}", None if line is None else line + 1)
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping of sections", 1)
        lines = _line_index(node) if node is not None else {}
        merged = copy.deepcopy(DEFAULTS)
        for k, v in data.items():
            if k not in SECTIONS:
                raise ConfigError(f"unknown section {k!r}", lines.get((k,)))
            if isinstance(v, dict) and isinstance(merged.get(k), dict):
                merged[k].update(v)
            else:
                merged[k] = v
        cfg = cls(merged, lines, Path(base_dir))
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}")
        return cls.from_text(text, path.parent)

    @classmethod
    def default(cls) -> "RunConfig":
        text = resources.files("shockfit").joinpath("data/default.yaml").read_text()
        return cls.from_text(text)

    def to_text(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True)

    def line(self, *path):
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path[:-1]
        return None

    def get(self, *path, required=True, default=None):
        node = self.data
        for k in path:
            if not isinstance(node, dict) or k not in node or node[k] is None:
                if required:
                    raise ConfigError(f"missing field {'.'.join(path)}", self.line(*path))
                return default
            node = node[k]
        return node

    def number(self, *path, required=True, default=None):
        v = self.get(*path, required=required, default=default)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"field {'.'.join(path)} must be a number, got {v!r}",
                              self.line(*path))
        return float(v)

    def _wrap(self, path, fn):
        try:
            return fn()
        except ConfigError:
            raise
        except (DomainError, ValueError, TypeError) as exc:
            raise ConfigError(f"{'.'.join(path)}: {exc}", self.line(*path)) from exc

    # -- builders ---------------------------------------------------------

    def gas(self) -> GasModel:
        g = ("gas",)
        ign = self._wrap(g + ("ignition",), lambda: IgnitionParams(
            self.number("gas", "ignition", "T0"), self.number("gas", "ignition", "a"),
            self.number("gas", "ignition", "activation_energy"),
            self.number("gas", "ignition", "R0")))
        gamma = self.number("gas", "gamma")
        if not gamma > 1:
            raise ConfigError(f"gas.gamma must be > 1, got {gamma}", self.line("gas", "gamma"))
        return self._wrap(g, lambda: GasModel(
            gamma, self.number("gas", "c_v"), ign, self.number("gas", "q_e", required=False,
                                                               default=0.0),
            self.number("gas", "kappa", required=False, default=0.0),
            self.number("gas", "gas_constant", required=False)))

    def inflow(self, gas: GasModel) -> FlowState:
        p = self.number("inflow", "p")
        Z = self.number("inflow", "Z", required=False, default=1.0)
        rho = self.number("inflow", "rho", required=False)
        S = self.number("inflow", "S", required=False)
        if (rho is None) == (S is None):
            raise ConfigError("inflow needs exactly one of rho, S", self.line("inflow"))
        mach = self.number("inflow", "mach", required=False)
        q = self.number("inflow", "q", required=False)
        if (mach is None) == (q is None):
            raise ConfigError("inflow needs exactly one of mach, q", self.line("inflow"))

        def build():
            r = rho if rho is not None else float(density(gas, p, S))
            if mach is not None:
                return FlowState.from_mach(gas, p, r, mach, Z=Z)
            return FlowState.from_density(gas, p, r, q, Z=Z)

        return self._wrap(("inflow",), build).validate(gas)

    def profile(self, *path) -> Profile:
        spec = self.get(*path)
        line = self.line(*path)
        if isinstance(spec, (int, float)) and not isinstance(spec, bool):
            return Profile.constant(spec)
        if not isinstance(spec, dict) or len(spec) != 1:
            raise ConfigError(f"{'.'.join(path)} must be one of polynomial/constant/samples", line)
        (kind, val), = spec.items()
        if kind == "polynomial":
            if not isinstance(val, list) or not val:
                raise ConfigError(f"{'.'.join(path)}.polynomial must be a coefficient list", line)
            return self._wrap(path, lambda: Profile.polynomial([float(c) for c in val]))
        if kind == "constant":
            return self._wrap(path, lambda: Profile.constant(float(val)))
        if kind == "samples":
            if isinstance(val, str):
                f = Path(val)
                f = f if f.is_absolute() else self.base_dir / f
                try:
                    arr = np.loadtxt(f, ndmin=2)
                except (OSError, ValueError) as exc:
                    raise ConfigError(f"cannot read sample table {f}: {exc}", line)
            else:
                arr = np.asarray(val, dtype=float)
            if arr.ndim != 2 or arr.shape[1] != 2:
                raise ConfigError(f"{'.'.join(path)} sample table must have two columns", line)
            return self._wrap(path, lambda: Profile.samples(arr[:, 0], arr[:, 1]))
        raise ConfigError(f"unknown profile kind {kind!r}", line)

    def perturbation(self, gas: GasModel, sigma=None, kappa=None) -> NozzlePerturbation:
        sigma = self.number("nozzle", "sigma") if sigma is None else sigma
        kappa = gas.kappa if kappa is None else kappa
        return self._wrap(("nozzle",), lambda: NozzlePerturbation(
            self.number("nozzle", "L"), self.profile("nozzle", "theta_profile"),
            self.profile("exit", "p_sigma"), self.profile("exit", "p_kappa"), sigma, kappa))

    def hypothesis(self) -> Hypothesis:
        h = self.get("hypothesis")
        if not isinstance(h, dict):
            raise ConfigError("hypothesis must be a mapping", self.line("hypothesis"))
        return self._wrap(("hypothesis",), lambda: Hypothesis(
            h.get("case"), *(None if h.get(k) is None else float(h[k])
                             for k in ("A", "A1", "A2", "s", "beta0"))))

    def numerics(self) -> dict:
        n = dict(self.get("numerics"))
        for k in ("nx_up", "nx_down", "ny", "max_sweeps"):
            if not isinstance(n.get(k), int) or n[k] < 1:
                raise ConfigError(f"numerics.{k} must be a positive integer",
                                  self.line("numerics", k))
        if n["root_policy"] not in POLICIES:
            raise ConfigError(f"numerics.root_policy must be one of {POLICIES}",
                              self.line("numerics", "root_policy"))
        return n

    def validate(self):
        gas = self.gas()
        self.inflow(gas)
        self.perturbation(gas)
        self.hypothesis()
        self.numerics()

    def build(self):
        """(gas, shock, constants, perturbation, hypothesis, numerics)."""
        gas = self.gas()
        shock: BackgroundShock = self._wrap(("inflow",), lambda: solve_normal_shock(
            gas, self.inflow(gas)))
        consts: BackgroundConstants = background_constants(shock)
        return gas, shock, consts, self.perturbation(gas), self.hypothesis(), self.numerics()

    def with_values(self, **dotted) -> "RunConfig":
        """Copy with dotted-path overrides, e.g. with_values(**{"gas.kappa": 0.01})."""
        data = copy.deepcopy(self.data)
        for key, v in dotted.items():
            node = data
            *head, last = key.split(".")
            for k in head:
                node = node.setdefault(k, {})
            node[last] = v
        cfg = RunConfig(data, self.lines, self.base_dir)
        cfg.validate()
        return cfg
