"""Configuration management for narrowstencil runs."""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from .core.errors import ConfigError
from .core.fd_ops import AUX_MODES
from .core.problems import PROBLEM_NAMES
from .core.scheme import MOMENT_MODES
from .core.solver import DAMPING, GAMMA_SCHEDULE, INITIAL_GUESSES, LINEAR_SOLVERS, METHODS

logger = logging.getLogger(__name__)

COMMANDS = ("solve", "convergence", "verify", "dump-grid")
CONVENTIONS = ("auto", "sides", "interior")
DEFAULTS_FILE = Path(__file__).parent / "config.json"


@dataclass
class MeshConfig:
    """Mesh sequence; ``sizes`` are side counts or interior counts per ``convention``."""
    sizes: List[int] = field(default_factory=list)  # empty -> problem's benchmark meshes
    convention: str = "auto"  # "auto", "sides" or "interior"


@dataclass
class SchemeConfig:
    """Numerical moment and auxiliary boundary condition."""
    gamma: float = 0.0
    sigma: float = 0.0
    moment_mode: str = "auto_Malpha"
    fixed_weight: Optional[List[List[float]]] = None
    aux_mode: str = "laplacian"
    aux_eta: float = 0.0
    unsafe: bool = False


@dataclass
class SolverConfig:
    """Iteration controls and the continuation schedule."""
    method: str = "newton"
    newton_tol: float = 1e-10
    newton_max_iter: int = 100
    damping: str = "backtracking"
    max_halvings: int = 30
    step_tol: float = 1e-12
    rho: Optional[float] = None  # None -> power-iteration estimate
    max_sweeps: int = 100000
    pseudo_tol: float = 1e-12
    divergence_window: int = 50
    schedule: List[Tuple[float, float]] = field(default_factory=lambda: [tuple(map(float, s)) for s in GAMMA_SCHEDULE])
    initial_guess: str = "previous_stage"
    linear_solver: str = "auto"


@dataclass
class ControlConfig:
    """HJB control sampling."""
    phi_count: int = 16
    rot_count: int = 32
    warm_start: bool = False
    warm_phi_count: int = 4
    warm_rot_count: int = 8


@dataclass
class OutputConfig:
    """Artifact settings."""
    directory: str = "results"
    write_solution: bool = True
    write_matrices: bool = False
    write_stage_table: bool = True


@dataclass
class RunConfig:
    """Main configuration class."""
    command: str = "verify"
    problem: str = "linear1"
    seed: int = 42
    workers: int = 1
    mesh: MeshConfig = field(default_factory=MeshConfig)
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    controls: ControlConfig = field(default_factory=ControlConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> RunConfig:
        """Create RunConfig from dictionary (camelCase keys)."""
        config = cls()
        _reject_unknown(data, _KNOWN_KEYS, "")
        for section, keys in _SECTION_KEYS.items():
            if section in data:
                _reject_unknown(data[section], keys, f"{section}.")

        config.command = data.get("command", config.command)
        config.problem = data.get("problem", config.problem)
        config.seed = data.get("seed", config.seed)
        config.workers = data.get("workers", config.workers)

        if "mesh" in data:
            mesh_data = data["mesh"]
            config.mesh.sizes = list(mesh_data.get("sizes", config.mesh.sizes))
            config.mesh.convention = mesh_data.get("convention", config.mesh.convention)
        # shorthand keys
        if "sides" in data:
            config.mesh.sizes, config.mesh.convention = list(data["sides"]), "sides"
        if "interior" in data:
            config.mesh.sizes, config.mesh.convention = list(data["interior"]), "interior"

        if "scheme" in data:
            scheme_data = data["scheme"]
            config.scheme.gamma = scheme_data.get("gamma", config.scheme.gamma)
            config.scheme.sigma = scheme_data.get("sigma", config.scheme.sigma)
            config.scheme.moment_mode = scheme_data.get("momentMode", config.scheme.moment_mode)
            config.scheme.fixed_weight = scheme_data.get("fixedWeight", config.scheme.fixed_weight)
            config.scheme.aux_mode = scheme_data.get("auxMode", config.scheme.aux_mode)
            config.scheme.aux_eta = scheme_data.get("auxEta", config.scheme.aux_eta)
            config.scheme.unsafe = scheme_data.get("unsafe", config.scheme.unsafe)
        if "gamma" in data:
            config.scheme.gamma = data["gamma"]
        if "sigma" in data:
            config.scheme.sigma = data["sigma"]

        if "solver" in data:
            solver_data = data["solver"]
            config.solver.method = solver_data.get("method", config.solver.method)
            config.solver.newton_tol = solver_data.get("newtonTol", config.solver.newton_tol)
            config.solver.newton_max_iter = solver_data.get("newtonMaxIter", config.solver.newton_max_iter)
            config.solver.damping = solver_data.get("damping", config.solver.damping)
            config.solver.max_halvings = solver_data.get("maxHalvings", config.solver.max_halvings)
            config.solver.step_tol = solver_data.get("stepTol", config.solver.step_tol)
            config.solver.rho = solver_data.get("rho", config.solver.rho)
            config.solver.max_sweeps = solver_data.get("maxSweeps", config.solver.max_sweeps)
            config.solver.pseudo_tol = solver_data.get("pseudoTol", config.solver.pseudo_tol)
            config.solver.divergence_window = solver_data.get("divergenceWindow", config.solver.divergence_window)
            config.solver.schedule = solver_data.get("schedule", config.solver.schedule)
            config.solver.initial_guess = solver_data.get("initialGuess", config.solver.initial_guess)
            config.solver.linear_solver = solver_data.get("linearSolver", config.solver.linear_solver)
        if "schedule" in data:
            config.solver.schedule = data["schedule"]
        config.solver.schedule = _schedule(config.solver.schedule)

        if "controls" in data:
            control_data = data["controls"]
            config.controls.phi_count = control_data.get("phiCount", config.controls.phi_count)
            config.controls.rot_count = control_data.get("rotCount", config.controls.rot_count)
            config.controls.warm_start = control_data.get("warmStart", config.controls.warm_start)
            config.controls.warm_phi_count = control_data.get("warmPhiCount", config.controls.warm_phi_count)
            config.controls.warm_rot_count = control_data.get("warmRotCount", config.controls.warm_rot_count)

        if "output" in data:
            output_data = data["output"]
            config.output.directory = output_data.get("directory", config.output.directory)
            config.output.write_solution = output_data.get("writeSolution", config.output.write_solution)
            config.output.write_matrices = output_data.get("writeMatrices", config.output.write_matrices)
            config.output.write_stage_table = output_data.get("writeStageTable", config.output.write_stage_table)

        return config

    def to_dict(self) -> Dict[str, Any]:
        """Convert RunConfig to dictionary."""
        return {
            "command": self.command,
            "problem": self.problem,
            "seed": self.seed,
            "workers": self.workers,
            "mesh": {
                "sizes": list(self.mesh.sizes),
                "convention": self.mesh.convention,
            },
            "scheme": {
                "gamma": self.scheme.gamma,
                "sigma": self.scheme.sigma,
                "momentMode": self.scheme.moment_mode,
                "fixedWeight": self.scheme.fixed_weight,
                "auxMode": self.scheme.aux_mode,
                "auxEta": self.scheme.aux_eta,
                "unsafe": self.scheme.unsafe,
            },
            "solver": {
                "method": self.solver.method,
                "newtonTol": self.solver.newton_tol,
                "newtonMaxIter": self.solver.newton_max_iter,
                "damping": self.solver.damping,
                "maxHalvings": self.solver.max_halvings,
                "stepTol": self.solver.step_tol,
                "rho": self.solver.rho,
                "maxSweeps": self.solver.max_sweeps,
                "pseudoTol": self.solver.pseudo_tol,
                "divergenceWindow": self.solver.divergence_window,
                "schedule": [list(s) for s in self.solver.schedule],
                "initialGuess": self.solver.initial_guess,
                "linearSolver": self.solver.linear_solver,
            },
            "controls": {
                "phiCount": self.controls.phi_count,
                "rotCount": self.controls.rot_count,
                "warmStart": self.controls.warm_start,
                "warmPhiCount": self.controls.warm_phi_count,
                "warmRotCount": self.controls.warm_rot_count,
            },
            "output": {
                "directory": self.output.directory,
                "writeSolution": self.output.write_solution,
                "writeMatrices": self.output.write_matrices,
                "writeStageTable": self.output.write_stage_table,
            },
        }

    def validate(self) -> RunConfig:
        """Raise :class:`ConfigError` naming every offending key."""
        problems: List[Tuple[str, str]] = []

        def need(ok: bool, key: str, why: str) -> None:
            if not ok:
                problems.append((key, why))

        need(self.command in COMMANDS, "command", f"must be one of {', '.join(COMMANDS)}")
        need(self.problem in PROBLEM_NAMES, "problem", f"unknown problem {self.problem!r}")
        need(_integer(self.seed), "seed", "must be an integer")
        need(_integer(self.workers) and self.workers >= 1, "workers", "must be an integer >= 1")

        need(self.mesh.convention in CONVENTIONS, "mesh.convention", f"must be one of {CONVENTIONS}")
        low = 1 if self.mesh.convention == "interior" else 3
        integral = all(_integer(n) for n in self.mesh.sizes)
        need(integral and all(n >= low for n in self.mesh.sizes), "mesh.sizes", f"entries must be integers >= {low}")
        need(not integral or all(b >= a for a, b in zip(self.mesh.sizes, self.mesh.sizes[1:])), "mesh.sizes", "must refine monotonically")

        s = self.scheme
        need(s.moment_mode in MOMENT_MODES, "scheme.momentMode", f"must be one of {MOMENT_MODES}")
        need(s.moment_mode != "fixed_weight" or s.fixed_weight is not None, "scheme.fixedWeight", "required by fixed_weight mode")
        need(s.aux_mode in AUX_MODES, "scheme.auxMode", f"must be one of {AUX_MODES}")
        need(_number(s.gamma), "scheme.gamma", "must be a number")
        need(_number(s.sigma), "scheme.sigma", "must be a number")
        need(_number(s.aux_eta), "scheme.auxEta", "must be a number")
        need(isinstance(s.unsafe, bool), "scheme.unsafe", "must be true or false")
        if s.unsafe is not True and _number(s.gamma) and _number(s.sigma):
            need(s.sigma >= 0, "scheme.sigma", "must be >= 0")
            need(s.gamma + s.sigma >= 0, "scheme.gamma", "gamma + sigma must be >= 0")
            bad = [k for k, (g, sg) in enumerate(self.solver.schedule) if sg < 0 or g + sg < 0]
            need(not bad, "solver.schedule", f"entries {bad} violate sigma >= 0, gamma + sigma >= 0")

        v = self.solver
        need(v.method in METHODS, "solver.method", f"must be one of {METHODS}")
        need(v.damping in DAMPING, "solver.damping", f"must be one of {DAMPING}")
        need(v.initial_guess in INITIAL_GUESSES, "solver.initialGuess", f"must be one of {INITIAL_GUESSES}")
        need(v.linear_solver in LINEAR_SOLVERS, "solver.linearSolver", f"must be one of {LINEAR_SOLVERS}")
        for key, value in (("newtonTol", v.newton_tol), ("stepTol", v.step_tol), ("pseudoTol", v.pseudo_tol)):
            need(_number(value) and value > 0, f"solver.{key}", "must be a number > 0")
        for key, value, low in (
            ("newtonMaxIter", v.newton_max_iter, 1),
            ("maxHalvings", v.max_halvings, 0),
            ("maxSweeps", v.max_sweeps, 1),
            ("divergenceWindow", v.divergence_window, 1),
        ):
            need(_integer(value) and value >= low, f"solver.{key}", f"must be an integer >= {low}")
        need(v.rho is None or (_number(v.rho) and v.rho >= 0), "solver.rho", "must be a number >= 0")
        need(len(v.schedule) >= 1, "solver.schedule", "needs at least one stage")

        c = self.controls
        for key, value in (
            ("phiCount", c.phi_count),
            ("rotCount", c.rot_count),
            ("warmPhiCount", c.warm_phi_count),
            ("warmRotCount", c.warm_rot_count),
        ):
            need(_integer(value) and value >= 1, f"controls.{key}", "must be an integer >= 1")

        if problems:
            for key, why in problems:
                logger.debug("config key %s: %s", key, why)
            raise ConfigError(
                "invalid configuration (" + "; ".join(f"{k} {w}" for k, w in problems) + ")",
                keys=sorted({k for k, _ in problems}),
            )
        return self


def _number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _integer(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


_KNOWN_KEYS = set(RunConfig().to_dict()) | {"sides", "interior", "gamma", "sigma", "schedule"}
_SECTION_KEYS = {k: set(v) for k, v in RunConfig().to_dict().items() if isinstance(v, dict)}


def _reject_unknown(data: Any, known: set, prefix: str) -> None:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object", keys=[prefix or "<root>"])
    unknown = sorted(f"{prefix}{k}" for k in data if k not in known)
    if unknown:
        raise ConfigError("unknown configuration keys", keys=unknown)


def _schedule(raw: Any) -> List[Tuple[float, float]]:
    try:
        return [(float(g), float(s)) for g, s in raw]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"schedule must be a list of [gamma, sigma] pairs ({exc})", keys=["solver.schedule"]) from exc


def _merge(base: Dict[str, Any], extra: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def parse_json(text: str, source: str = "<string>") -> Dict[str, Any]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse {source}: {exc.msg}", line=exc.lineno, column=exc.colno) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{source} must contain a JSON object", keys=["<root>"])
    return data


class ConfigManager:
    """Loads, validates and saves run configurations."""

    def __init__(self, defaults_path: Path = DEFAULTS_FILE):
        self.defaults_path = Path(defaults_path)
        self._defaults: Optional[Dict[str, Any]] = None

    def defaults(self) -> Dict[str, Any]:
        if self._defaults is None:
            if self.defaults_path.exists():
                self._defaults = parse_json(self.defaults_path.read_text(encoding="utf-8"), str(self.defaults_path))
            else:
                logger.warning("defaults file %s missing; using built-in defaults", self.defaults_path)
                self._defaults = RunConfig().to_dict()
        return self._defaults

    def load(self, path: Optional[Path | str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        """Defaults, then the file at ``path``, then ``overrides``."""
        data = self.defaults()
        if path is not None:
            path = Path(path)
            try:
                text = path.read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read {path}: {exc.strerror}", keys=["--config"]) from exc
            user = parse_json(text, str(path))
            _reject_unknown(user, _KNOWN_KEYS, "")
            data = _merge(data, _expand_shorthand(user))
        if overrides:
            data = _merge(data, _expand_shorthand(overrides))
        try:
            config = RunConfig.from_dict(data)
        except (TypeError, AttributeError) as exc:
            raise ConfigError(f"malformed configuration section ({exc})") from exc
        return config.validate()

    def save(self, config: RunConfig, path: Path | str) -> Path:
        from .utils.output_writer import atomic_write_text

        return atomic_write_text(Path(path), json.dumps(config.to_dict(), indent=2) + "\n")


def _expand_shorthand(data: Dict[str, Any]) -> Dict[str, Any]:
    """Move flat keys (``sides``, ``gamma``, ``schedule`` ...) into their sections."""
    out = dict(data)
    if "sides" in out:
        out["mesh"] = {**out.get("mesh", {}), "sizes": out.pop("sides"), "convention": "sides"}
    if "interior" in out:
        out["mesh"] = {**out.get("mesh", {}), "sizes": out.pop("interior"), "convention": "interior"}
    for key in ("gamma", "sigma"):
        if key in out:
            out["scheme"] = {**out.get("scheme", {}), key: out.pop(key)}
    if "schedule" in out:
        out["solver"] = {**out.get("solver", {}), "schedule": out.pop("schedule")}
    return out


# Global config manager instance
config_manager = ConfigManager()


def get_default_config() -> RunConfig:
    """Validated defaults."""
    return config_manager.load()


def parse_config(path: Optional[Path | str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    return config_manager.load(path, overrides)
