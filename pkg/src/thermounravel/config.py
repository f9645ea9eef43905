"""JSON run configuration.

A config is a single JSON object with the sections ``model``, ``constants``,
``env``, ``initial``, ``run`` and ``output``; every key is optional and falls
back to the defaults below.  Matrices are nested arrays of ``[re, im]`` pairs.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .density import DensityMatrix, PhysicalConstants, gibbs_state
from .errors import ConfigError
from .models import harmonic_oscillator, two_level
from .oracle import EQUILIBRIUM_TOL, EnvironmentSpec, ModelSpec
from .unravel import AlphaPolicy, Ensemble, UnravelConfig

OBSERVABLE_RE = re.compile(r"^(energy|purity|trace_raw|trace_distance_to_oracle|population_(\d+))$")
DEFAULT_OBSERVABLES = ["energy", "purity", "trace_raw", "trace_distance_to_oracle", "population_0", "population_1"]


def parse_complex_matrix(obj, name: str) -> np.ndarray:
    try:
        rows = [[_parse_complex(x) for x in row] for row in obj]
        M = np.array(rows, dtype=np.complex128)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: expected nested arrays of [re, im] pairs ({exc})") from None
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise ConfigError(f"{name}: expected a non-empty square matrix, got shape {M.shape}")
    return M


def parse_complex_vector(obj, name: str) -> np.ndarray:
    try:
        v = np.array([_parse_complex(x) for x in obj], dtype=np.complex128)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: expected an array of [re, im] pairs ({exc})") from None
    if v.ndim != 1 or v.size == 0:
        raise ConfigError(f"{name}: expected a non-empty vector")
    return v


def _parse_complex(x) -> complex:
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return complex(x)
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return complex(float(x[0]), float(x[1]))
    raise ValueError(f"bad complex entry {x!r}")


def complex_to_json(M) -> list:
    M = np.asarray(M, dtype=np.complex128)
    if M.ndim == 1:
        return [[float(z.real), float(z.imag)] for z in M]
    return [complex_to_json(row) for row in M]


@dataclass
class ModelConfig:
    name: str = "two-level"
    dim: int = 2
    omega: float = 1.0
    mass: float = 1.0
    H: list | None = None
    Q: list | None = None


@dataclass
class EnvConfig:
    c_hh: float = 0.25
    c_hs: float | None = None
    T_e: float | None = 1.0
    equilibrium: bool = True


@dataclass
class InitialConfig:
    kind: str = "pure"  # pure | gibbs | density
    level: int | None = 0
    amplitudes: list | None = None
    rho: list | None = None


@dataclass
class RunConfig:
    dt: float = 1e-3
    t_end: float = 2.0
    record_every: int = 100
    ensemble_size: int = 10000
    seed: int = 20240601
    alpha_policy: object = "exact"
    # floor for the mean-field density matrix of the jump process
    eps_floor: float | None = 1e-2
    degeneracy_tol: float = 1e-12
    workers: int = 1


@dataclass
class OutputConfig:
    path: str | None = None
    format: str = "csv"
    observables: list = field(default_factory=lambda: list(DEFAULT_OBSERVABLES))


@dataclass
class SimConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    constants: dict = field(default_factory=lambda: {"hbar": 1.0, "k_B": 1.0})
    env: EnvConfig = field(default_factory=EnvConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    run: RunConfig = field(default_factory=RunConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        self._normalize()

    # --- construction -----------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        sections = {"model": ModelConfig, "env": EnvConfig, "initial": InitialConfig, "run": RunConfig, "output": OutputConfig}
        unknown = set(d) - set(sections) - {"constants"}
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        kwargs = {}
        for key, typ in sections.items():
            sub = d.get(key, {})
            if not isinstance(sub, dict):
                raise ConfigError(f"section {key!r} must be an object")
            allowed = {f.name for f in fields(typ)}
            bad = set(sub) - allowed
            if bad:
                raise ConfigError(f"unknown key(s) in {key!r}: {sorted(bad)}")
            kwargs[key] = typ(**sub)
        consts = d.get("constants", {})
        if not isinstance(consts, dict) or set(consts) - {"hbar", "k_B"}:
            raise ConfigError("constants must be an object with keys hbar, k_B")
        kwargs["constants"] = {"hbar": float(consts.get("hbar", 1.0)), "k_B": float(consts.get("k_B", 1.0))}
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "SimConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "model": asdict(self.model),
            "constants": dict(self.constants),
            "env": asdict(self.env),
            "initial": asdict(self.initial),
            "run": asdict(self.run),
            "output": {**asdict(self.output), "observables": list(self.output.observables)},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def _normalize(self):
        """Validate and fill derived values so that the effective config is explicit."""
        try:
            PhysicalConstants(**self.constants)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        env = self.env
        if env.c_hh is None or float(env.c_hh) < 0:
            raise ConfigError("env.c_hh must be a non-negative number")
        env.c_hh = float(env.c_hh)
        if env.T_e is not None:
            env.T_e = float(env.T_e)
            if not env.T_e > 0:
                raise ConfigError("env.T_e must be positive")
        if env.equilibrium:
            if env.T_e is None:
                raise ConfigError("env.equilibrium requires T_e")
            if env.c_hs is None:
                env.c_hs = env.c_hh / env.T_e
            elif abs(env.T_e * float(env.c_hs) - env.c_hh) > EQUILIBRIUM_TOL * max(1.0, env.c_hh):
                raise ConfigError(f"equilibrium condition T_e*c_hs = c_hh violated ({env.T_e}*{env.c_hs} != {env.c_hh})")
        elif env.c_hs is None:
            raise ConfigError("env.c_hs is required unless env.equilibrium is set")
        env.c_hs = float(env.c_hs)

        run = self.run
        if not isinstance(run.dt, (int, float)) or not run.dt > 0:
            raise ConfigError("run.dt must be positive")
        if not isinstance(run.t_end, (int, float)) or run.t_end < 0:
            raise ConfigError("run.t_end must be non-negative")
        run.dt, run.t_end = float(run.dt), float(run.t_end)
        if not isinstance(run.seed, int) or isinstance(run.seed, bool) or not 0 <= run.seed < 2**64:
            raise ConfigError("run.seed must be a 64-bit unsigned integer")
        for key in ("record_every", "ensemble_size", "workers"):
            v = getattr(run, key)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"run.{key} must be a positive integer")
        if run.eps_floor is not None:
            if not run.eps_floor > 0:
                raise ConfigError("run.eps_floor must be positive or null")
            run.eps_floor = float(run.eps_floor)
        try:
            run.alpha_policy = AlphaPolicy.parse(run.alpha_policy).to_json()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

        if self.output.format not in ("csv", "json"):
            raise ConfigError("output.format must be 'csv' or 'json'")
        for name in self.output.observables:
            if not isinstance(name, str) or not OBSERVABLE_RE.match(name):
                raise ConfigError(f"unknown observable {name!r}")

        if self.initial.kind not in ("pure", "gibbs", "density"):
            raise ConfigError(f"initial.kind must be pure, gibbs or density, got {self.initial.kind!r}")
        # building the objects surfaces remaining errors at load time
        model = self.build_model()
        for name in self.output.observables:
            m = OBSERVABLE_RE.match(name)
            if m.group(2) is not None and int(m.group(2)) >= model.dim:
                raise ConfigError(f"observable {name} exceeds model dimension {model.dim}")
        self.build_env()
        self.build_initial_density(model)

    # --- builders -----------------------------------------------------------

    @property
    def consts(self) -> PhysicalConstants:
        return PhysicalConstants(**self.constants)

    def build_model(self) -> ModelSpec:
        mc = self.model
        try:
            if mc.name == "two-level":
                return two_level(mc.omega, self.consts)
            if mc.name == "oscillator":
                return harmonic_oscillator(int(mc.dim), mc.omega, mc.mass, self.consts)
            if mc.name == "custom":
                if mc.H is None or mc.Q is None:
                    raise ConfigError("custom model needs H and Q matrices")
                return ModelSpec(parse_complex_matrix(mc.H, "model.H"), parse_complex_matrix(mc.Q, "model.Q"))
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid model: {exc}") from None
        raise ConfigError(f"unknown model {mc.name!r} (expected oscillator, two-level or custom)")

    def build_env(self) -> EnvironmentSpec:
        e = self.env
        try:
            return EnvironmentSpec(e.c_hh, e.c_hs, e.T_e, self.consts, e.equilibrium)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def build_initial_density(self, model: ModelSpec) -> DensityMatrix:
        ic = self.initial
        try:
            if ic.kind == "pure":
                return DensityMatrix.pure(self._initial_vector(model))
            if ic.kind == "gibbs":
                if self.env.T_e is None:
                    raise ConfigError("initial.kind = gibbs requires env.T_e")
                return gibbs_state(model.H, self.env.T_e, self.consts)
            if ic.rho is None:
                raise ConfigError("initial.kind = density requires initial.rho")
            rho = parse_complex_matrix(ic.rho, "initial.rho")
            if rho.shape != model.H.shape:
                raise ConfigError("initial.rho dimension does not match the model")
            return DensityMatrix(rho)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"invalid initial state: {exc}") from None

    def _initial_vector(self, model: ModelSpec) -> np.ndarray:
        ic = self.initial
        if ic.amplitudes is not None:
            psi = parse_complex_vector(ic.amplitudes, "initial.amplitudes")
            if psi.size != model.dim:
                raise ConfigError("initial.amplitudes dimension does not match the model")
            if not np.linalg.norm(psi) > 0:
                raise ConfigError("initial.amplitudes is the zero vector")
            return psi
        level = 0 if ic.level is None else ic.level
        if not isinstance(level, int) or not 0 <= level < model.dim:
            raise ConfigError(f"initial.level must be an integer in [0, {model.dim})")
        psi = np.zeros(model.dim, dtype=np.complex128)
        psi[level] = 1.0
        return psi

    def build_ensemble(self, model: ModelSpec) -> Ensemble:
        n = self.run.ensemble_size
        if n < 2:
            raise ConfigError("run.ensemble_size must be >= 2 for unraveling runs")
        if self.initial.kind == "pure":
            return Ensemble.from_pure(self._initial_vector(model), n, self.run.seed)
        return Ensemble.from_density(self.build_initial_density(model), n, self.run.seed)

    def unravel_config(self) -> UnravelConfig:
        r = self.run
        return UnravelConfig(
            dt=r.dt,
            t_end=r.t_end,
            record_every=r.record_every,
            alpha_policy=AlphaPolicy.parse(r.alpha_policy),
            eps_floor=r.eps_floor,
            degeneracy_tol=r.degeneracy_tol,
            workers=r.workers,
        )
