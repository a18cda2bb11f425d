"""Run configuration: one YAML (or JSON) file drives every subcommand.

Example::

    seed: 7
    kernel: diff
    out: runs/demo
    sessions:                      # optional, defaults to morning + afternoon
      - {name: morning, open: "09:30", close: "11:30",
         knots: ["09:30", "10:00", "10:30", "11:30"]}
    fit: {restarts: 5, max_iterations: 2000, tolerance: 1.0e-9, method: l-bfgs-b}
    input: [data/]                 # fit / stats
    simulation:                    # simulate / recovery (instead of input)
      days: 21
      trials: 20                   # recovery only
      marks:
        buy: {kind: lognormal, mu: 3.4012, sigma: 0.5}
        sell: {kind: constant, value: 32}
      model:
        form: difference
        buy:
          knots: [0.8, 0.5, 0.5, 0.8]
          kernels:
            buy: {k: 0.1, b: 0.02, alpha: 10, beta: 40}
            sell: {k: 0.1, b: 0.02, alpha: 5, beta: 20}
        sell: {...}
    report: {kernel_volume: 30, curve_max_lag: 60, curve_points: 121}
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import yaml

from .baseline import DEFAULT_SESSIONS, BaselineSpline, SessionWindow
from .calibration import FitConfig
from .errors import ConfigError, HawkesFlowError
from .intensity import ModelPair, ModelTheta, Side
from .kernels import KernelForm, KernelParams
from .simulation import MarkDistribution

_TOP_KEYS = {"seed", "kernel", "out", "sessions", "fit", "input", "simulation", "report",
             "allow_nonstationary"}


@dataclass(frozen=True)
class ReportOptions:
    kernel_volume: float = 30.0
    curve_max_lag: float = 60.0
    curve_points: int = 121


@dataclass(frozen=True)
class ModelSpec:
    """Session-independent model: knot values by knot index, kernels by channel."""

    form: KernelForm
    knots: dict  # Side -> tuple of knot values
    kernels: dict  # (target Side, source Side) -> KernelParams

    def pair(self, window: SessionWindow) -> ModelPair:
        thetas = []
        for target in Side:
            values = self.knots[target]
            if len(values) != len(window.knot_times):
                raise ConfigError(f"{target.label} model has {len(values)} knot values but session "
                                  f"{window.name} has {len(window.knot_times)} knots")
            thetas.append(ModelTheta(target, (self.kernels[target, Side.BUY],
                                              self.kernels[target, Side.SELL]),
                                     BaselineSpline(window, tuple(values))))
        return ModelPair(*thetas)

    def to_dict(self) -> dict:
        return {"form": self.form.value,
                **{t.label: {"knots": list(self.knots[t]),
                             "kernels": {s.label: _kernel_dict(self.kernels[t, s]) for s in Side}}
                   for t in Side}}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        try:
            form = KernelForm.parse(d.get("form", "difference"))
            knots, kernels = {}, {}
            for t in Side:
                side = d[t.label]
                knots[t] = tuple(float(x) for x in side["knots"])
                for s in Side:
                    kernels[t, s] = KernelParams.from_dict({**side["kernels"][s.label],
                                                           "form": form.value})
        except KeyError as exc:
            raise ConfigError(f"model spec is missing {exc}") from None
        except HawkesFlowError as exc:
            raise ConfigError(f"model spec: {exc}") from None
        return cls(form, knots, kernels)


def _kernel_dict(p: KernelParams) -> dict:
    return {"k": p.k, "b": p.b, "alpha": p.alpha, "beta": p.beta}


@dataclass(frozen=True)
class SimulationSpec:
    model: ModelSpec
    marks: tuple = (MarkDistribution.constant(30.0), MarkDistribution.constant(32.0))
    days: int = 1
    trials: int = 20
    max_events: int = 1_000_000

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "days": self.days, "trials": self.trials,
                "max_events": self.max_events,
                "marks": {s.label: m.to_dict() for s, m in zip(Side, self.marks)}}


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    kernel: KernelForm = KernelForm.DIFFERENCE
    out: Optional[Path] = None
    sessions: tuple = DEFAULT_SESSIONS
    fit: FitConfig = field(default_factory=FitConfig)
    inputs: tuple = ()
    simulation: Optional[SimulationSpec] = None
    report: ReportOptions = field(default_factory=ReportOptions)
    allow_nonstationary: bool = False

    def fit_config(self, seed: int) -> FitConfig:
        return replace(self.fit, kernel_form=self.kernel, seed=int(seed))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed, "kernel": self.kernel.value,
            "sessions": [w.to_dict() for w in self.sessions],
            "fit": {k: v for k, v in self.fit.to_dict().items() if k not in ("seed", "kernel_form")},
            "input": [str(p) for p in self.inputs],
            "simulation": None if self.simulation is None else self.simulation.to_dict(),
            "report": {"kernel_volume": self.report.kernel_volume,
                       "curve_max_lag": self.report.curve_max_lag,
                       "curve_points": self.report.curve_points},
            "allow_nonstationary": self.allow_nonstationary,
        }


def _parse_marks(d) -> tuple:
    if d is None:
        return SimulationSpec.__dataclass_fields__["marks"].default
    try:
        return tuple(MarkDistribution.from_dict(d[s.label]) for s in Side)
    except (KeyError, HawkesFlowError) as exc:
        raise ConfigError(f"bad marks spec: {exc}") from None


def config_from_dict(d: dict, base_dir: Path = Path(".")) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(d) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    try:
        sessions = tuple(SessionWindow.from_dict(w) for w in d["sessions"]) \
            if d.get("sessions") else DEFAULT_SESSIONS
        fit_opts = dict(d.get("fit") or {})
        fit_cfg = FitConfig(**fit_opts)
        kernel = KernelForm.parse(d.get("kernel", "diff"))
        report = ReportOptions(**(d.get("report") or {}))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    except HawkesFlowError as exc:
        raise ConfigError(str(exc)) from None
    inputs = d.get("input") or ()
    if isinstance(inputs, (str, Path)):
        inputs = [inputs]
    inputs = tuple(Path(p) if Path(p).is_absolute() else base_dir / p for p in inputs)
    sim = None
    if d.get("simulation") is not None:
        s = d["simulation"]
        if "model" not in s:
            raise ConfigError("simulation spec needs a model")
        sim = SimulationSpec(ModelSpec.from_dict(s["model"]), _parse_marks(s.get("marks")),
                             int(s.get("days", 1)), int(s.get("trials", 20)),
                             int(s.get("max_events", 1_000_000)))
    if inputs and sim is not None:
        raise ConfigError("give either input paths or a simulation spec, not both")
    out = d.get("out")
    return RunConfig(seed=int(d.get("seed", 0)), kernel=kernel,
                     out=None if out is None else Path(out), sessions=sessions, fit=fit_cfg,
                     inputs=inputs, simulation=sim, report=report,
                     allow_nonstationary=bool(d.get("allow_nonstationary", False)))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data or {}, path.parent)
