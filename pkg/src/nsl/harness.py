"""Experiment plumbing shared by the command line and the acceptance tests."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .characteristics import FlowConfig
from .classical import MEMORY_CAP, GridBudgetError, grid_interpolate, sl_run
from .driver import STREAM_PROBES, NslConfig, NslTrajectory, init_fit, run
from .metrics import ErrorReport, convergence_slope, relative_error, volume_negative
from .network import ActivationKind, forward
from .numerics import RngStream
from .sampling import AdaptiveConfig, uniform_sample
from .scenarios import SCENARIO_NAMES, Scenario, make_scenario, vlasov_reference

ERROR_COLUMNS = ("scenario", "d", "n_t", "n_x", "step", "t", "e_l2", "e_linf", "n_probe",
                 "peak_mem_hint")
DIAG_COLUMNS = ("step", "epoch", "loss", "wall_ms")
STEP_COLUMNS = ("step", "t", "final_loss", "epochs", "rel_change", "wall_ms")
CONVERGE_COLUMNS = ("n_t", "e_l2", "e_linf", "wall_ms")
COMPARE_COLUMNS = ("scenario", "seed", "d", "solver", "n_x", "dofs", "n_t", "e_l2", "e_linf",
                   "wall_ms", "status", "message")
VOLUME_COLUMNS = ("step", "t", "volume", "exact_volume", "rel_error", "n_probe")
MAX_PROBES = 200_000


class ConfigError(ValueError):
    """Invalid or incomplete run configuration (command-line exit status 2)."""


@dataclass
class RunConfig:
    scenario: Optional[str] = None
    dim: Optional[int] = None
    options: dict = field(default_factory=dict)
    seed: int = 0
    preset: str = "desk"
    n_t: Optional[int] = None
    sigma: Optional[float] = None
    init_epochs: Optional[int] = None
    iter_epochs: Optional[int] = None
    n_collocation: Optional[int] = None
    layers: Optional[tuple] = None
    activation: Optional[str] = None
    learning_rate: Optional[float] = None
    natural_gradient: Optional[bool] = None
    adaptive: Optional[bool] = None
    adaptive_sigmas: Optional[tuple] = None
    n_tau: Optional[int] = None
    n_probe: Optional[int] = None
    n_x: Optional[int] = None
    out: Optional[str] = None
    threads: Optional[int] = None

    # section layout of config files and manifests
    SECTIONS = {
        "scenario": ("name", "dim", "options", "sigma"),
        "nsl": ("preset", "seed", "n_t", "init_epochs", "iter_epochs", "n_collocation", "layers",
                "activation", "learning_rate", "natural_gradient", "adaptive", "adaptive_sigmas",
                "n_tau", "n_probe"),
        "classical": ("n_x",),
        "output": ("dir", "threads"),
    }
    _RENAME = {("scenario", "name"): "scenario", ("output", "dir"): "out"}

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]  # a manifest wraps the resolved config
        kw = {}
        for sec, body in data.items():
            if sec not in cls.SECTIONS:
                raise ConfigError(f"unknown config section [{sec}]")
            if not isinstance(body, dict):
                raise ConfigError(f"section [{sec}] must be a table")
            for key, val in body.items():
                if key not in cls.SECTIONS[sec]:
                    raise ConfigError(f"unknown key '{sec}.{key}'")
                kw[cls._RENAME.get((sec, key), key)] = val
        return cls(**kw).validated(require_scenario=False)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        try:
            if path.suffix == ".json":
                data = json.loads(raw)
            else:
                try:
                    import tomllib
                except ModuleNotFoundError:  # Python < 3.11
                    import tomli as tomllib
                data = tomllib.loads(raw.decode())
        except Exception as exc:  # parser errors differ between the two formats
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        return cls.from_mapping(data)

    def merged(self, **overrides) -> "RunConfig":
        kw = asdict(self)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig(**kw)

    def validated(self, require_scenario=True) -> "RunConfig":
        if self.scenario is None:
            if require_scenario:
                raise ConfigError("missing required key 'scenario.name' (or --scenario)")
        elif self.scenario not in SCENARIO_NAMES:
            raise ConfigError(f"unknown scenario '{self.scenario}'")
        if self.preset not in ("desk", "paper"):
            raise ConfigError("nsl.preset must be 'desk' or 'paper'")
        if not isinstance(self.options, dict):
            raise ConfigError("scenario.options must be a table")
        for name in ("dim", "n_t", "init_epochs", "iter_epochs", "n_collocation", "n_tau",
                     "n_probe", "n_x", "threads"):
            val = getattr(self, name)
            if val is not None and (not isinstance(val, (int, np.integer)) or isinstance(val, bool)):
                raise ConfigError(f"'{name}' must be an integer")
        positive = {"dim": 1, "init_epochs": 1, "iter_epochs": 1, "n_collocation": 4, "n_tau": 1,
                    "n_probe": 1, "n_x": 4, "threads": 1, "n_t": 0}
        for name, lo in positive.items():
            val = getattr(self, name)
            if val is not None and val < lo:
                raise ConfigError(f"'{name}' must be >= {lo}")
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("'seed' must be a non-negative integer")
        if self.sigma is not None and self.sigma < 0:
            raise ConfigError("'sigma' must be >= 0")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ConfigError("'learning_rate' must be positive")
        if self.layers is not None:
            layers = tuple(self.layers)
            if not layers or any(not isinstance(w, (int, np.integer)) or w < 1 for w in layers):
                raise ConfigError("'layers' must be a non-empty list of positive integers")
            self.layers = tuple(int(w) for w in layers)
        if self.activation is not None:
            try:
                ActivationKind.parse(self.activation)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        if self.adaptive_sigmas is not None:
            sig = tuple(float(s) for s in self.adaptive_sigmas)
            if len(sig) != 3 or any(s <= 0 for s in sig) or list(sig) != sorted(sig):
                raise ConfigError("'adaptive_sigmas' must be three increasing positive values")
            self.adaptive_sigmas = sig
        return self

    def sections(self) -> dict:
        """TOML-shaped view used for manifests (``None`` entries dropped)."""
        out = {}
        for sec, keys in self.SECTIONS.items():
            body = {}
            for key in keys:
                attr = self._RENAME.get((sec, key), key)
                val = getattr(self, attr)
                if val is None or (attr == "out"):
                    continue
                body[key] = list(val) if isinstance(val, tuple) else val
            if body:
                out[sec] = body
        return out

    def build_scenario(self) -> Scenario:
        opts = dict(self.options)
        if self.sigma is not None:
            if self.scenario in ("ad_periodic", "ad_gaussian", "heat_1d"):
                opts["sigma"] = float(self.sigma)
            elif self.sigma != 0:
                raise ConfigError(f"{self.scenario} is a pure advection problem; sigma must be 0")
        try:
            return make_scenario(self.scenario, self.dim, **opts)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def nsl_config(self, scenario: Scenario) -> NslConfig:
        cfg = scenario.paper_defaults if self.preset == "paper" else scenario.defaults
        init, it = cfg.init, cfg.iter
        if self.init_epochs is not None:
            init = init.with_(n_epochs=self.init_epochs)
        if self.iter_epochs is not None:
            it = it.with_(n_epochs=self.iter_epochs)
        for key, val in (("n_collocation", self.n_collocation), ("learning_rate", self.learning_rate),
                         ("natural_gradient", self.natural_gradient)):
            if val is not None:
                init, it = init.with_(**{key: val}), it.with_(**{key: val})
        kw = {"init": init, "iter": it}
        if self.n_t is not None:
            kw["n_steps"] = self.n_t
        if self.layers is not None:
            kw["layer_sizes"] = self.layers
        if self.activation is not None:
            kw["activation"] = self.activation
        if self.adaptive is not None:
            kw["adaptive"] = bool(self.adaptive)
        if self.adaptive_sigmas is not None:
            kw["adaptive_cfg"] = AdaptiveConfig(self.adaptive_sigmas)
        if self.n_tau is not None:
            kw["flow"] = FlowConfig(self.n_tau)
        return cfg.with_(**kw)


def probe_count(cfg: NslConfig, n_probe=None) -> int:
    if n_probe is not None:
        return int(n_probe)
    # about ten times the training points, capped for desk runs
    return int(min(10 * cfg.iter.n_collocation, MAX_PROBES))


class _VlasovExact:
    """Exact-solution stand-in backed by the grid reference."""

    def __init__(self, times, resolution=256, steps_per_unit=200):
        self.snapshots = vlasov_reference(resolution, int(round(4.5 * steps_per_unit)), 4.5, times)

    def __call__(self, t, x, mu):
        key = min(self.snapshots, key=lambda s: abs(s - t))
        return grid_interpolate(self.snapshots[key], x)


def exact_for(scenario: Scenario, times):
    """Exact solution callable and the subset of ``times`` where it is known."""
    if scenario.name == "vlasov_1d1v":
        ok = [t for t in times if any(np.isclose(t, s) for s in (0.0, 1.5, 3.0, 4.5))]
        if not ok:
            return None, []
        return _VlasovExact(tuple(t for t in ok if t > 0) or (1.5,)), ok
    if scenario.exact is None:
        return None, []
    return scenario.exact, [t for t in times if scenario.has_exact(t)]


def trajectory_errors(scenario: Scenario, traj: NslTrajectory, n_probe, rng: RngStream):
    """``[(step, t, ErrorReport)]`` at every trajectory time where the exact solution is known."""
    exact, ok = exact_for(scenario, traj.times)
    if exact is None:
        return []
    probes = uniform_sample(scenario.domain, scenario.pspace, n_probe, rng.spawn(STREAM_PROBES))
    rows = []
    for step, (t, theta) in enumerate(zip(traj.times, traj.params)):
        if not any(t == s for s in ok):
            continue
        u = forward(traj.spec, theta, probes.inputs)
        ex = exact(t, probes.points, probes.params)
        rows.append((step, t, relative_error(u, ex, norm=scenario.error_norm)))
    return rows


def level_set_volumes(scenario: Scenario, traj: NslTrajectory, n_probe, rng: RngStream):
    """Volume of ``{u < 0}`` at t = 0 and the final time, against the exact volume."""
    r = 0.15
    analytic = np.pi * r ** 2 if scenario.dim == 2 else 4.0 / 3.0 * np.pi * r ** 3
    rows = []
    for step in sorted({0, len(traj.times) - 1}):
        th = traj.params[step]
        vol = volume_negative(lambda x: forward(traj.spec, th, x), scenario.domain, n_probe,
                              rng.spawn(STREAM_PROBES + 100))
        rows.append((step, traj.times[step], vol, analytic, abs(vol - analytic) / analytic, n_probe))
    return rows


def write_csv(path, columns, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def jacobian_bytes(cfg: NslConfig, spec) -> int:
    return int(8 * cfg.iter.n_collocation * spec.dof_count)


@dataclass
class RunResult:
    scenario: Scenario
    config: NslConfig
    trajectory: NslTrajectory
    errors: list
    volumes: list
    wall_ms: float


def execute(rc: RunConfig, checkpoint_dir=None) -> RunResult:
    """Run NSL for a validated config and evaluate the errors."""
    sc = rc.build_scenario()
    cfg = rc.nsl_config(sc)
    rng = RngStream(int(rc.seed))
    t0 = time.perf_counter()
    traj = run(sc, cfg, rng, checkpoint_dir=checkpoint_dir)
    wall = 1e3 * (time.perf_counter() - t0)
    n_probe = probe_count(cfg, rc.n_probe)
    errs = trajectory_errors(sc, traj, n_probe, rng)
    vols = []
    if sc.name.startswith("levelset"):
        vols = level_set_volumes(sc, traj, max(n_probe, 10 ** 6), rng)
    return RunResult(sc, cfg, traj, errs, vols, wall)


def write_run(result: RunResult, rc: RunConfig, out: Path, argv=None):
    sc, cfg, traj = result.scenario, result.config, result.trajectory
    mem = jacobian_bytes(cfg, traj.spec)
    rows = [(sc.name, sc.dim, cfg.n_steps, None, step, t, rep.e_l2, rep.e_linf, rep.n_probe, mem)
            for step, t, rep in result.errors]
    write_csv(out / "errors.csv", ERROR_COLUMNS, rows)
    drows, srows = [], []
    for step, (t, dg) in enumerate(zip(traj.times, traj.diagnostics)):
        for e, (loss, ms) in enumerate(zip(dg.losses, dg.epoch_ms)):
            drows.append((step, e + 1, loss, round(ms, 3)))
        srows.append((step, t, dg.final_loss, dg.epochs, dg.rel_change, round(dg.wall_ms, 3)))
    write_csv(out / "diagnostics.csv", DIAG_COLUMNS, drows)
    write_csv(out / "steps.csv", STEP_COLUMNS, srows)
    if result.volumes:
        write_csv(out / "volumes.csv", VOLUME_COLUMNS, result.volumes)
    write_manifest(out / "manifest.json", rc, sc, argv, extra={
        "complete": traj.complete, "error": traj.error, "dof_count": traj.spec.dof_count,
        "resolved": describe_config(cfg)})
    write_plot_stub(out / "plot_errors.py", "errors.csv", "t", "e_l2")


def describe_config(cfg: NslConfig) -> dict:
    def fc(f):
        return {k.name: getattr(f, k.name) for k in fields(f)}
    return {"final_time": cfg.final_time, "n_steps": cfg.n_steps, "init": fc(cfg.init),
            "iter": fc(cfg.iter), "layer_sizes": list(cfg.layer_sizes),
            "activation": cfg.activation.value, "n_tau": cfg.flow.n_tau, "sigma": cfg.sigma,
            "adaptive": cfg.adaptive, "adaptive_sigmas": list(cfg.adaptive_cfg.sigmas)}


def write_manifest(path, rc: RunConfig, sc: Optional[Scenario], argv=None, extra=None):
    data = {"config": rc.sections(), "seed": int(rc.seed), "version": __version__,
            "scenario_hash": sc.content_hash() if sc is not None else None,
            "command": list(argv) if argv else None}
    if extra:
        data.update(extra)
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, tuple):
        return list(o)
    return str(o)


def write_plot_stub(path, csv_name, xcol, ycol, logx=False):
    Path(path).write_text(f'''"""Plot {ycol} against {xcol} from {csv_name} (needs matplotlib)."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
with open(here / "{csv_name}") as fh:
    rows = list(csv.DictReader(fh))
x = [float(r["{xcol}"]) for r in rows]
y = [float(r["{ycol}"]) for r in rows]
plt.{"loglog" if logx else "semilogy"}(x, y, "o-")
plt.xlabel("{xcol}")
plt.ylabel("{ycol}")
plt.grid(True, which="both", alpha=0.3)
out = here / "{Path(csv_name).stem}.png"
plt.savefig(out, dpi=120)
print(out, file=sys.stderr)
''')


def _converge_grid(sc, n_ts, n_x):
    rows = []
    for n in n_ts:
        try:
            _, rep = sl_run(sc, n_x, n, MEMORY_CAP)
        except (ValueError, GridBudgetError) as exc:
            raise ConfigError(str(exc)) from exc
        rows.append((n, rep.e_l2, rep.e_linf, round(rep.wall_ms, 3)))
    return rows


def _converge_nsl(sc, rc, n_ts):
    base = rc.nsl_config(sc)
    rng = RngStream(int(rc.seed))
    theta0, d0 = init_fit(sc, base, rng)
    n_probe = probe_count(base, rc.n_probe)
    rows = []
    for n in n_ts:
        t0 = time.perf_counter()
        traj = run(sc, base.with_(n_steps=n), rng, theta0=theta0, init_diag=d0)
        wall = 1e3 * (time.perf_counter() - t0)
        if not traj.complete:
            raise RuntimeError(traj.error)
        errs = trajectory_errors(sc, traj, n_probe, rng)
        if not errs or errs[-1][0] != n:
            raise RuntimeError(f"{sc.name} has no exact solution at the final time")
        rep = errs[-1][2]
        rows.append((n, rep.e_l2, rep.e_linf, round(wall, 3)))
    return rows


def converge(rc: RunConfig, n_ts, out: Optional[Path] = None, solver="nsl"):
    """Run one scenario for several step counts sharing the initial fit.

    With ``solver="classical"`` the grid scheme is used instead (``rc.n_x``
    points per axis).  Returns ``(rows, slope)`` with rows
    ``(n_t, e_l2, e_linf, wall_ms)``.
    """
    n_ts = [int(n) for n in n_ts]
    if len(n_ts) < 3:
        raise ConfigError("need at least three n_t values")
    if len(set(n_ts)) != len(n_ts):
        raise ConfigError(f"duplicate n_t values in {n_ts}")
    if any(n < 1 for n in n_ts):
        raise ConfigError("n_t values must be >= 1")
    if solver not in ("nsl", "classical"):
        raise ConfigError(f"unknown solver {solver!r}")
    sc = rc.build_scenario()
    if solver == "classical":
        rows = _converge_grid(sc, n_ts, int(rc.n_x or 512))
    else:
        rows = _converge_nsl(sc, rc, n_ts)
    slope = convergence_slope([(r[0], r[1]) for r in rows])
    if out is not None:
        write_csv(out / "converge.csv", CONVERGE_COLUMNS, rows)
        (out / "slope.json").write_text(json.dumps({"slope_e_l2": slope}) + "\n")
        write_manifest(out / "manifest.json", rc, sc, extra={"n_t_values": n_ts, "solver": solver})
        write_plot_stub(out / "plot_converge.py", "converge.csv", "n_t", "e_l2", logx=True)
    return rows, slope


def compare(rc: RunConfig, dims, n_xs, out: Optional[Path] = None, run_nsl=True):
    """Classical and neural solvers on the same scenario for each dimension."""
    dims = [int(d) for d in dims]
    n_xs = [int(n) for n in n_xs]
    if len(n_xs) == 1:
        n_xs = n_xs * len(dims)
    if len(n_xs) != len(dims):
        raise ConfigError("give one n_x per dimension (or a single value)")
    rows = []
    for d, n_x in zip(dims, n_xs):
        sub = rc.merged(dim=d)
        try:
            sc = sub.build_scenario()
            cfg = sub.nsl_config(sc)
        except ConfigError as exc:
            rows.append((rc.scenario, rc.seed, d, "classical", n_x, None, None, None, None, None,
                         "error", str(exc)))
            continue
        n_t = cfg.n_steps
        try:
            _, rep = sl_run(sc, n_x, n_t, MEMORY_CAP)
            rows.append((sc.name, rc.seed, d, "classical", n_x, n_x ** d, n_t, rep.e_l2,
                         rep.e_linf, round(rep.wall_ms, 3), "ok", ""))
        except (MemoryError, ValueError, FloatingPointError) as exc:
            rows.append((sc.name, rc.seed, d, "classical", n_x, n_x ** d, n_t, None, None, None,
                         "error", str(exc)))
        if not run_nsl:
            continue
        try:
            res = execute(sub)
            if not res.trajectory.complete:
                raise RuntimeError(res.trajectory.error)
            rep = res.errors[-1][2]
            rows.append((sc.name, rc.seed, d, "nsl", None, res.trajectory.spec.dof_count, n_t,
                         rep.e_l2, rep.e_linf, round(res.wall_ms, 3), "ok", ""))
        except Exception as exc:  # record the failure and move on to the next dimension
            rows.append((sc.name, rc.seed, d, "nsl", None, None, n_t, None, None, None, "error",
                         f"{type(exc).__name__}: {exc}"))
    if out is not None:
        write_csv(out / "compare.csv", COMPARE_COLUMNS, rows)
        write_manifest(out / "manifest.json", rc, None, extra={"dims": dims, "n_x": n_xs})
    return rows
