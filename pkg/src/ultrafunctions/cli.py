"""Command-line driver for the level experiments.

Every run writes its data files plus ``manifest.json`` (resolved config,
package version, wall time) into the output directory.  Exit codes: 0 on
success, 1 when a numerical run did not converge (partial results are still
written), 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from ._fmt import dumps, num
from .basis import FOURIER_RING, HERMITE_LINE, SINE_BOX, BasisSpec, fourier_mode, make_quadrature
from .bubbling import MinimizeOptions, m_table
from .dirichlet import SourceSpec, green_1d, green_error, oscillatory_report, solve_net
from .levels import LambdaNet, LevelSchedule, classify, hyperfinite_sum, make_schedule
from .qm import commutator, commutator_defect, eigh, evolve, fidelity, hamiltonian, momentum_matrix, position_matrix
from .ultrafun import evaluate, unit

COMMANDS = ("net-demo", "dirichlet", "green", "oscillatory", "bubble", "qm-box", "qm-ring", "qm-commutator")
BASIS_NAMES = {"sine": SINE_BOX, "ring": FOURIER_RING, "hermite": HERMITE_LINE}
SOURCES = ("smooth", "dirac", "dirac_squared", "oscillatory")
BUBBLE_MAX_MODES = 8
DEFAULT_LEVELS = {
    "net-demo": "4:2:4",
    "dirichlet": "8:2:4",
    "green": "16:2:3",
    "oscillatory": "64:2:2",
    "bubble": "4,6,8",
}
THREADS_ENV = "ULTRAFUN_THREADS"


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    command: str
    levels: tuple[int, ...] = ()
    basis: str = "sine"
    dim: int = 1
    theta: int = 16
    oversample: float = 2.0
    source: str = "smooth"
    y: float = 0.5
    alpha: float = 1.0
    k: tuple[int, ...] = (4, 8, 16, 32)
    p: tuple[float, ...] = ()
    restarts: int = 3
    max_iters: int = 3000
    tol_grad: float = 1e-6
    mass: float = 1.0
    t_max: float | None = None
    n_times: int = 21
    tol: float = 1e-6
    seed: int = 0
    threads: int = 1
    out: str = "ultrafun-out"
    format: str = "csv"

    @property
    def schedule(self) -> LevelSchedule:
        return LevelSchedule(self.levels, f"{self.command} levels")


# ---------------------------------------------------------------- parsing

_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _parse_levels(text: str) -> tuple[int, ...]:
    text = str(text).strip()
    try:
        if ":" in text:
            base, growth, count = text.split(":")
            return make_schedule(int(base), float(growth), int(count)).dims
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError("levels", f"cannot parse {text!r} ({exc})") from None


def _number_list(name: str, text, cast) -> tuple:
    if isinstance(text, (list, tuple)):
        items = text
    else:
        items = [v for v in str(text).split(",") if v.strip()]
    try:
        return tuple(cast(v) for v in items)
    except (TypeError, ValueError):
        raise ConfigError(name, f"cannot parse {text!r}") from None


def _coerce(name: str, value):
    if name not in _FIELD_TYPES:
        raise ConfigError(name, "unknown key")
    if name == "levels":
        return _parse_levels(value) if not isinstance(value, (list, tuple)) else tuple(int(v) for v in value)
    if name == "k":
        return _number_list(name, value, int)
    if name == "p":
        return _number_list(name, value, float)
    kind = _FIELD_TYPES[name]
    try:
        if "int" in kind and "float" not in kind:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if "float" in kind:
            if value is None or str(value).lower() == "none":
                return None
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(name, f"expected a number, got {value!r}") from None
    return str(value)


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines (``#`` comments) or a JSON object."""
    stripped = text.strip()
    if not stripped:
        return {}
    if stripped.startswith("{"):
        try:
            data = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON ({exc.msg})") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "JSON config must be an object")
        return {str(k).replace("-", "_"): v for k, v in data.items()}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("config", f"line {lineno} is not key=value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ultrafun", description="Ultrafunction level experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    def common(p):
        p.add_argument("--config", default=S, help="key=value or JSON file; flags override it")
        p.add_argument("--levels", default=S, help="base:growth:count or comma list of modes per axis")
        p.add_argument("--oversample", default=S, help="quadrature oversampling factor")
        p.add_argument("--seed", default=S)
        p.add_argument("--threads", default=S, help=f"worker threads (fallback ${THREADS_ENV}, then CPU count)")
        p.add_argument("--out", default=S, help="output directory (files are never overwritten)")
        p.add_argument("--format", default=S, choices=("csv", "json"))
        p.add_argument("--tol", default=S, help="classification tolerance")
        return p

    common(sub.add_parser("net-demo", help="classify model nets (1/theta, theta, 3+1/theta, harmonic sum)"))
    p = common(sub.add_parser("dirichlet", help="solve -Laplace u = f across levels"))
    p.add_argument("--source", default=S, choices=SOURCES)
    p.add_argument("--y", default=S, help="Dirac point (all coordinates)")
    p.add_argument("--alpha", default=S, help="wavenumber of the oscillatory source")
    p.add_argument("--dim", default=S)
    p = common(sub.add_parser("green", help="Green function of -u'' against the closed form"))
    p.add_argument("--y", default=S)
    p = common(sub.add_parser("oscillatory", help="weak action and node size for sin(k pi x) sources"))
    p.add_argument("--k", default=S, help="comma list of wavenumbers")
    p = common(sub.add_parser("bubble", help="minimize the Dirichlet energy on the L^p sphere"))
    p.add_argument("--p", default=S, help="comma list of exponents")
    p.add_argument("--dim", default=S)
    p.add_argument("--restarts", default=S)
    p.add_argument("--max-iters", dest="max_iters", default=S)
    p.add_argument("--tol-grad", dest="tol_grad", default=S)
    for name, text in (("qm-box", "box"), ("qm-ring", "ring")):
        p = common(sub.add_parser(name, help=f"free particle on the {text}: spectrum and two-level evolution"))
        p.add_argument("--theta", default=S)
        p.add_argument("--mass", default=S)
        p.add_argument("--t-max", dest="t_max", default=S, help="end of the fidelity series (default one revival period)")
        p.add_argument("--n-times", dest="n_times", default=S)
    p = common(sub.add_parser("qm-commutator", help="<[P,Q] e_a, e_a> on eigenvectors of Q"))
    p.add_argument("--basis", default=S, choices=tuple(BASIS_NAMES))
    p.add_argument("--theta", default=S)
    return parser


def _default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError("threads", f"{THREADS_ENV}={env!r} is not an integer") from None
    return os.cpu_count() or 1


def parse_config(args: Sequence[str], config_text: str | None = None) -> ExperimentConfig:
    """Resolve defaults, then config-file values, then command-line flags.

    ``config_text`` overrides reading the ``--config`` file (for tests).
    Raises :class:`ConfigError` naming the first invalid field.
    """
    parser = build_parser()
    try:
        ns = vars(parser.parse_args(list(args)))
    except SystemExit as exc:
        raise ConfigError("arguments", "invalid command line") from exc
    command = ns.pop("command")
    path = ns.pop("config", None)
    if config_text is None and path is not None:
        try:
            config_text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path} ({exc.strerror})") from None

    values: dict = {}
    for key, value in parse_config_text(config_text or "").items():
        if key == "command":
            if value != command:
                raise ConfigError("command", f"config file is for {value!r}, not {command!r}")
            continue
        values[key] = _coerce(key, value)
    for key, value in ns.items():
        values[key] = _coerce(key, value)

    if "levels" not in values and command in DEFAULT_LEVELS:
        values["levels"] = _parse_levels(DEFAULT_LEVELS[command])
    if "threads" not in values:
        values["threads"] = _default_threads()
    if "format" not in values and command.startswith("qm"):
        values["format"] = "json"
    if "out" not in values:
        values["out"] = str(Path("ultrafun-out") / command)
    if command == "bubble" and "dim" not in values:
        values["dim"] = 3
    config = ExperimentConfig(command=command, **values)
    return validate(config)


def validate(c: ExperimentConfig) -> ExperimentConfig:
    """Check every parameter against the target module's preconditions."""
    if c.command not in COMMANDS:
        raise ConfigError("command", f"unknown command {c.command!r}")
    if c.threads < 1:
        raise ConfigError("threads", "must be >= 1")
    if c.oversample < 1:
        raise ConfigError("oversample", "must be >= 1")
    if c.tol <= 0:
        raise ConfigError("tol", "must be positive")
    if c.format not in ("csv", "json"):
        raise ConfigError("format", "must be csv or json")
    if c.command.startswith("qm"):
        if c.format != "json":
            raise ConfigError("format", "quantum commands write JSON only")
        if c.theta < 2:
            raise ConfigError("theta", "must be >= 2")
        if c.mass <= 0:
            raise ConfigError("mass", "must be positive")
        if c.n_times < 2:
            raise ConfigError("n_times", "must be >= 2")
        if c.t_max is not None and c.t_max <= 0:
            raise ConfigError("t_max", "must be positive")
        if c.basis not in BASIS_NAMES:
            raise ConfigError("basis", f"must be one of {sorted(BASIS_NAMES)}")
        return c

    levels = c.levels
    if c.command == "bubble":
        if not c.p:
            raise ConfigError("p", "bubble needs at least one exponent (--p)")
        if any(not p > 2 for p in c.p):
            raise ConfigError("p", "exponents must be > 2")
        if c.dim not in (1, 2, 3):
            raise ConfigError("dim", "must be 1, 2 or 3")
        if c.restarts < 1:
            raise ConfigError("restarts", "must be >= 1")
        if c.max_iters < 1:
            raise ConfigError("max_iters", "must be >= 1")
        if c.tol_grad <= 0:
            raise ConfigError("tol_grad", "must be positive")
        levels = tuple(sorted({min(t, BUBBLE_MAX_MODES) for t in levels}))
    try:
        LevelSchedule(levels)
    except ValueError as exc:
        raise ConfigError("levels", str(exc)) from None
    c = replace(c, levels=levels)

    if c.command == "dirichlet":
        if c.source not in SOURCES:
            raise ConfigError("source", f"must be one of {SOURCES}")
        if c.dim not in (1, 2, 3):
            raise ConfigError("dim", "must be 1, 2 or 3")
        if c.source.startswith("dirac") and not 0 < c.y < 1:
            raise ConfigError("y", "Dirac point must be inside (0, 1)")
        if c.source == "oscillatory" and c.alpha < 1:
            raise ConfigError("alpha", "must be >= 1")
        if max(levels) ** c.dim > 4096:
            raise ConfigError("levels", "level dimension above 4096 is beyond the direct solver")
    if c.command == "green" and not 0 < c.y < 1:
        raise ConfigError("y", "must be inside (0, 1)")
    if c.command == "oscillatory":
        if not c.k or any(k < 1 for k in c.k):
            raise ConfigError("k", "wavenumbers must be >= 1")
    return c


# ---------------------------------------------------------------- output


class RunOutput:
    """Write-once files inside one run directory."""

    def __init__(self, directory: str | Path):
        self.dir = Path(directory)
        self.files: list[str] = []

    def _target(self, name: str) -> Path:
        path = self.dir / name
        if path.exists():
            raise ConfigError("out", f"{path} already exists; output files are write-once")
        return path

    def claim(self, names: Sequence[str]):
        self.dir.mkdir(parents=True, exist_ok=True)
        for name in names:
            self._target(name)

    def text(self, name: str, content: str):
        path = self._target(name)
        path.write_text(content, encoding="utf-8", newline="\n")
        self.files.append(name)

    def table(self, name: str, header: Sequence[str], rows: Sequence[dict], fmt: str):
        if fmt == "json":
            self.text(f"{name}.json", dumps([{h: r[h] for h in header} for r in rows]) + "\n")
            return
        lines = [",".join(header)]
        for r in rows:
            lines.append(",".join(_cell(r[h]) for h in header))
        self.text(f"{name}.csv", "\n".join(lines) + "\n")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return num(v)


# ---------------------------------------------------------------- commands


def _net_demo(c: ExperimentConfig, out: RunOutput) -> int:
    s = c.schedule
    nets = {
        "inv_theta": LambdaNet.of_theta(s, lambda t: 1.0 / t),
        "theta": LambdaNet.of_theta(s, float),
        "three_plus_inv_theta": LambdaNet.of_theta(s, lambda t: 3.0 + 1.0 / t),
        "harmonic_sum": hyperfinite_sum(s, lambda t: (1.0 / n for n in range(1, t + 1))),
        "geometric_sum": hyperfinite_sum(s, lambda t: (0.5**n for n in range(1, t + 1))),
    }
    rows = []
    for name, net in nets.items():
        cls = classify(net, c.tol)
        for k, theta in enumerate(s.dims):
            rows.append(
                {"net": name, "level": k, "theta": theta, "value": float(net.at(k)),
                 "classification": cls.tag, "shadow": cls.shadow}
            )
    out.table("net_demo", ["net", "level", "theta", "value", "classification", "shadow"], rows, c.format)
    return 0


def _source(c: ExperimentConfig) -> SourceSpec:
    y = (c.y,) * c.dim
    if c.source == "smooth":
        return SourceSpec.smooth(lambda *x: np.prod([np.sin(np.pi * xi) for xi in x], axis=0))
    if c.source == "dirac":
        return SourceSpec.dirac(y)
    if c.source == "dirac_squared":
        return SourceSpec.dirac_squared(y)
    return SourceSpec.oscillatory(c.alpha, (1.0,) + (0.0,) * (c.dim - 1))


def _dirichlet(c: ExperimentConfig, out: RunOutput) -> int:
    net = solve_net(_source(c), c.schedule, c.oversample, c.dim, tol=c.tol, threads=c.threads)
    rows = [
        {"level": k, "theta": u.spec.dim, "residual": u.meta["residual"], "energy": u.meta["energy"],
         "classification": net.tag}
        for k, u in enumerate(net.levels)
    ]
    out.table("dirichlet", ["level", "theta", "residual", "energy", "classification"], rows, c.format)
    return 0


def _green(c: ExperimentConfig, out: RunOutput) -> int:
    net = solve_net(SourceSpec.dirac((c.y,)), c.schedule, c.oversample, 1, tol=c.tol, threads=c.threads)
    rows = [
        {"level": k, "theta": u.spec.dim, "max_error": green_error(u, c.y), "residual": u.meta["residual"]}
        for k, u in enumerate(net.levels)
    ]
    out.table("green", ["level", "theta", "max_error", "residual"], rows, c.format)
    x = np.linspace(0.0, 1.0, 201)
    grid = {"x": x, "green": green_1d(x, c.y)}
    for u in net.levels:
        grid[f"u_{u.spec.dim}"] = evaluate(u, x)
    grid_rows = [{h: grid[h][i] for h in grid} for i in range(len(x))]
    out.table("green_grid", list(grid), grid_rows, c.format)
    return 0


def _oscillatory(c: ExperimentConfig, out: RunOutput) -> int:
    report = oscillatory_report(c.k, lambda x: 1.0 + x, c.schedule, c.oversample)
    out.table("oscillatory", ["level", "theta", "k", "weak_action", "sup_node"], report.rows, c.format)
    return 0


def _bubble(c: ExperimentConfig, out: RunOutput) -> int:
    opts = MinimizeOptions(p=c.p[0], max_iters=c.max_iters, tol_grad=c.tol_grad, restarts=c.restarts, seed=c.seed)
    records = m_table(c.p, c.schedule, opts, space_dim=c.dim, threads=c.threads)
    header = ["N", "p", "theta", "m", "bx", "by", "bz", "conc_r02", "iters", "converged", "seed"]
    rows = [r.row() for r in records]
    for r in rows:
        r["converged"] = "true" if r["converged"] else "false"
    out.table("bubble", header, rows, c.format)
    return 0 if all(r.converged for r in records) else 1


def _two_level_series(c: ExperimentConfig, spec: BasisSpec, H):
    decomp = eigh(H)
    psi0 = (unit(spec, 1).coeffs + unit(spec, 2).coeffs) / math.sqrt(2.0)
    E = np.diag(H.entries).real
    period = 2.0 * math.pi / abs(E[1] - E[0])
    t_max = c.t_max if c.t_max is not None else period
    times = np.linspace(0.0, t_max, c.n_times)
    series = [fidelity(evolve(H, psi0, t, decomp), psi0) for t in times]
    return decomp, times, series, period


def _qm_free(c: ExperimentConfig, out: RunOutput, kind: str) -> int:
    spec = BasisSpec(kind, c.theta)
    H = hamiltonian(spec, make_quadrature(spec, c.oversample), c.mass)
    decomp, times, series, period = _two_level_series(c, spec, H)
    if kind == SINE_BOX:
        exact = np.array([(j * math.pi) ** 2 for j in range(1, c.theta + 1)]) / (2.0 * c.mass)
    else:
        exact = np.sort([(2.0 * math.pi * fourier_mode(j)) ** 2 for j in range(1, c.theta + 1)]) / (2.0 * c.mass)
    record = {
        "theta": c.theta,
        "eigenvalues": decomp.eigenvalues,
        "defects": np.abs(decomp.eigenvalues - exact),
        "fidelity_series": series,
        "times": times,
        "revival_period": period,
    }
    out.text(f"{c.command.replace('-', '_')}.json", dumps(record) + "\n")
    return 0


def _qm_commutator(c: ExperimentConfig, out: RunOutput) -> int:
    spec = BasisSpec(BASIS_NAMES[c.basis], c.theta)
    quad = make_quadrature(spec, c.oversample)
    P, Q = momentum_matrix(spec, quad), position_matrix(spec, quad)
    decomp = eigh(Q)
    defects = [commutator_defect(P, Q, decomp.vectors[:, a]) for a in range(len(decomp))]
    record = {
        "theta": c.theta,
        "basis": c.basis,
        "eigenvalues": decomp.eigenvalues,
        "defects": [abs(d) for d in defects],
        "trace": complex(np.trace(commutator(P, Q))),
        "fidelity_series": [],
    }
    out.text("qm_commutator.json", dumps(record) + "\n")
    return 0


_OUTPUTS = {
    "net-demo": ["net_demo"],
    "dirichlet": ["dirichlet"],
    "green": ["green", "green_grid"],
    "oscillatory": ["oscillatory"],
    "bubble": ["bubble"],
}


def run(config: ExperimentConfig) -> int:
    """Execute one experiment; returns the exit code."""
    out = RunOutput(config.out)
    if config.command.startswith("qm"):
        names = [config.command.replace("-", "_") + ".json"]
    else:
        names = [f"{n}.{config.format}" for n in _OUTPUTS[config.command]]
    out.claim(names + ["manifest.json"])
    start = time.perf_counter()
    handlers = {
        "net-demo": _net_demo,
        "dirichlet": _dirichlet,
        "green": _green,
        "oscillatory": _oscillatory,
        "bubble": _bubble,
        "qm-box": lambda c, o: _qm_free(c, o, SINE_BOX),
        "qm-ring": lambda c, o: _qm_free(c, o, FOURIER_RING),
        "qm-commutator": _qm_commutator,
    }
    code = handlers[config.command](config, out)
    manifest = {
        "version": __version__,
        "config": asdict(config),
        "exit_code": code,
        "files": out.files,
        "wall_time_s": time.perf_counter() - start,
    }
    out.text("manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return code


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        config = parse_config(argv)
        return run(config)
    except ConfigError as exc:
        print(f"ultrafun: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
