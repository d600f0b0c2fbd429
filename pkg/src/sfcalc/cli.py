"""Batch front end: ``sfcalc {validate,spectrum,fracpow,heat} --config run.ini``.

Exit codes::

    0  success
    2  validate: coefficients fail both cases (or are not positive)
    3  malformed config or command line
    4  spectrum: solver breakdown
    5  fracpow: a battery row failed, or a negative power of a non-injective operator
    6  heat: lambda + A is singular
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .calculus import ContourSpec, frac_powers
from .clifford import Paravector, e_unit
from .errors import (
    CaseIFailed,
    NonPositiveCoefficient,
    NotConverged,
    NotInjective,
    SingularAtS,
    SingularShift,
)
from .gradient import (
    CoefficientField,
    GridSpec,
    build_gradient,
    build_gradient_squared,
    resolvent_bound,
    validate_assumptions,
)
from .heat import evolve, fft_oracle, spectral_solve
from .io import RunManifest, write_csv, write_kv_csv, write_operator
from .operators import RealRep, left_scalar_operator, s_spectrum_scan

log = logging.getLogger("sfcalc")

EXIT_OK, EXIT_VALIDATE, EXIT_CONFIG, EXIT_SPECTRUM, EXIT_FRACPOW, EXIT_SINGULAR = 0, 2, 3, 4, 5, 6
COMMANDS = ("validate", "spectrum", "fracpow", "heat")


class ConfigError(Exception):
    pass


# ---- config schema -------------------------------------------------------------

def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(";", ",").split(",") if x.strip())


def _pairs(text: str) -> tuple[tuple[float, float], ...]:
    out = []
    for item in text.replace(";", ",").split(","):
        if item.strip():
            a, b = item.split(":")
            out.append((float(a), float(b)))
    return tuple(out)


def _choice(*options):
    def parse(text: str) -> str:
        t = text.strip()
        if t not in options:
            raise ValueError(f"{t!r} not one of {', '.join(options)}")
        return t
    return parse


# section -> key -> (parser, default); a default of None means "unset"
SCHEMA: dict[str, dict[str, tuple]] = {
    "algebra": {"n": (int, 3)},
    "grid": {"m": (int, 8), "L": (float, None)},
    "coefficients": {
        "kind": (_choice("formula", "csv"), "formula"),
        "name": (str, "constant"),
        "path": (str, None),
        "structure": (_choice("constant", "separable", "general"), None),
        "value": (float, None),
        "base": (float, None),
        "amplitude": (float, None),
        "wavenumber": (int, None),
        "phase": (float, None),
    },
    "calculus": {
        "phi": (float, float(np.pi / 4)),
        "eps": (float, None),
        "R": (float, None),
        "nodes": (int, 32),
        "tol_quad": (float, 1e-9),
        "tol_spec": (float, 1e-8),
        "max_doublings": (int, 6),
        "rule": (_choice("trapezoid", "gauss-legendre"), "trapezoid"),
    },
    "task": {
        "alpha": (float, 0.5),
        "lambda": (float, 1.0),
        "off_kernel": (_bool, False),
        "trials": (int, 8),
        "tol_battery": (float, 1e-6),
        "materialize": (_bool, True),
        "operator": (_choice("gradient", "gradient_squared", "scalar", "e1"), "gradient"),
        "scalar": (float, 1.0),
        "window": (_floats, None),
        "resolution": (_ints, (41, 11)),
        "s_list": (_pairs, ()),
        "mode": (_choice("evolve", "solve"), "evolve"),
        "scheme": (_choice("implicit-euler", "exact-fft"), "implicit-euler"),
        "route": (_choice("clifford", "scalar"), "clifford"),
        "dt": (float, 0.01),
        "steps": (int, 10),
        "initial": (_choice("mode", "random", "zero"), "mode"),
        "wave": (_ints, None),
        "snapshot_every": (int, 0),
    },
    "output": {"dir": (str, "out")},
    "run": {"seed": (int, 0), "threads": (int, 1)},
}

FORMULA_PARAMS = {
    "constant": ("value",),
    "sinusoid": ("base", "amplitude", "wavenumber", "phase"),
    "plane_wave": ("base", "amplitude", "wavenumber"),
}


@dataclass
class RunConfig:
    values: dict[str, dict[str, object]]
    source: Path | None

    def __getitem__(self, key: str):
        section, name = key.split(".")
        return self.values[section][name]

    def set(self, key: str, value) -> None:
        section, name = key.split(".")
        self.values[section][name] = value

    def echo(self) -> str:
        """Resolved config as INI text; the output directory is left out so
        that runs into different directories share one config hash."""
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            for key in keys:
                if (section, key) == ("output", "dir"):
                    continue
                lines.append(f"{key} = {_render(self.values[section][key])}")
            lines.append("")
        return "\n".join(lines)

    def digest(self) -> str:
        return hashlib.sha256(self.echo().encode()).hexdigest()


def _render(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return ", ".join(f"{a!r}:{b!r}" for a, b in v)
        return ", ".join(_render(a) for a in v)
    return str(v)


def parse_config(text: str, source: Path | None = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, strict=True, empty_lines_in_values=False)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    unknown = [s for s in cp.sections() if s not in SCHEMA]
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    values: dict[str, dict[str, object]] = {}
    for section, keys in SCHEMA.items():
        values[section] = {k: d for k, (_, d) in keys.items()}
        if not cp.has_section(section):
            continue
        for key, raw in cp.items(section):
            if key not in keys:
                raise ConfigError(f"unknown key {section}.{key}")
            parser = keys[key][0]
            raw = raw.strip()
            if raw == "":
                continue
            try:
                values[section][key] = parser(raw)
            except ValueError as exc:
                raise ConfigError(f"{section}.{key}: {exc}") from None
    cfg = RunConfig(values, source)
    _check_config(cfg)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path)


def _check_config(cfg: RunConfig) -> None:
    def need(cond: bool, msg: str):
        if not cond:
            raise ConfigError(msg)

    n = cfg["algebra.n"]
    need(1 <= n <= 6, "algebra.n must lie in 1..6")
    need(cfg["grid.m"] >= 4 and cfg["grid.m"] % 2 == 0, "grid.m must be even and >= 4")
    need(cfg["grid.L"] is None or cfg["grid.L"] > 0, "grid.L must be positive")
    kind = cfg["coefficients.kind"]
    if kind == "csv":
        need(cfg["coefficients.path"] is not None, "coefficients.path required for kind = csv")
    else:
        name = cfg["coefficients.name"]
        need(name in FORMULA_PARAMS, f"unknown formula {name!r}")
        for p in ("value", "base", "amplitude", "wavenumber", "phase"):
            if cfg[f"coefficients.{p}"] is not None:
                need(p in FORMULA_PARAMS[name], f"coefficients.{p} does not apply to {name}")
    need(0 < cfg["calculus.phi"] < np.pi / 2, "calculus.phi must lie in (0, pi/2)")
    need(cfg["calculus.nodes"] >= 2, "calculus.nodes must be >= 2")
    need(cfg["calculus.tol_quad"] > 0 and cfg["calculus.tol_spec"] > 0, "tolerances must be positive")
    need(cfg["task.trials"] >= 1, "task.trials must be >= 1")
    need(cfg["task.dt"] > 0 and cfg["task.steps"] >= 0, "need task.dt > 0 and task.steps >= 0")
    need(cfg["task.snapshot_every"] >= 0, "task.snapshot_every must be >= 0")
    w = cfg["task.window"]
    need(w is None or len(w) == 4, "task.window takes four numbers s0_min, s0_max, s1_min, s1_max")
    need(len(cfg["task.resolution"]) == 2 and min(cfg["task.resolution"]) >= 1,
         "task.resolution takes two positive integers")
    wave = cfg["task.wave"]
    need(wave is None or len(wave) == n, "task.wave needs one integer per axis")
    need(cfg["run.threads"] >= 1, "run.threads must be >= 1")


# ---- shared builders ------------------------------------------------------------

def build_grid(cfg: RunConfig) -> GridSpec:
    return GridSpec(cfg["algebra.n"], cfg["grid.m"], cfg["grid.L"])


def build_field(cfg: RunConfig, grid: GridSpec) -> CoefficientField:
    if cfg["coefficients.kind"] == "csv":
        path = Path(cfg["coefficients.path"])
        if not path.is_absolute() and cfg.source is not None:
            path = cfg.source.parent / path
        return CoefficientField.from_csv(path, grid, cfg["coefficients.structure"])
    name = cfg["coefficients.name"]
    params = {p: cfg[f"coefficients.{p}"] for p in FORMULA_PARAMS[name]
              if cfg[f"coefficients.{p}"] is not None}
    return CoefficientField.from_formula(name, grid, **params)


def build_contour(cfg: RunConfig) -> ContourSpec:
    return ContourSpec(phi=cfg["calculus.phi"], eps=cfg["calculus.eps"], R=cfg["calculus.R"],
                       nodes_per_ray=cfg["calculus.nodes"], tol_quad=cfg["calculus.tol_quad"],
                       max_doublings=cfg["calculus.max_doublings"], rule=cfg["calculus.rule"],
                       threads=cfg["run.threads"])


def initial_field(cfg: RunConfig, grid: GridSpec) -> np.ndarray:
    kind = cfg["task.initial"]
    if kind == "zero":
        return np.zeros(grid.N)
    if kind == "random":
        return np.random.default_rng(cfg["run.seed"]).standard_normal(grid.N)
    wave = cfg["task.wave"] or (1,) + (0,) * (grid.n - 1)
    x = grid.coords()
    return np.cos(2.0 * np.pi * np.tensordot(np.array(wave, dtype=float), x, axes=1) / grid.L)


# ---- commands --------------------------------------------------------------------

class Run:
    def __init__(self, cfg: RunConfig, out: Path, command: str):
        self.cfg = cfg
        self.out = out
        self.manifest = RunManifest(command, cfg.digest(), __version__)
        self.t0 = time.perf_counter()
        out.mkdir(parents=True, exist_ok=True)
        echo = out / "config.resolved.ini"
        echo.write_text(cfg.echo())
        self.manifest.add(echo)

    def csv(self, name: str, header, rows) -> Path:
        p = write_csv(self.out / name, header, rows)
        self.manifest.add(p)
        return p

    def kv(self, name: str, items) -> Path:
        p = write_kv_csv(self.out / name, items)
        self.manifest.add(p)
        return p

    def operator(self, name: str, matrix, n: int, N: int, meta: dict) -> Path:
        p = write_operator(self.out / name, matrix, n, N, meta)
        self.manifest.add(p)
        self.manifest.add(p.with_name(p.name + ".meta.csv"))
        return p

    def finish(self, code: int) -> int:
        self.manifest.wall_time = time.perf_counter() - self.t0
        self.manifest.write(self.out)
        return code


def cmd_validate(run: Run) -> int:
    cfg = run.cfg
    grid = build_grid(cfg)
    fld = build_field(cfg, grid)
    try:
        b = validate_assumptions(fld, raise_on_failure=False)
    except NonPositiveCoefficient as exc:
        run.kv("bounds.csv", [("status", "fail"), ("error", "NonPositiveCoefficient"),
                              ("message", str(exc))])
        log.error("%s", exc)
        return EXIT_VALIDATE
    rows = [("status", "ok" if b.case != "neither" else "fail")] + b.rows()
    for s0, s1 in cfg["task.s_list"]:
        s = Paravector(s0, np.eye(grid.n)[0] * s1)
        inside = s.abs() > b.K_a * abs(s0)
        rows.append((f"resolvent_bound[{s0!r}:{s1!r}]",
                     resolvent_bound(s, b, grid.n) if inside else "outside"))
    run.kv("bounds.csv", rows)
    if b.case == "neither":
        log.error("%s", CaseIFailed("coefficients satisfy neither case", b.margin_case1))
        return EXIT_VALIDATE
    return EXIT_OK


def _spectrum_operator(cfg: RunConfig) -> RealRep:
    grid = build_grid(cfg)
    op = cfg["task.operator"]
    n = grid.n
    if op == "scalar":
        return RealRep(cfg["task.scalar"] * np.eye(grid.N << n), n, grid.N)
    if op == "e1":
        return RealRep(left_scalar_operator(n, grid.N, e_unit(n, 1)), n, grid.N)
    fld = build_field(cfg, grid)
    if op == "gradient_squared":
        return build_gradient_squared(fld)
    return build_gradient(fld).real_representation()


def cmd_spectrum(run: Run) -> int:
    cfg = run.cfg
    T = _spectrum_operator(cfg)
    with np.errstate(over="ignore", invalid="ignore"):
        scale = np.square(np.float64(T.norm()))
    if not np.isfinite(scale):
        # Q_s[T] = T^2 - 2 s0 T + |s|^2 would overflow at every sample
        log.error("spectrum scan broke down: |T|^2 is not representable")
        return EXIT_SPECTRUM
    try:
        res = s_spectrum_scan(T, cfg["task.window"], tuple(cfg["task.resolution"]),
                              tol_spec=cfg["calculus.tol_spec"])
    except (SingularAtS, NotConverged, np.linalg.LinAlgError, RuntimeError, ArithmeticError,
            ValueError) as exc:
        log.error("spectrum scan broke down: %s", exc)
        return EXIT_SPECTRUM
    if not np.all(np.isfinite(res.sigma)):
        log.error("spectrum scan produced non-finite singular values")
        return EXIT_SPECTRUM
    run.csv("spectrum.csv", ["s0", "s1", "sigma_min", "is_candidate"], res.rows())
    run.csv("candidates.csv", ["s0", "s1", "sigma_min"], res.candidates)
    return EXIT_OK


def _rel(a, b) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def cmd_fracpow(run: Run) -> int:
    cfg = run.cfg
    grid = build_grid(cfg)
    fld = build_field(cfg, grid)
    T = build_gradient(fld).real_representation()
    contour = build_contour(cfg)
    alpha = cfg["task.alpha"]
    off = cfg["task.off_kernel"]
    rng = np.random.default_rng(cfg["run.seed"])
    X = rng.standard_normal((T.dim, cfg["task.trials"]))
    try:
        target = None if cfg["task.materialize"] else X
        (P, Q), _ = frac_powers(T, [("p", alpha), ("q", alpha)], contour, target, off_kernel=off)
    except NotInjective as exc:
        log.error("%s", exc)
        return EXIT_FRACPOW
    meta = {"alpha": alpha, "field": fld.name, "off_kernel": off}
    if cfg["task.materialize"]:
        run.operator("p_alpha.bin", P, grid.n, grid.N, dict(meta, kind="p"))
        run.operator("q_alpha.bin", Q, grid.n, grid.N, dict(meta, kind="q"))
        P, Q = P @ X, Q @ X
    data = T.spectral_data()
    Xo = data.project_off(X)
    Po, Qo = data.project_off(P), data.project_off(Q)

    def powers(reqs, Y):
        return frac_powers(T, reqs, contour, Y, off_kernel=True)[0]

    tol = cfg["task.tol_battery"]
    rows = []
    (q_rest,) = powers([("q", 1.0 - alpha)], Xo)
    (chain,) = powers([("p", alpha)], q_rest)
    rows.append(("power p_a q_(1-a) = T", _rel(chain, T.matrix @ Xo)))
    (half,) = powers([("q", alpha / 2.0)], Xo)
    (half2,) = powers([("q", alpha / 2.0)], half)
    rows.append(("power q_(a/2) q_(a/2) = q_a", _rel(half2, Qo)))
    if alpha != 0.0:
        (inv,) = powers([("p", -alpha)], Xo)
        (back,) = powers([("p", alpha)], inv)
        rows.append(("inverse p_a p_(-a) = I", _rel(back, Xo)))
    if fld.structure == "constant":
        c = float(fld.samples[0, 0])
        U = Xo.reshape(grid.N, 1 << grid.n, -1)
        rows.append(("oracle p_a", _rel(Po, fft_oracle(U, alpha, "p", grid, c, module=True)
                                        .reshape(Po.shape))))
        rows.append(("oracle q_a", _rel(Qo, fft_oracle(U, alpha, "q", grid, c, module=True)
                                        .reshape(Qo.shape))))
    if alpha == 1.0:
        rows.append(("exact p_1 = T", _rel(P, T.matrix @ X)))
    table = [(name, err, tol, err <= tol) for name, err in rows]
    run.csv("battery.csv", ["check", "rel_err", "tol", "pass"], table)
    return EXIT_OK if all(r[3] for r in table) else EXIT_FRACPOW


def cmd_heat(run: Run) -> int:
    cfg = run.cfg
    grid = build_grid(cfg)
    fld = build_field(cfg, grid)
    alpha = cfg["task.alpha"]
    v0 = initial_field(cfg, grid)
    kw = dict(route=cfg["task.route"], contour=build_contour(cfg))
    try:
        if cfg["task.mode"] == "solve":
            v = spectral_solve(cfg["task.lambda"], v0, alpha, fld, **kw)
            run.csv("solution.csv", ["index", "f", "v"], zip(range(grid.N), v0, v))
            return EXIT_OK
        tr = evolve(v0, alpha, fld, cfg["task.dt"], cfg["task.steps"], cfg["task.scheme"],
                    snapshot_every=cfg["task.snapshot_every"], **kw)
    except SingularShift as exc:
        log.error("%s", exc)
        return EXIT_SINGULAR
    run.csv("trajectory.csv", ["t", "energy", "min", "max"], tr.rows())
    for k, u in tr.snapshots:
        run.operator(f"snapshot_{k:06d}.bin", u, 0, grid.N, {"step": k, "t": k * cfg["task.dt"]})
    return EXIT_OK


HANDLERS = {"validate": cmd_validate, "spectrum": cmd_spectrum,
            "fracpow": cmd_fracpow, "heat": cmd_heat}


# ---- entry point ---------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sfcalc", description="S-functional calculus batch runner")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, type=Path, help="INI run configuration")
    p.add_argument("--out", type=Path, help="output directory (overrides [output] dir)")
    p.add_argument("--seed", type=int, help="seed for randomized checks (overrides [run] seed)")
    p.add_argument("--threads", type=int, help="worker threads for quadrature nodes")
    p.add_argument("--dry-run", action="store_true", help="validate the config and stop")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"sfcalc {__version__}")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.set("run.seed", args.seed)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            cfg.set("run.threads", args.threads)
        out = args.out
        if out is None:
            out = Path(cfg["output.dir"])
            if not out.is_absolute():
                out = args.config.parent / out
        # building the field checks formula parameters and CSV input early
        grid = build_grid(cfg)
        if args.command != "spectrum" or cfg["task.operator"].startswith("gradient"):
            build_field(cfg, grid)
    except (ConfigError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"sfcalc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run = Run(cfg, out, args.command)
    if args.dry_run:
        log.info("dry run: config ok")
        return run.finish(EXIT_OK)
    code = HANDLERS[args.command](run)
    return run.finish(code)


if __name__ == "__main__":
    sys.exit(main())
