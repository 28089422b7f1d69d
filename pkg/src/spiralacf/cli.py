"""Command-line entry point: lemma certificates, spiral construction, ACF and tangent scans.

Exit status: 0 all requested certificates pass, 1 a certificate fails,
2 the construction fails, 3 the configuration is invalid.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, acf, geometry, lemmas, tangent
from .config import DEFAULT_THETA_GRID, measured_theta0

COMMANDS = ("verify-lemmas", "build-spiral", "acf-scan", "tangent-scan", "full-report")
EXIT_PASS, EXIT_CERTIFICATE, EXIT_CONSTRUCTION, EXIT_CONFIG = 0, 1, 2, 3
FORMATS = ("csv", "svg")
MIN_SAMPLES = 1000
# relative allowance for floating-point rounding in bound comparisons
ROUNDING = 1e-12


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class RunConfig:
    command: str = "full-report"
    n0: int = 10
    stages: int = 4
    samples: int = 100_000
    seed: int = 42
    theta_grid: str = "auto"
    radii: int = 64
    out: str = "spiralacf-out"
    formats: tuple = FORMATS
    threads: int | None = None
    trials: int = 1000

    @property
    def hierarchy_samples(self) -> int:
        """Walks per node of the level hierarchy; scans use ``samples`` per point."""
        return max(self.samples // 10, MIN_SAMPLES)


# ---------------------------------------------------------------------------
# parsing


def parse_theta_grid(text: str) -> list[float]:
    """'auto' (0.01 steps up to the measured theta0), 'a:b:step', or a comma list."""
    text = text.strip()
    if text == "auto":
        th0 = measured_theta0()
        return [t for t in DEFAULT_THETA_GRID if t <= th0 + 1e-12]
    try:
        if ":" in text:
            a, b, h = (float(x) for x in text.split(":"))
            if h <= 0 or b < a:
                raise ValueError
            n = int(math.floor((b - a) / h + 1e-9)) + 1
            return [round(a + i * h, 12) for i in range(n)]
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError("theta-grid", f"cannot parse {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise ConfigError("theta-grid", "angles must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spiralacf", description=__doc__.splitlines()[0],
                                argument_default=argparse.SUPPRESS)
    p.add_argument("command_pos", nargs="?", metavar="command", default=None,
                   help=" | ".join(COMMANDS))
    p.add_argument("--command", choices=COMMANDS)
    p.add_argument("--n0", type=int)
    p.add_argument("--stages", type=int)
    p.add_argument("--samples", type=int, help="walks per query point")
    p.add_argument("--seed", type=int)
    p.add_argument("--theta-grid", dest="theta_grid", help="'auto', 'a:b:step' or comma list")
    p.add_argument("--radii", type=int, help="number of scan circles")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", dest="formats", help="comma list from {csv, svg}")
    p.add_argument("--threads", type=int)
    p.add_argument("--trials", type=int, help="random instances per integral lemma")
    p.add_argument("--config", help="key = value file; flags override it")
    return p


_INT_KEYS = {"n0", "stages", "samples", "seed", "radii", "threads", "trials"}


def _coerce(key: str, value):
    if key in _INT_KEYS:
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(key, f"expected an integer, got {value!r}") from None
    if key == "formats":
        items = tuple(v.strip() for v in str(value).split(",") if v.strip())
        bad = [v for v in items if v not in FORMATS]
        if bad or not items:
            raise ConfigError("format", f"unknown formats {bad or items}")
        return items
    return value


def load_config_file(path: str) -> dict:
    parser = configparser.ConfigParser()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", str(exc)) from None
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc)) from None
    out = {}
    for key, value in parser["run"].items():
        key = key.replace("-", "_")
        if key == "format":
            key = "formats"
        if key not in RunConfig.__dataclass_fields__:
            raise ConfigError(key, "unknown configuration key")
        out[key] = value
    return out


def parse_config(argv: list[str] | None = None) -> RunConfig:
    parser = build_parser()
    try:
        ns = vars(parser.parse_args(argv))
    except SystemExit as exc:
        if exc.code == 0:
            raise
        raise ConfigError("arguments", "could not parse the command line") from None
    values = load_config_file(ns.pop("config")) if "config" in ns else {}
    pos = ns.pop("command_pos", None)
    if pos is not None:
        ns.setdefault("command", pos)
    values.update(ns)
    cfg = RunConfig(**{k: _coerce(k, v) for k, v in values.items()})
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.command not in COMMANDS:
        raise ConfigError("command", f"must be one of {COMMANDS}")
    if cfg.stages < 0:
        raise ConfigError("stages", "must be nonnegative")
    if cfg.samples < MIN_SAMPLES:
        raise ConfigError("samples", f"must be at least {MIN_SAMPLES}")
    if cfg.n0 < 1:
        raise ConfigError("n0", "must be positive")
    if cfg.stages > 0 and 1.0 / (1 + cfg.n0) > measured_theta0() + 1e-12:
        raise ConfigError("n0", f"1/(1+n0) exceeds the measured theta0 = {measured_theta0()}")
    if cfg.radii < 2:
        raise ConfigError("radii", "need at least two scan circles")
    if cfg.threads is not None and cfg.threads < 1:
        raise ConfigError("threads", "must be positive")
    if cfg.trials < 1:
        raise ConfigError("trials", "must be positive")
    parse_theta_grid(cfg.theta_grid)


# ---------------------------------------------------------------------------
# artifacts


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


@dataclass
class Report:
    cfg: RunConfig
    out: Path
    artifacts: list = field(default_factory=list)
    certificates: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    error: dict | None = None
    status: int = EXIT_PASS

    def add(self, path: Path, command: str):
        self.artifacts.append({"file": path.name, "command": command, "seed": self.cfg.seed})

    def certify(self, name: str, passed: bool, **detail):
        self.certificates[name] = {"passed": bool(passed), **{k: _jsonable(v) for k, v in detail.items()}}
        if not passed and self.status == EXIT_PASS:
            self.status = EXIT_CERTIFICATE

    def manifest(self) -> dict:
        cfg = asdict(self.cfg)
        cfg["formats"] = list(self.cfg.formats)
        return {
            "config": cfg,
            "code_version": __version__,
            "seeds": {"walks": self.cfg.seed, "lemma_trials": [self.cfg.seed, self.cfg.seed + 1]},
            "hierarchy_samples": self.cfg.hierarchy_samples,
            "theta0": measured_theta0(),
            "certificates": self.certificates,
            "summary": self.summary,
            "artifacts": self.artifacts,
            "error": self.error,
            "exit_status": self.status,
        }


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return v


class Pipeline:
    """Runs the requested stages, sharing one construction between scans."""

    def __init__(self, cfg: RunConfig, report: Report):
        self.cfg, self.report = cfg, report
        self._construction = None

    @property
    def csv(self) -> bool:
        return "csv" in self.cfg.formats

    @property
    def svg(self) -> bool:
        return "svg" in self.cfg.formats

    def verify_lemmas(self):
        grid = parse_theta_grid(self.cfg.theta_grid)
        th0 = measured_theta0()
        certs = lemmas.verify_all(grid, trials=self.cfg.trials, seed=self.cfg.seed)
        rows = [row for c in certs for row in c.csv_rows()]
        if self.csv:
            self.report.add(write_csv(self.report.out / "lemmas.csv",
                                      ["lemma_id", "theta", "computed", "bound", "margin", "pass"], rows),
                            "verify-lemmas")
        for c in certs:
            self.report.certify(f"lemma:{c.lemma_id}", c.verdict, min_margin=c.min_margin)
        self.report.summary["theta_grid"] = [grid[0], grid[-1], len(grid)]
        self.report.summary["theta0"] = th0

    def construction(self) -> acf.Construction:
        if self._construction is None:
            self._construction = acf.construct_spiral(self.cfg.n0, self.cfg.stages,
                                                      samples=self.cfg.hierarchy_samples, seed=self.cfg.seed)
        return self._construction

    def build_spiral(self):
        c = self.construction()
        out = self.report.out
        if self.csv:
            path = out / "interface.csv"
            path.write_text(c.curve.to_csv())
            self.report.add(path, "build-spiral")
            rows = []
            for rec in c.records:
                for crit in rec.criteria:
                    rows.append((rec.stage, rec.theta, rec.r, rec.rho, rec.attempts, crit.name,
                                 crit.value, crit.bound, crit.margin, crit.passed))
            self.report.add(write_csv(out / "stages.csv",
                                      ["stage", "theta", "r", "rho", "attempts", "criterion", "value",
                                       "bound", "margin", "pass"], rows), "build-spiral")
        if self.svg:
            from . import plots
            self.report.add(plots.curve_plot(c.curve, out / "interface.svg"), "build-spiral")
        j0 = acf.harmonic.j0_proxy(c.field)
        self.report.summary["stages"] = [
            {"stage": r.stage, "theta": r.theta, "r": r.r, "rho": r.rho, "attempts": r.attempts,
             "J1": list(r.j1), "J0": [float(x) for x in r.j0]} for r in c.records]
        self.report.summary["cumulative_angle"] = c.curve.cumulative_angle
        self.report.summary["J0_proxy"] = [float(j0[0]), float(j0[1])]

    def acf_scan(self):
        c = self.construction()
        K, n0 = self.cfg.stages, self.cfg.n0
        fld = c.field
        radii = acf.scan_radii(fld, self.cfg.radii)
        scan = acf.acf_scan(fld, radii, stage=K, samples=self.cfg.samples)
        ext = acf.extension_bound(scan, 3)
        floor_k = acf.product_floor(n0, K)
        floor_inf = acf.product_floor(n0)
        ceiling = acf.product_ceiling(n0, K)
        j = np.asarray(scan.j)
        js = np.asarray(scan.j_stderr)
        j1 = j[int(np.argmax(scan.radii))]
        j1s = js[int(np.argmax(scan.radii))]
        margins = scan.monotonicity_margins()
        self.report.certify("acf:monotone", bool(np.all(margins >= 0)), min_margin=float(margins.min()))
        self.report.certify("acf:upper", j1 <= ceiling + 3 * j1s + ROUNDING * ceiling, J1=j1, stderr=j1s, bound=ceiling)
        self.report.certify("acf:lower", scan.j0 >= floor_k - 3 * scan.j0_stderr - ROUNDING * floor_k,
                            J0=scan.j0, stderr=scan.j0_stderr, bound=floor_k)
        self.report.certify("acf:scan-lower", bool(np.all(j >= floor_k - 3 * js - ROUNDING * floor_k)),
                            min_J=float(j.min()), bound=floor_k)
        self.report.certify("acf:limit-floor", bool(np.all(j >= floor_inf - 3 * js - ROUNDING * floor_inf)), bound=floor_inf)
        self.report.certify("acf:relation", bool(np.all(np.abs(scan.j_relation_defect()) < 1e-12)))
        self.report.certify("acf:extension-n3", bool(np.all(np.asarray(ext.phi) > 0)),
                            min_bound=float(np.min(ext.phi)))
        if self.csv:
            rows = scan.csv_rows() + ext.csv_rows()
            self.report.add(write_csv(self.report.out / "acf_scan.csv",
                                      ["stage", "r", "Phi", "J", "stderr", "n"], rows), "acf-scan")
        if self.svg:
            from . import plots
            self.report.add(plots.acf_plot(scan, floor_k, ceiling, self.report.out / "acf.svg"), "acf-scan")
        return scan

    def tangent_scan(self):
        c = self.construction()
        curve, fld = c.curve, c.field
        radii = np.geomspace(1.0, curve.core_half_length * 0.05, 400)
        tscan = tangent.turning_profile(curve, radii)
        for r in fld.radii:
            tscan.blowups.append(tangent.blowup_distance(fld, float(r)))
        rep = tangent.nonuniqueness_certificate(tscan, curve, n0=self.cfg.n0)
        for name, ok in rep.checks.items():
            self.report.certify(f"tangent:{name}", ok)
        self.report.summary["tangent"] = {
            "total_variation": rep.total_variation, "expected": rep.expected_variation,
            "max_residual": rep.max_residual, "nu_spread": rep.nu_spread,
            "density": [rep.density_min, rep.density_max], "g2_sum": tscan.g2_sum,
            "unique_tangent": rep.unique_tangent, "witness_gap": rep.witness_gap,
            "witness_stages": rep.witness_stages}
        out = self.report.out
        if self.csv:
            self.report.add(write_csv(out / "tangent.csv",
                                      ["stage", "r", "nu_x", "nu_y", "angle", "gap", "increment", "density"],
                                      tscan.csv_rows()), "tangent-scan")
            rows = [(b.radius, b.alpha, b.beta, b.nu.real, b.nu.imag, b.residual, b.low_confidence)
                    for b in tscan.blowups]
            self.report.add(write_csv(out / "blowup.csv",
                                      ["r", "alpha", "beta", "nu_x", "nu_y", "residual", "low_confidence"],
                                      rows), "tangent-scan")
        if self.svg:
            from . import plots
            angles = [a.angle for a in curve.annuli]
            self.report.add(plots.normal_plot(tscan, out / "normal.svg", angles), "tangent-scan")
        return tscan


def run(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.threads:
        import numba
        numba.set_num_threads(min(cfg.threads, numba.config.NUMBA_NUM_THREADS))
    report = Report(cfg, out)
    pipe = Pipeline(cfg, report)
    steps = {
        "verify-lemmas": [pipe.verify_lemmas],
        "build-spiral": [pipe.build_spiral],
        "acf-scan": [pipe.build_spiral, pipe.acf_scan],
        "tangent-scan": [pipe.build_spiral, pipe.tangent_scan],
        "full-report": [pipe.verify_lemmas, pipe.build_spiral, pipe.acf_scan, pipe.tangent_scan],
    }[cfg.command]
    try:
        for step in steps:
            step()
    except geometry.ConstructionError as exc:
        report.error = {"module": "geometry", "type": type(exc).__name__, "message": str(exc),
                        "criterion": exc.criterion, "stage": exc.stage}
        report.status = EXIT_CONSTRUCTION
    except (ValueError, ArithmeticError) as exc:
        report.error = {"module": type(exc).__module__.rsplit(".", 1)[-1], "type": type(exc).__name__,
                        "message": str(exc)}
        report.status = EXIT_CONSTRUCTION
    (out / "manifest.json").write_text(json.dumps(report.manifest(), indent=2, sort_keys=True) + "\n")
    return report.status


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status = run(cfg)
    labels = {0: "pass", 1: "certificate failure", 2: "construction failure"}
    print(f"{cfg.command}: {labels.get(status, status)} (artifacts in {cfg.out})")
    return status


if __name__ == "__main__":
    sys.exit(main())
