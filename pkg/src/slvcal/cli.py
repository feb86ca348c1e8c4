"""Command line front end: ``slvcal calibrate`` and ``slvcal price``.

Settings come from built-in defaults, then an optional JSON config file,
then command line flags.  Failures print one line
``error code=<CODE> message=<text>`` to stderr and exit with status 2.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibrate import CalibConfig, LeverageSurface, calibrate
from .errors import ConfigError, SlvError
from .fdops import assemble
from .mesh import build_grid
from .model import PsiFamily, case_params, read_lv_csv, synthetic_lv_surface
from .pricing import DEFAULT_STRIKES, price_four_routes

_PARAM_KEYS = ("kappa", "eta", "xi_sv", "mu", "rho", "T", "V0", "rd", "rf", "S0")
_BOUND_KEYS = ("Xmin", "Xmax", "Vmin", "Vmax")


@dataclass
class RunConfig:
    case: int = 1
    lv_surface: str | None = None
    synthetic: str = "smile"
    flat_sigma: float = 0.1
    m1: int | None = None
    m2: int = 50
    dtau: float = 1.0 / 200.0
    theta: float = 1.0 / 3.0
    q: int = 2
    epsilon: float = 1e-8
    strikes: tuple[float, ...] = DEFAULT_STRIKES
    out: str = "."
    psi: str | None = None
    params: dict[str, float] = field(default_factory=dict)
    bounds: dict[str, float] = field(default_factory=dict)

    def validate(self) -> None:
        if self.m2 < 4 or (self.m1 is not None and self.m1 < 8):
            raise ConfigError("grid too small: need m1 >= 8 and m2 >= 4")
        if not self.dtau > 0.0:
            raise ConfigError("dtau must be positive")
        if not self.strikes or any(not k > 0.0 for k in self.strikes):
            raise ConfigError("strikes must be positive")
        unknown = set(self.params) - set(_PARAM_KEYS)
        if unknown:
            raise ConfigError(f"unknown model parameters {sorted(unknown)}")
        unknown = set(self.bounds) - set(_BOUND_KEYS)
        if unknown:
            raise ConfigError(f"unknown truncation bounds {sorted(unknown)}")

    def model(self):
        p = case_params(self.case)
        changes = dict(self.params)
        if self.psi is not None:
            changes["psi"] = PsiFamily(self.psi)
        return p.with_(**changes) if changes else p

    def calib_config(self, T: float) -> CalibConfig:
        return CalibConfig.from_dtau(T, self.dtau, Q=self.q, epsilon=self.epsilon, theta=self.theta)

    def surface(self):
        if self.lv_surface:
            return read_lv_csv(self.lv_surface)
        return synthetic_lv_surface(self.synthetic, sigma=self.flat_sigma)


def _parse_strikes(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"cannot parse strike list {text!r}") from None


def load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        for key, value in data.items():
            if key == "strikes":
                value = tuple(float(k) for k in value)
            if not hasattr(cfg, key):
                raise ConfigError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
    overrides = {
        "case": args.case,
        "lv_surface": args.lv_surface,
        "synthetic": args.synthetic,
        "m1": args.m1,
        "m2": args.m2,
        "dtau": args.dtau,
        "theta": args.theta,
        "q": args.q,
        "epsilon": args.epsilon,
        "out": args.out,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if args.strikes is not None:
        cfg.strikes = _parse_strikes(args.strikes)
    cfg.validate()
    return cfg


def _setup(cfg: RunConfig):
    params = cfg.model()
    calib = cfg.calib_config(params.T)
    lv = cfg.surface()
    grid = build_grid(params, m2=cfg.m2, m1=cfg.m1, bounds=cfg.bounds or None)
    return params, calib, lv, grid, assemble(grid)


def write_density_csv(path, grid, pbar) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "v", "pbar"])
        for i, x in enumerate(grid.gx.nodes):
            for j, v in enumerate(grid.gv.nodes):
                w.writerow([repr(float(x)), repr(float(v)), repr(float(pbar[i, j]))])


def run_calibrate(cfg: RunConfig) -> int:
    params, calib, lv, grid, ops = _setup(cfg)
    res = calibrate(grid, ops, params, lv, calib)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    res.leverage.write_csv(out / "leverage.csv")
    write_density_csv(out / "density.csv", grid, res.density)
    diag = res.diagnostics.as_dict()
    diag["mass_final"] = float(np.sum(res.density))
    diag["grid"] = list(grid.shape)
    diag["N"] = calib.N
    (out / "diagnostics.json").write_text(json.dumps(diag, indent=2, sort_keys=True) + "\n")
    return 0


def run_price(cfg: RunConfig, leverage_path: str) -> int:
    params, calib, lv, grid, ops = _setup(cfg)
    lev = LeverageSurface.read_csv(leverage_path)
    lev.check_stamps(grid, calib.mcs(params.T).dt, params.T)
    report = price_four_routes(
        grid, ops, params, lv, lev, strikes=cfg.strikes, theta=cfg.theta, case=str(cfg.case)
    )
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "report.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields")
    common.add_argument("--case", type=int, help="parameter set 1-4")
    common.add_argument("--lv-surface", dest="lv_surface", help="CSV with x,tau,sigma rows")
    common.add_argument("--synthetic", choices=("smile", "flat"), help="synthetic LV surface")
    common.add_argument("--m1", type=int)
    common.add_argument("--m2", type=int)
    common.add_argument("--dtau", type=float)
    common.add_argument("--theta", type=float)
    common.add_argument("--q", type=int, help="inner sweeps per step")
    common.add_argument("--epsilon", type=float)
    common.add_argument("--strikes", help="comma separated K/S0 ratios")
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(prog="slvcal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("calibrate", parents=[common], help="calibrate the leverage function")
    price = sub.add_parser("price", parents=[common], help="price by the four routes")
    price.add_argument("--leverage", required=True, help="leverage CSV from calibrate")
    return parser


def _one_line(exc: Exception) -> str:
    return " ".join(str(exc).split())


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "calibrate":
            return run_calibrate(cfg)
        return run_price(cfg, args.leverage)
    except SlvError as exc:
        print(f"error code={exc.code} message={_one_line(exc)}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error code=IO_ERROR message={_one_line(exc)}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
