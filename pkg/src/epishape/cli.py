"""Batch front door: parse config, dispatch experiments, emit CSV/JSON artifacts.

One process runs one experiment.  Configuration comes from an optional TOML
file of flat key = value pairs, overridden by command-line flags.  Every
artifact embeds the config hash, seed, and tool version, and is written
atomically.  Exit codes: 0 success, 2 usage or configuration error, 3 a
search needed a larger box (or an estimator ran out of usable samples).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field as dc_field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from ._io import config_hash, write_csv, write_json
from .errors import ConfigError, EpishapeError, EstimationError, TruncationError
from .field import FieldConfig, RecoveryDist

# Config file schema: flat keys only.  Values are scalars or homogeneous
# numeric lists; unknown keys are an error so typos fail loudly.
_KEY_TYPES = {
    "d": int,
    "lambda": float,
    "recovery": str,
    "seed": int,
    "L": int,
    "replicas": int,
    "jobs": int,
    "out": str,
    "n": int,
    "tol": float,
    "eps": float,
    "t": float,
    "t_ladder": list,
    "n_max": int,
    "n_values": list,
    "z": list,
    "c_prime": int,
    "thickness": int,
    "extent": int,
    "k_grid": list,
    "radii": list,
    "kind": str,
    "direction": str,
    "refine": int,
    "horizon": float,
    "pairs": int,
    "quick": bool,
}

_DEFAULTS = {
    "d": 3,
    "lambda": 1.0,
    "seed": 0,
    "L": 16,
    "replicas": 100,
    "jobs": os.cpu_count() or 1,
    "out": "out",
    "c_prime": 8,
    "refine": 2,
    "kind": "survival",
    "direction": "out",
    "tol": 0.05,
    "eps": 0.3,
    "pairs": 20,
}


def load_config(path) -> dict:
    """Read and validate a flat TOML config file."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    unknown = sorted(set(raw) - set(_KEY_TYPES))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    out = {}
    for key, value in raw.items():
        want = _KEY_TYPES[key]
        if want is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if want is list:
            if not isinstance(value, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
            ):
                raise ConfigError(f"config key {key!r} must be a numeric list")
        elif not isinstance(value, want) or isinstance(value, bool) and want is not bool:
            raise ConfigError(
                f"config key {key!r} must have type {want.__name__}, "
                f"got {type(value).__name__}"
            )
        out[key] = value
    return out


@dataclass
class ExperimentConfig:
    """Fully resolved settings for one experiment run."""

    values: dict = dc_field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def field_config(self) -> FieldConfig:
        recovery = self.values.get("recovery")
        if not recovery:
            raise ConfigError("a recovery distribution is required (--recovery)")
        return FieldConfig(
            d=self.values["d"],
            lam=self.values["lambda"],
            recovery=RecoveryDist.parse(recovery),
            seed=self.values["seed"],
        )

    def meta(self) -> dict:
        # jobs and the output directory do not influence results, so they
        # stay out of the hash: same config + seed means same bytes
        payload = {
            k: self.values[k]
            for k in sorted(self.values)
            if self.values[k] is not None and k not in ("out", "jobs")
        }
        return {
            "config_hash": config_hash(payload),
            "seed": self.values["seed"],
            "version": __version__,
        }

    def out_dir(self) -> Path:
        return Path(self.values["out"])


def _resolve(args: argparse.Namespace) -> ExperimentConfig:
    values = dict(_DEFAULTS)
    if getattr(args, "config", None):
        values.update(load_config(args.config))
    for key in _KEY_TYPES:
        flag = "lambda_" if key == "lambda" else key.replace("-", "_")
        if hasattr(args, flag) and getattr(args, flag) is not None:
            values[key] = getattr(args, flag)
    return ExperimentConfig(values)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML config file (flags override it)")
    p.add_argument("--d", type=int, help="lattice dimension (2, 3 or 4)")
    p.add_argument("--lambda", dest="lambda_", type=float, help="infection rate")
    p.add_argument("--recovery", help="recovery distribution, e.g. exp:1.0 or const:2.0")
    p.add_argument("--seed", type=int, help="global seed")
    p.add_argument("--L", type=int, help="box radius")
    p.add_argument("--replicas", type=int, help="Monte Carlo replicas")
    p.add_argument("--jobs", type=int, help="worker threads over replicas")
    p.add_argument("--out", help="output directory")
    p.add_argument("--c-prime", dest="c_prime", type=int, help="neighborhood blow-up factor")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epishape",
        description="Monte Carlo experiments on the lattice epidemic and its "
        "first-passage percolation representation",
    )
    parser.add_argument("--version", action="version", version=f"epishape {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("epidemic", help="run one epidemic and export its trajectory")
    _add_common(p)
    p.add_argument("--horizon", type=float, help="simulation horizon (time)")

    p = sub.add_parser("shape", help="estimate the asymptotic shape (and inclusions)")
    _add_common(p)
    p.add_argument("--t", type=float, help="observation time for the shape cloud")
    p.add_argument("--refine", type=int, help="direction grid refinement")
    p.add_argument("--eps", type=float, help="inclusion margin for the sandwich check")
    p.add_argument(
        "--t-ladder", dest="t_ladder", type=float, nargs="+", help="times for the sandwich check"
    )

    p = sub.add_parser("radial", help="directional speed estimate along a ray")
    _add_common(p)
    p.add_argument("--z", type=int, nargs="+", help="ray direction (d integers)")
    p.add_argument("--n-max", dest="n_max", type=int, help="largest ray multiple")

    p = sub.add_parser("lambda-c", help="bisection bracket of the critical rate")
    _add_common(p)
    p.add_argument("--n", type=int, help="box radius for the crossing event")
    p.add_argument("--tol", type=float, help="bracket width")

    p = sub.add_parser("tails", help="survival curves and decay-rate fit")
    _add_common(p)
    p.add_argument("--kind", choices=["survival", "kappa"], help="which tail to measure")
    p.add_argument("--direction", choices=["out", "in"], help="survival direction")
    p.add_argument("--n-values", dest="n_values", type=int, nargs="+", help="radius ladder")

    p = sub.add_parser("fkg", help="positive-association covariance checks")
    _add_common(p)
    p.add_argument("--pairs", type=int, help="number of random monotone event pairs")

    p = sub.add_parser("slab", help="slab percolation probe")
    _add_common(p)
    p.add_argument("--thickness", type=int, help="slab thickness")
    p.add_argument("--extent", type=int, help="lateral extent")

    p = sub.add_parser("verify", help="run the exact-invariant property battery")
    p.add_argument("--quick", action="store_true", help="smaller, faster battery")

    return parser


# -- experiment runners --------------------------------------------------------


def _cmd_epidemic(cfg: ExperimentConfig) -> str:
    from .epidemic import run_epidemic
    from .lattice import Box, origin

    fc = cfg.field_config()
    horizon = cfg.get("horizon") or 10.0
    box = Box(origin(fc.d), cfg["L"])
    traj = run_epidemic(fc, box, horizon)
    columns = [f"x_{i + 1}" for i in range(fc.d)] + ["infection_time", "recovery_time"]
    path = cfg.out_dir() / "trajectory.csv"
    write_csv(path, cfg.meta(), columns, traj.to_rows())
    infected = sum(1 for _ in traj.infection_times)
    return (
        f"epidemic: d={fc.d} lambda={fc.lam} horizon={horizon} "
        f"infected={infected} clipped={traj.touched_boundary} -> {path}"
    )


def _cmd_shape(cfg: ExperimentConfig) -> str:
    from .shape import estimate_shape, sandwich_check

    fc = cfg.field_config()
    t = cfg.get("t") or 8.0
    shape = estimate_shape(
        fc, t, cfg["replicas"], cfg["L"], refine=cfg["refine"], jobs=cfg["jobs"]
    )
    out = cfg.out_dir()
    meta = cfg.meta()
    cloud_rows = []
    for k, pts in enumerate(shape.clouds):
        for row in pts:
            cloud_rows.append((k, *[float(v) for v in row]))
    write_csv(
        out / "cloud.csv",
        meta,
        ["replica"] + [f"x_{i + 1}" for i in range(fc.d)],
        cloud_rows,
    )
    radii_rows = [
        (*map(int, shape.directions[i]), float(shape.radii[i]),
         float(shape.radii_ci[0, i]), float(shape.radii_ci[1, i]))
        for i in range(len(shape.radii))
    ]
    write_csv(
        out / "radii.csv",
        meta,
        [f"direction_{i + 1}" for i in range(fc.d)] + ["radius", "ci_lo", "ci_hi"],
        radii_rows,
    )
    summary = (
        f"shape: t={t} replicas={shape.replicas} survived={shape.replicas - shape.excluded} "
        f"clipped={shape.clipped} -> {out / 'cloud.csv'}, {out / 'radii.csv'}"
    )
    ladder = cfg.get("t_ladder")
    if ladder:
        report = sandwich_check(
            fc,
            cfg["eps"],
            ladder,
            cfg["replicas"],
            shape,
            cfg["L"],
            seed_salt=10_000,
            jobs=cfg["jobs"],
        )
        rows = [
            (
                t_i,
                report.eps,
                float(report.inner_violation[i]),
                float(report.outer_violation[i]),
                float(report.annulus_fraction[i]),
                report.replicas_used,
            )
            for i, t_i in enumerate(report.t_values)
        ]
        write_csv(
            out / "sandwich.csv",
            meta,
            ["t", "eps", "inner_violation", "outer_violation", "annulus_fraction", "replicas_used"],
            rows,
        )
        summary += f", {out / 'sandwich.csv'}"
    return summary


def _cmd_radial(cfg: ExperimentConfig) -> str:
    from .shape import radial_limit

    fc = cfg.field_config()
    z = tuple(int(v) for v in (cfg.get("z") or [1] + [0] * (fc.d - 1)))
    if len(z) != fc.d:
        raise ConfigError(f"--z needs {fc.d} integers")
    n_max = cfg.get("n_max") or 8
    est = radial_limit(
        fc,
        z,
        n_max,
        cfg["replicas"],
        box_radius=cfg.get("L"),
        c_prime=cfg["c_prime"],
        jobs=cfg["jobs"],
    )
    out = cfg.out_dir()
    meta = cfg.meta()
    rows = []
    for k in range(est.ratios.shape[0]):
        for i, n in enumerate(est.n_values):
            v = est.ratios[k, i]
            rows.append((*z, n, k, float(v)))
    write_csv(
        out / "radial.csv",
        meta,
        [f"z_{i + 1}" for i in range(fc.d)] + ["n", "replica", "ratio"],
        rows,
    )
    write_json(
        out / "radial.json",
        meta,
        {
            "z": list(z),
            "n_values": est.n_values,
            "mu_hat": est.mu_hat,
            "ci": list(est.ci),
            "replicas": est.replicas,
            "excluded": est.excluded,
            "truncated": est.truncated,
        },
    )
    return (
        f"radial: z={z} mu_hat={est.mu_hat:.6g} ci=({est.ci[0]:.6g}, {est.ci[1]:.6g}) "
        f"excluded={est.excluded} truncated={est.truncated} -> {out / 'radial.csv'}"
    )


def _cmd_lambda_c(cfg: ExperimentConfig) -> str:
    from .stats import estimate_lambda_c

    fc = cfg.field_config()
    n = cfg.get("n") or 8
    brackets = {}
    for direction in ("out", "in"):
        br = estimate_lambda_c(
            fc, n, cfg["tol"], cfg["replicas"], direction, jobs=cfg["jobs"]
        )
        brackets[direction] = {
            "lo": br.lo,
            "hi": br.hi,
            "p_lo": br.p_lo,
            "p_hi": br.p_hi,
            "n": br.n,
            "tol": br.tol,
            "replicas": br.replicas,
        }
    path = cfg.out_dir() / "lambda_c.json"
    write_json(path, cfg.meta(), {"out": brackets["out"], "in": brackets["in"]})
    return (
        f"lambda-c: out=[{brackets['out']['lo']:.4f}, {brackets['out']['hi']:.4f}] "
        f"in=[{brackets['in']['lo']:.4f}, {brackets['in']['hi']:.4f}] "
        f"n={n} replicas={cfg['replicas']} -> {path}"
    )


def _cmd_tails(cfg: ExperimentConfig) -> str:
    from .stats import kappa_tail_curve, survival_curve_family, tail_fit

    fc = cfg.field_config()
    out = cfg.out_dir()
    meta = cfg.meta()
    if cfg["kind"] == "survival":
        ns = [int(v) for v in (cfg.get("n_values") or range(2, 9))]
        curves = survival_curve_family(fc, ns, cfg["direction"], cfg["replicas"], cfg["jobs"])
        fit = tail_fit([c.n for c in curves], [c.p_hat for c in curves], model="exp_n")
    else:
        ns = [int(v) for v in (cfg.get("n_values") or range(1, 5))]
        curves = kappa_tail_curve(
            fc, cfg["L"], cfg["replicas"], ns, cfg["c_prime"], jobs=cfg["jobs"]
        )
        fit = tail_fit(
            [c.n for c in curves],
            [c.p_hat for c in curves],
            model="exp_n_pow",
            power=1.0 / fc.d,
        )
    rows = [(c.lam, c.n, c.direction, c.p_hat, c.se, c.replicas) for c in curves]
    write_csv(
        out / "curves.csv",
        meta,
        ["lambda", "n", "direction", "p_hat", "se", "replicas"],
        rows,
    )
    write_json(out / "fit.json", meta, fit.as_record())
    return (
        f"tails: kind={cfg['kind']} rate={fit.rate:.4f} r2={fit.r2:.4f} "
        f"-> {out / 'curves.csv'}, {out / 'fit.json'}"
    )


def _cmd_fkg(cfg: ExperimentConfig) -> str:
    import numpy as np

    from .stats import fkg_check, random_monotone_event

    fc = cfg.field_config()
    rng = np.random.default_rng(fc.seed ^ 0x464B47)
    rows = []
    worst = None
    for pair in range(cfg["pairs"]):
        u = random_monotone_event(fc.d, rng)
        v = random_monotone_event(fc.d, rng)
        rep = fkg_check(fc, u, v, cfg["replicas"])
        rows.append((pair, rep.cov, rep.se, rep.mean_u, rep.mean_v, rep.replicas))
        score = rep.cov / rep.se if rep.se > 0 else 0.0
        if worst is None or score < worst:
            worst = score
    path = cfg.out_dir() / "fkg.csv"
    write_csv(
        path, cfg.meta(), ["pair", "cov", "se", "mean_u", "mean_v", "replicas"], rows
    )
    return f"fkg: pairs={cfg['pairs']} worst_cov_z={worst:.2f} -> {path}"


def _cmd_slab(cfg: ExperimentConfig) -> str:
    from .stats import slab_percolation_probe

    fc = cfg.field_config()
    thickness = cfg.get("thickness") or 4
    extent = cfg.get("extent") or 32
    rep = slab_percolation_probe(
        fc, thickness, extent, cfg["replicas"], jobs=cfg["jobs"]
    )
    rows = [
        (rep.thickness, rep.extent, h, p, se, rep.replicas)
        for h, p, se in zip(rep.heights, rep.p_by_height, rep.se_by_height)
    ]
    path = cfg.out_dir() / "slab.csv"
    write_csv(
        path, cfg.meta(), ["k", "extent", "height", "p_hat", "se", "replicas"], rows
    )
    return (
        f"slab: k={thickness} extent={extent} min_p={rep.min_p:.3f} -> {path}"
    )


_RUNNERS = {
    "epidemic": _cmd_epidemic,
    "shape": _cmd_shape,
    "radial": _cmd_radial,
    "lambda-c": _cmd_lambda_c,
    "tails": _cmd_tails,
    "fkg": _cmd_fkg,
    "slab": _cmd_slab,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "verify":
        from .verify import run_battery

        return run_battery(quick=args.quick)
    try:
        cfg = _resolve(args)
        summary = _RUNNERS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"run 'epishape {args.command} --help' for usage", file=sys.stderr)
        return 2
    except TruncationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("hint: increase the box radius (--L)", file=sys.stderr)
        return 3
    except EstimationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("hint: increase replicas or the box radius (--L)", file=sys.stderr)
        return 3
    except EpishapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
