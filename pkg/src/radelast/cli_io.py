"""Run configuration, command line, and output files.

The configuration is a YAML document with nested sections; unknown keys are
rejected so typos cannot silently change a run.  Outputs are plain CSV (one
diagnostics row per step, plus state snapshots) and a JSON manifest carrying
the configuration echo and git-style content hashes of every written file,
so identical configurations produce bit-identical output trees.

Exit codes: 0 success, 1 failed checks (audit), 2 configuration error,
3 solver failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import evolution, kinematics
from .grid import SCHEMES, make_grid
from .step_minimizer import el_residual, entropy_defect, minimize_step
from .stored_energy import audit_assumptions, build_model

__all__ = ["ConfigError", "RunConfig", "parse_config", "serialize_config",
           "write_outputs", "cli", "main"]

ENV_PREFIX = "RADELAST_"

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class RunConfig:
    model_name: str = "default"
    model_params: dict = field(default_factory=dict)
    grid_n: int = 64
    grid_scheme: str = "cell_centered"
    tau: float = 1e-3
    steps: int = 100
    stretch: float = 1.0
    preset: str = "perturbed"
    epsilon: float = 0.05
    core: float = 0.2
    alpha_expr: str | None = None
    v_expr: str | None = None
    tol: float = 1e-10
    max_iterations: int = 200
    out_dir: str = "out"
    snapshot_every: int = 50
    seed: int = 0

    def to_tree(self) -> dict:
        return {
            "model": {"name": self.model_name, "params": dict(self.model_params)},
            "grid": {"n": self.grid_n, "scheme": self.grid_scheme},
            "time": {"tau": self.tau, "steps": self.steps},
            "boundary": {"stretch": self.stretch},
            "preset": {
                "name": self.preset,
                "epsilon": self.epsilon,
                "core": self.core,
                "alpha_expr": self.alpha_expr,
                "v_expr": self.v_expr,
            },
            "solver": {"tol": self.tol, "max_iterations": self.max_iterations},
            "output": {"directory": self.out_dir, "snapshot_every": self.snapshot_every},
            "seed": self.seed,
        }


_SECTIONS = {
    "model": {"name", "params"},
    "grid": {"n", "scheme"},
    "time": {"tau", "steps"},
    "boundary": {"stretch"},
    "preset": {"name", "epsilon", "core", "alpha_expr", "v_expr"},
    "solver": {"tol", "max_iterations"},
    "output": {"directory", "snapshot_every"},
}


def _need(tree, section, key, typ, default, check=None, what=""):
    raw = tree.get(section, {}).get(key, default)
    if raw is None and default is None:
        return None
    try:
        val = typ(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"field {section}.{key}: cannot read {raw!r} as {typ.__name__}")
    if check is not None and not check(val):
        raise ConfigError(f"field {section}.{key}: {val!r} is invalid ({what})")
    return val


def _validate_tree(tree: dict) -> RunConfig:
    if not isinstance(tree, dict):
        raise ConfigError("configuration root must be a mapping")
    unknown = set(tree) - set(_SECTIONS) - {"seed"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    for sec, allowed in _SECTIONS.items():
        body = tree.get(sec, {})
        if body is None:
            body = {}
        if not isinstance(body, dict):
            raise ConfigError(f"section {sec!r} must be a mapping")
        bad = set(body) - allowed
        if bad:
            raise ConfigError(f"unknown keys in section {sec!r}: {sorted(bad)}")
    params = tree.get("model", {}).get("params", {}) or {}
    if not isinstance(params, dict):
        raise ConfigError("field model.params must be a mapping")
    cfg = RunConfig(
        model_name=_need(tree, "model", "name", str, "default"),
        model_params={k: float(v) for k, v in params.items()},
        grid_n=_need(tree, "grid", "n", int, 64, lambda n: n >= 4, "need n >= 4"),
        grid_scheme=_need(tree, "grid", "scheme", str, "cell_centered",
                          lambda s: s in SCHEMES, f"expected one of {SCHEMES}"),
        tau=_need(tree, "time", "tau", float, 1e-3, lambda t: t > 0, "need tau > 0"),
        steps=_need(tree, "time", "steps", int, 100, lambda m: m >= 0, "need steps >= 0"),
        stretch=_need(tree, "boundary", "stretch", float, 1.0,
                      lambda x: x > 0, "need stretch > 0"),
        preset=_need(tree, "preset", "name", str, "perturbed",
                     lambda p: p in evolution.PRESETS,
                     f"expected one of {evolution.PRESETS}"),
        epsilon=_need(tree, "preset", "epsilon", float, 0.05),
        core=_need(tree, "preset", "core", float, 0.2,
                   lambda c: 0 < c <= 1, "need 0 < core <= 1"),
        alpha_expr=_need(tree, "preset", "alpha_expr", str, None),
        v_expr=_need(tree, "preset", "v_expr", str, None),
        tol=_need(tree, "solver", "tol", float, 1e-10, lambda t: t > 0, "need tol > 0"),
        max_iterations=_need(tree, "solver", "max_iterations", int, 200,
                             lambda n: n >= 1, "need max_iterations >= 1"),
        out_dir=_need(tree, "output", "directory", str, "out"),
        snapshot_every=_need(tree, "output", "snapshot_every", int, 50,
                             lambda k: k >= 1, "need snapshot_every >= 1"),
        seed=_need({"": tree}, "", "seed", int, 0, lambda s: s >= 0, "need seed >= 0"),
    )
    try:
        build_model(cfg.model_name, **cfg.model_params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field model: {exc}")
    return cfg


def _apply_env_overrides(tree: dict, environ=None) -> dict:
    """RADELAST_SECTION__KEY=value overrides any configuration entry."""
    environ = os.environ if environ is None else environ
    for name, raw in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        path = name[len(ENV_PREFIX):].lower().split("__")
        value = yaml.safe_load(raw)
        node = tree
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"environment override {name} clashes with scalar section")
        node[path[-1]] = value
    return tree


def parse_config(source: str | Path, environ=None) -> RunConfig:
    """Read a YAML config from a path or literal text and validate it."""
    text = None
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                    and Path(source).exists()):
        text = Path(source).read_text()
    else:
        text = str(source)
    try:
        tree = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"cannot parse configuration{where}: {exc.problem}")
    if tree is None:
        tree = {}
    tree = _apply_env_overrides(tree, environ)
    return _validate_tree(tree)


def serialize_config(config: RunConfig) -> str:
    return yaml.safe_dump(config.to_tree(), sort_keys=True, default_flow_style=False)


# -- outputs --------------------------------------------------------------------


def _git_blob_sha1(data: bytes) -> str:
    hasher = hashlib.sha1()
    hasher.update(b"blob %d\x00" % len(data))
    hasher.update(data)
    return hasher.hexdigest()


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_outputs(trajectory: evolution.Trajectory, config: RunConfig,
                  out_dir: str | Path | None = None) -> dict:
    """Write diagnostics CSV, state snapshots and the run manifest.

    Returns {relative name: absolute Path}.  Floats are written with full
    round-trip precision so identical runs produce identical bytes.
    """
    if not trajectory.states:
        raise ValueError("cannot write an empty trajectory")
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}

    rows = [",".join(evolution.StepDiagnostics.CSV_COLUMNS)]
    for d in trajectory.diagnostics:
        rows.append(",".join(_fmt(x) for x in d.row()))
    _write(out / "diagnostics.csv", "\n".join(rows) + "\n", written)

    last = len(trajectory.states) - 1
    snap_steps = sorted(set(range(0, last + 1, config.snapshot_every)) | {last})
    rho = trajectory.grid.rho
    for j in snap_steps:
        st = trajectory.states[j]
        lines = ["rho,alpha,beta,gamma,v"]
        for i in range(rho.size):
            lines.append(",".join(_fmt(x) for x in
                                  (rho[i], st.alpha[i], st.beta[i], st.gamma[i], st.v[i])))
        _write(out / f"snapshot_{j:06d}.csv", "\n".join(lines) + "\n", written)

    manifest = {
        "config": config.to_tree(),
        "status": trajectory.status,
        "failed_step": trajectory.failed_step,
        "files": {name: _git_blob_sha1(path.read_bytes())
                  for name, path in sorted(written.items())},
    }
    _write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n",
           written)
    return written


def _write(path: Path, text: str, registry: dict):
    path.write_text(text)
    registry[path.name] = path


# -- command line -----------------------------------------------------------------


def _cmd_run(args) -> int:
    config = parse_config(args.config)
    if args.out is not None:
        config.out_dir = args.out
    if args.seed is not None:
        config.seed = args.seed
    traj = evolution.run(config)
    written = write_outputs(traj, config)
    if not args.quiet:
        e = traj.energies
        print(f"run: {len(traj.states) - 1} steps, E {e[0]:.9g} -> {e[-1]:.9g}, "
              f"min alpha' {min(d.min_alpha_prime for d in traj.diagnostics):.4g}")
        print(f"outputs in {Path(config.out_dir).resolve()}: {sorted(written)}")
    if traj.status != "completed":
        print(f"error: {traj.status}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _cmd_audit_model(args) -> int:
    if args.config:
        config = parse_config(args.config)
        model = build_model(config.model_name, **config.model_params)
    else:
        model = build_model(args.model)
    report = audit_assumptions(model)
    print(report)
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _order_table(title: str, ns, values, quiet: bool) -> list:
    orders = [np.log2(values[k] / values[k + 1]) if values[k + 1] > 0 else np.inf
              for k in range(len(values) - 1)]
    if not quiet:
        cells = "  ".join(f"N={n}: {v:.3e}" for n, v in zip(ns, values))
        otxt = ", ".join(f"{o:.2f}" for o in orders)
        print(f"{title}: {cells}  orders [{otxt}]")
    return orders


def _cmd_check_identities(args) -> int:
    ns = [int(s) for s in args.n_list.split(",")]
    window = args.window
    print(f"null-Lagrangian residuals for alpha = rho + 0.1 rho^2 "
          f"(max over rho >= {window}):")
    for idx in kinematics.NULL_LAGRANGIAN_INDICES:
        vals = []
        for n in ns:
            grid = make_grid(n)
            alpha = grid.rho + 0.1 * grid.rho**2
            res = kinematics.null_lagrangian_residual(grid, alpha, idx)
            vals.append(float(np.max(np.abs(res[grid.interior_window(window)]))))
        _order_table(f"  i={idx}", ns, vals, args.quiet)
    print("transport identity (time derivative of Omega vs flux form):")
    vals = []
    for n in ns:
        grid = make_grid(n)
        vals.append(_transport_residual(grid, window))
    _order_table("  max residual", ns, vals, args.quiet)
    return EXIT_OK


def _transport_residual(grid, window: float, dt: float = 1e-7) -> float:
    """Manufactured smooth path alpha(rho, t); compares d/dt Omega^i against
    3 rho^{2/3} d/drho(Omega^i_{,1} v) for the null-Lagrangian rows."""
    rho = grid.rho

    def alpha_at(t):
        return rho * (1.0 + 0.1 * t) + 0.05 * t * rho**2

    def omega_at(t):
        a = alpha_at(t)
        gam = kinematics.gamma_from_alpha(a, grid.ddr(a), rho)
        return kinematics.omega_map(gam, rho), gam

    om_p, _ = omega_at(dt)
    om_m, _ = omega_at(-dt)
    om, gam = omega_at(0.0)
    # velocity of alpha^{1/3} along the path, via the chain rule
    a = alpha_at(0.0)
    dadt = 0.1 * rho + 0.05 * rho**2
    v = dadt / (3.0 * a ** (2.0 / 3.0))
    jac = kinematics.omega_jacobian(gam, rho)
    worst = 0.0
    win = grid.interior_window(window)
    for idx in kinematics.NULL_LAGRANGIAN_INDICES:
        i = idx - 1
        lhs = (om_p[i] - om_m[i]) / (2 * dt)
        rhs = 3.0 * grid.r23 * grid.ddr_pow(jac[i, 0] * v, 1.0 / 3.0)
        worst = max(worst, float(np.max(np.abs((lhs - rhs)[win]))))
    return worst


def _cmd_refine(args) -> int:
    base = parse_config(args.config) if args.config else RunConfig()
    ns = [int(s) for s in args.n_list.split(",")]
    el_vals, ent_vals = [], []
    for n in ns:
        config = RunConfig(**{**asdict(base), "grid_n": n, "steps": 1})
        model = build_model(config.model_name, **config.model_params)
        grid = make_grid(n, config.grid_scheme)
        state0 = evolution.init_state(config.preset, config.stretch, grid,
                                      epsilon=config.epsilon, core=config.core,
                                      alpha_expr=config.alpha_expr, v_expr=config.v_expr)
        res = minimize_step(model, grid, state0, config.tau, tol=config.tol)
        eld, _ = el_residual(model, grid, state0, config.tau, res)
        ent = entropy_defect(model, grid, state0, config.tau, res)
        win = grid.interior_window(args.window)
        el_vals.append(float(np.max(np.abs(eld[win]))))
        # the negative part of the entropy defect is physical dissipation;
        # only its positive part measures discretization error
        ent_vals.append(float(np.max(np.maximum(ent[win], 0.0), initial=0.0)))
    print(f"one-step defects under grid refinement (max over rho >= {args.window}):")
    _order_table("  force-balance defect", ns, el_vals, args.quiet)
    _order_table("  entropy violation   ", ns, ent_vals, args.quiet)
    return EXIT_OK


def _cmd_plot(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(args.out)
    diag = out / "diagnostics.csv"
    if not diag.exists():
        raise OSError(f"no diagnostics file at {diag}")
    data = np.genfromtxt(diag, delimiter=",", names=True)
    fig, ax = plt.subplots(1, 2, figsize=(10, 4))
    ax[0].plot(data["t"], data["E"])
    ax[0].set_xlabel("t")
    ax[0].set_ylabel("total energy")
    ax[1].semilogy(data["t"][1:], np.maximum(np.abs(data["max_el_defect"][1:]), 1e-300))
    ax[1].set_xlabel("t")
    ax[1].set_ylabel("max force-balance defect")
    fig.tight_layout()
    fig.savefig(out / "energy.png", dpi=150)

    snaps = sorted(out.glob("snapshot_*.csv"))
    if snaps:
        fig2, ax2 = plt.subplots(1, 3, figsize=(13, 4))
        for path in snaps:
            s = np.genfromtxt(path, delimiter=",", names=True)
            label = path.stem.split("_")[-1].lstrip("0") or "0"
            ax2[0].plot(s["rho"], s["alpha"], label=f"step {label}")
            ax2[1].plot(s["rho"], s["v"])
            ax2[2].plot(s["rho"], s["gamma"])
        ax2[0].set_xlabel("rho"); ax2[0].set_ylabel("alpha"); ax2[0].legend(fontsize=7)
        ax2[1].set_xlabel("rho"); ax2[1].set_ylabel("v")
        ax2[2].set_xlabel("rho"); ax2[2].set_ylabel("gamma")
        fig2.tight_layout()
        fig2.savefig(out / "profiles.png", dpi=150)
    if not args.quiet:
        print(f"plots written to {out.resolve()}")
    return EXIT_OK


def cli(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="radelast",
        description="Variational solver for radial elastodynamics with a "
                    "positivity-preserving implicit time step.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configured run")
    p_run.add_argument("--config", required=True, help="YAML configuration path")
    p_run.add_argument("--out", default=None, help="output directory override")
    p_run.add_argument("--seed", type=int, default=None, help="seed override")
    p_run.add_argument("--quiet", action="store_true")
    p_run.set_defaults(func=_cmd_run)

    p_audit = sub.add_parser("audit-model", help="numeric audit of the model assumptions")
    p_audit.add_argument("--config", default=None)
    p_audit.add_argument("--model", default="default")
    p_audit.set_defaults(func=_cmd_audit_model)

    p_chk = sub.add_parser("check-identities",
                           help="convergence tables for the structural identities")
    p_chk.add_argument("--n-list", default="32,64,128")
    p_chk.add_argument("--window", type=float, default=0.25)
    p_chk.add_argument("--quiet", action="store_true")
    p_chk.set_defaults(func=_cmd_check_identities)

    p_ref = sub.add_parser("refine", help="grid refinement study of the step defects")
    p_ref.add_argument("--config", default=None)
    p_ref.add_argument("--n-list", default="32,64,128")
    p_ref.add_argument("--window", type=float, default=0.25)
    p_ref.add_argument("--quiet", action="store_true")
    p_ref.set_defaults(func=_cmd_refine)

    p_plot = sub.add_parser("plot", help="render charts from written outputs")
    p_plot.add_argument("--out", required=True, help="directory with run outputs")
    p_plot.add_argument("--quiet", action="store_true")
    p_plot.set_defaults(func=_cmd_plot)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def main():
    sys.exit(cli())


if __name__ == "__main__":
    main()
