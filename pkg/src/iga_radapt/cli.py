"""Command line entry point: train, convergence, show-net, list-cases."""
import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import net as netmod
from .multipatch import build_dof_map
from .problems import catalog, error_norms, get_case, max_gradient, solve_case
from .radapt import STRATEGIES, PipelineConfig, run_pipeline
from .tensor_spline import TensorSpace

log = logging.getLogger("iga_radapt")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    case: str = "poisson_square_corner"
    strategy: str = "PA"
    sampling: Optional[str] = None       # default from the case type
    degree: int = 2
    levels: int = 6
    weights: Optional[str] = None        # None: shipped default weights
    seed: int = 0
    out: str = "out"
    early_stop: bool = False
    bai_override: bool = False           # report errors for non-regular maps anyway
    quad_boost: int = 1
    adapt: bool = True
    M: int = 20
    iters: int = 10
    theta_n: int = 8
    solver: str = "auto"

    def validate(self):
        get_case(self.case)
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}")
        if self.sampling not in (None, "L2", "H1"):
            raise ConfigError("sampling must be 'L2' or 'H1'")
        if self.degree < 1 or self.levels < 0 or self.quad_boost < 1:
            raise ConfigError("degree >= 1, levels >= 0 and quad_boost >= 1 required")
        if self.M < 1 or self.iters < 1 or self.theta_n < 1:
            raise ConfigError("M, iters and theta_n must be positive")
        return self


@dataclass(frozen=True)
class TrainCommandConfig:
    samples: int = 50_000
    width: int = 256
    epochs: int = 40
    batch: int = 128
    lr: float = 3e-4
    seed: int = 0
    validation: int = 2_000
    fit: float = 1.0
    supervise: float = 1.0
    out: str = "out"

    def validate(self):
        if self.samples < 1 or self.width < 1 or self.epochs < 0 or self.batch < 1:
            raise ConfigError("samples, width, batch must be positive and epochs >= 0")
        return self


def _typed(cls, raw):
    """Instantiate a config dataclass, rejecting unknown keys and wrong types."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    vals = {}
    for key, v in raw.items():
        default = known[key].default
        if v is None or default is None:
            vals[key] = v
            continue
        if isinstance(default, bool):
            if not isinstance(v, bool):
                raise ConfigError(f"{key} must be a boolean")
        elif isinstance(default, int):
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{key} must be an integer")
        elif isinstance(default, float):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{key} must be a number")
            v = float(v)
        elif isinstance(default, str) and not isinstance(v, str):
            raise ConfigError(f"{key} must be a string")
        vals[key] = v
    return cls(**vals).validate()


def load_config(cls, path, seed=None, out=None):
    raw = json.loads(Path(path).read_text()) if path else {}
    if seed is not None:
        raw["seed"] = seed
    if out is not None:
        raw["out"] = out
    return _typed(cls, raw)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows, comments=()):
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _savefig(fig, path):
    import matplotlib
    matplotlib.rcParams["svg.hashsalt"] = "iga-radapt"
    fig.savefig(path, format="svg", metadata={"Date": None})


# --- commands ------------------------------------------------------------------

def cmd_train(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    tcfg = netmod.TrainConfig(samples=cfg.samples, width=cfg.width, epochs=cfg.epochs,
                              batch=cfg.batch, lr=cfg.lr, seed=cfg.seed,
                              validation=cfg.validation, fit=cfg.fit, supervise=cfg.supervise)
    weights, history = netmod.train(tcfg)
    weights.save(out / "weights.json")
    write_csv(out / "loss.csv", ["epoch", "train_loss", "validation_loss"],
              [(i, a, b) for i, (a, b) in enumerate(history)])
    return out / "weights.json"


def _load_weights(cfg):
    if cfg.weights:
        return netmod.ResNetWeights.load(cfg.weights)
    return netmod.load_default_weights()


def _pipeline_config(cfg):
    return PipelineConfig(degree=cfg.degree, theta_n=cfg.theta_n, M=cfg.M, iters=cfg.iters,
                          seed=cfg.seed, early_stop=cfg.early_stop, solver=cfg.solver)


def adapted_domain(cfg, case):
    """Deformed domain (or None when adaptation is off) and the pipeline result."""
    if not cfg.adapt:
        return None, None
    sampling = cfg.sampling or case.sampling
    res = run_pipeline(case, cfg.strategy, sampling, _load_weights(cfg), _pipeline_config(cfg))
    return res.domain, res


CONVERGENCE_HEADER = ["level", "h", "dofs", "l2_uniform", "h1_uniform", "l2_adapted",
                      "h1_adapted", "max_grad_uniform", "max_grad_adapted"]


def convergence_rows(cfg):
    """Rows of the convergence table plus warning strings."""
    case = get_case(cfg.case)
    initial = case.build_domain()
    deformed, res = adapted_domain(cfg, case)
    warn = []
    use_adapted = deformed is not None
    if res is not None and not res.all_regular:
        bad = [k for k, r in enumerate(res.regular) if not r]
        msg = f"adapted parameterization is not regular on patches {bad}"
        warn.append(msg)
        log.warning(msg)
        use_adapted = cfg.bai_override
    rows = []
    nan = float("nan")
    for level in range(cfg.levels + 1):
        n = 2 ** (level + 1)
        space = TensorSpace.uniform(cfg.degree, n)
        vals = {}
        for label, dom in (("uniform", initial), ("adapted", deformed if use_adapted else None)):
            if dom is None:
                vals[label] = (nan, nan, nan)
                continue
            dofmap = build_dof_map(dom, space)
            vals["dofs"] = dofmap.ndofs
            uh = solve_case(case, dom, space, dofmap, cfg.solver)
            if case.has_exact:
                l2, h1 = error_norms(uh, case, boost=cfg.quad_boost)
            else:
                l2 = h1 = nan
            vals[label] = (l2, h1, max_gradient(uh))
        rows.append((level, 1.0 / n, vals["dofs"], vals["uniform"][0], vals["uniform"][1],
                     vals["adapted"][0], vals["adapted"][1], vals["uniform"][2], vals["adapted"][2]))
    return rows, warn, res


def cmd_convergence(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, warn, res = convergence_rows(cfg)
    stem = f"{cfg.case}_{cfg.strategy}"
    csv_path = out / f"{stem}_convergence.csv"
    write_csv(csv_path, CONVERGENCE_HEADER, rows, comments=[f"warning: {w}" for w in warn])
    plot_convergence(rows, get_case(cfg.case), out / f"{stem}_convergence.svg")
    return csv_path


def plot_convergence(rows, case, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    arr = np.array(rows, dtype=float)
    dofs = arr[:, 2]
    fig, ax = plt.subplots(figsize=(5, 4))
    if case.has_exact:
        series = [(3, "L2 uniform"), (4, "H1 uniform"), (5, "L2 adapted"), (6, "H1 adapted")]
        ax.set_ylabel("error")
    else:
        series = [(7, "max |grad| uniform"), (8, "max |grad| adapted")]
        ax.set_ylabel("max |grad u_h|")
    for col, label in series:
        y = arr[:, col]
        if np.any(np.isfinite(y)):
            ax.loglog(dofs, y, "o-" if "uniform" in label else "s--", label=label)
    ax.set_xlabel("degrees of freedom")
    ax.set_title(case.name)
    ax.legend()
    fig.tight_layout()
    _savefig(fig, path)
    plt.close(fig)


def parameter_lines(net, n_lines=9, samples=65):
    """Polylines of the parameter lines s = const and t = const."""
    from .bezier_geom import eval_quad
    u = np.linspace(0.0, 1.0, n_lines)
    v = np.linspace(0.0, 1.0, samples)
    lines = [eval_quad(net, np.full_like(v, c), v) for c in u]
    lines += [eval_quad(net, v, np.full_like(v, c)) for c in u]
    return lines


def plot_nets(domain, path, title=""):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 5))
    for net in domain.patches:
        for line in parameter_lines(net):
            ax.plot(line[:, 0], line[:, 1], color="0.6", lw=0.6)
        P = net.points
        for i in range(3):
            ax.plot(P[i, :, 0], P[i, :, 1], "k-", lw=1.0)
            ax.plot(P[:, i, 0], P[:, i, 1], "k-", lw=1.0)
        ax.plot(P[..., 0].ravel(), P[..., 1].ravel(), "ro", ms=3)
    ax.set_aspect("equal")
    ax.set_title(title)
    fig.tight_layout()
    _savefig(fig, path)
    plt.close(fig)


def cmd_show_net(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    case = get_case(cfg.case)
    deformed, _ = adapted_domain(cfg, case)
    domain = deformed if deformed is not None else case.build_domain()
    stem = f"{cfg.case}_{cfg.strategy}_net" if cfg.adapt else f"{cfg.case}_initial_net"
    rows = [(k, i, j, net.points[i, j, 0], net.points[i, j, 1])
            for k, net in enumerate(domain.patches) for i in range(3) for j in range(3)]
    write_csv(out / f"{stem}.csv", ["patch", "i", "j", "x", "y"], rows)
    plot_nets(domain, out / f"{stem}.svg", stem)
    return out / f"{stem}.svg"


def cmd_list_cases():
    for name, case in catalog().items():
        print(f"{name:24s} {case.kind:8s} {case.formula}")


def main(argv=None):
    parser = argparse.ArgumentParser(prog="iga-radapt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "convergence", "show-net"):
        p = sub.add_parser(name)
        p.add_argument("config", nargs="?", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
    sub.add_parser("list-cases")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "list-cases":
            cmd_list_cases()
            return 0
        cls = TrainCommandConfig if args.command == "train" else ExperimentConfig
        cfg = load_config(cls, args.config, args.seed, args.out)
        if args.command == "train":
            print(cmd_train(cfg))
        elif args.command == "convergence":
            print(cmd_convergence(cfg))
        else:
            print(cmd_show_net(cfg))
    except (ConfigError, KeyError, netmod.WeightsError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
