"""Command-line entry point: ``kolmo <classify|geom|kernel|simulate|control|harnack> ... operator.json``.

Exit codes: 0 success, 1 input error, 2 negative verdict, 3 numerical
failure, 4 missing ``--seed`` on a stochastic command.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime
import io
import json
import os
import re
import sys

import numpy as np

from . import __version__
from .conditions import check_all, fichera_classify
from .control import (
    Domain,
    attainable_grid,
    attainable_sample,
    forward_endpoint,
    optimal_cost,
    parse_control_class,
    reach_min_energy,
    unit_box,
)
from .errors import KolmoError, NotControllable, TargetNotAttainable
from .group import CylinderParams, CylinderShape, compose, cylinder_contains, distance, inverse, norm_additive, norm_implicit
from .harnack import HarnackParams, chain_to, harnack_bound, strong_max_report
from .kernel import (
    ConstantSolution,
    KernelSolution,
    chapman_check,
    comparison_bounds_check,
    log_gamma_points,
    mean_value_verify,
    normalization_check,
)
from .operator import dilation_exponents, load_operator
from .point import GroupPoint
from .sde import euler_maruyama, sample_exact

EXIT_OK, EXIT_INPUT, EXIT_VERDICT, EXIT_NUMERIC, EXIT_SEED = 0, 1, 2, 3, 4


class InputError(Exception):
    pass


class SeedMissing(Exception):
    pass


# --- parsing helpers ---------------------------------------------------------


def _floats(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.replace(";", ",").split(",") if v.strip()])
    except ValueError as e:
        raise InputError(f"cannot parse numbers from {text!r}") from e


def _point(text: str, N: int) -> GroupPoint:
    v = _floats(text)
    if v.size != N + 1:
        raise InputError(f"a point needs {N + 1} comma-separated values (x_1..x_N, t), got {text!r}")
    return GroupPoint.from_array(v)


def _points_list(text: str, N: int) -> list[GroupPoint]:
    return [_point(p, N) for p in text.split(";") if p.strip()]


def _domain(text: str | None, N: int) -> Domain:
    """``None`` gives the unit box; otherwise ``lo1,..;hi1,..`` boxes joined by ``|``."""
    if text is None:
        return unit_box(N)
    los, his = [], []
    for box in text.split("|"):
        parts = box.split(";")
        if len(parts) != 2:
            raise InputError("a box is 'lo_1,...,lo_{N+1};hi_1,...,hi_{N+1}'")
        lo, hi = _floats(parts[0]), _floats(parts[1])
        if lo.size != N + 1 or hi.size != N + 1:
            raise InputError(f"box corners need {N + 1} values")
        los.append(lo)
        his.append(hi)
    try:
        return Domain(np.array(los), np.array(his))
    except ValueError as e:
        raise InputError(str(e)) from e


def _read_points(path: str | None, N: int) -> np.ndarray:
    fh = sys.stdin if path in (None, "-") else open(path)
    try:
        rows = []
        for row in csv.reader(line for line in fh if line.strip() and not line.startswith("#")):
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if rows:
                    raise InputError(f"non-numeric row {row}")
                continue  # header
        P = np.array(rows, dtype=float).reshape(-1, N + 1) if rows else np.zeros((0, N + 1))
    finally:
        if fh is not sys.stdin:
            fh.close()
    return P


def _threads(requested: int) -> int:
    cap = os.environ.get("KOLMO_THREADS")
    if cap:
        try:
            return max(1, min(requested, int(cap)))
        except ValueError:
            raise InputError("KOLMO_THREADS must be an integer")
    return max(1, requested)


def _need_seed(args):
    if args.seed is None:
        raise SeedMissing(f"'{args.command}' is stochastic and requires --seed")
    return int(args.seed)


# --- output ------------------------------------------------------------------


class Output:
    def __init__(self, args):
        self.args = args
        self.stream = io.StringIO()

    def _meta(self) -> dict:
        return {
            "tool": "kolmo",
            "version": __version__,
            "command": " ".join(sys.argv[1:]),
            "time": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        }

    def csv(self, header, rows):
        if not self.args.no_meta:
            self.stream.write("# " + json.dumps(self._meta(), sort_keys=True) + "\n")
        w = csv.writer(self.stream, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])

    def json(self, obj):
        if not self.args.no_meta:
            obj = {"meta": self._meta(), **obj}
        self.stream.write(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")

    def flush(self):
        text = self.stream.getvalue()
        if self.args.out:
            with open(self.args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o)}")


# --- commands ----------------------------------------------------------------


def cmd_classify(args, spec, out: Output) -> int:
    rep = check_all(spec, args.t)
    d = rep.to_dict()
    if args.z0 is not None and args.normal is not None:
        d["boundary"] = fichera_classify(spec, _point(args.z0, spec.N), _floats(args.normal)).value
    out.json(d)
    if not rep.consistent:
        return EXIT_NUMERIC
    return EXIT_OK if rep.hypoelliptic else EXIT_VERDICT


def cmd_geom(args, spec, out: Output) -> int:
    group = dilation_exponents(spec)
    N = spec.N
    z = _point(args.z, N)
    if args.action == "norm":
        out.csv(["additive", "implicit"], [[norm_additive(z, group), norm_implicit(z, group)]])
    elif args.action == "inverse":
        out.csv([f"x{i + 1}" for i in range(N)] + ["t"], [inverse(z, spec).as_array()])
    else:
        if args.w is None:
            raise InputError(f"'geom {args.action}' needs --w")
        w = _point(args.w, N)
        if args.action == "compose":
            out.csv([f"x{i + 1}" for i in range(N)] + ["t"], [compose(z, w, spec).as_array()])
        elif args.action == "distance":
            out.csv(["d_zw", "d_wz"], [[distance(z, w, spec, group), distance(w, z, spec, group)]])
        else:
            shape = CylinderShape(args.shape)
            inside = cylinder_contains(z, w, args.r, shape, spec, group, CylinderParams())
            out.csv(["inside"], [[int(inside)]])
    return EXIT_OK


def cmd_kernel(args, spec, out: Output) -> int:
    N = spec.N
    if args.action == "eval":
        pole = _point(args.pole, N) if args.pole else GroupPoint.origin(N)
        P = _read_points(args.points, N)
        lg = log_gamma_points(spec, P[:, :N], P[:, N], pole.x, pole.t) if len(P) else np.zeros(0)
        header = [f"x{i + 1}" for i in range(N)] + ["t", "log_gamma", "gamma"]
        out.csv(header, [list(p) + [v, float(np.exp(v))] for p, v in zip(P, lg)])
    elif args.action == "meanvalue":
        seed = _need_seed(args)
        z0 = _point(args.z0, N) if args.z0 else GroupPoint.origin(N)
        u = ConstantSolution(1.0) if args.zeta is None else KernelSolution(_point(args.zeta, N))
        res = mean_value_verify(spec, z0, args.r, u, samples=args.samples, seed=seed, threads=_threads(args.threads))
        out.csv(["estimate", "exact", "rel_error", "std_error", "samples"],
                [[res.estimate, res.exact, res.rel_error, res.std_error, res.samples]])
    elif args.action == "chapman":
        z = _point(args.z, N) if args.z else GroupPoint(np.zeros(N), 1.0)
        zeta = _point(args.zeta, N) if args.zeta else GroupPoint.origin(N)
        s = 0.5 * (z.t + zeta.t) if args.s is None else args.s
        err = chapman_check(spec, z, zeta, s, n_nodes=args.nodes)
        norm = normalization_check(spec, z.t - zeta.t, n_nodes=args.nodes)
        out.csv(["s", "rel_error", "normalization"], [[s, err, norm]])
    else:
        seed = _need_seed(args)
        levels = tuple(_floats(args.levels))
        rep = comparison_bounds_check(spec, levels=levels, samples=args.samples, seed=seed)
        out.json(dataclasses.asdict(rep))
    return EXIT_OK


def cmd_simulate(args, spec, out: Output) -> int:
    seed = _need_seed(args)
    x0 = _floats(args.x0) if args.x0 else np.zeros(spec.N)
    if x0.size != spec.N:
        raise InputError(f"--x0 needs {spec.N} values")
    threads = _threads(args.threads)
    if args.method == "exact":
        batch = sample_exact(spec, x0, args.t, args.n, seed, threads=threads)
    else:
        if args.dt is None:
            raise InputError("--method em needs --dt")
        batch = euler_maruyama(spec, x0, args.t, args.dt, args.n, seed, threads=threads)
    out.csv([f"x{i + 1}" for i in range(spec.N)], batch.points)
    return EXIT_OK


def cmd_control(args, spec, out: Output) -> int:
    N = spec.N
    if args.action == "reach":
        x0, x1 = _floats(args.x0), _floats(args.x1)
        ctl = reach_min_energy(spec, x0, args.t0, x1, args.t1, steps=args.steps)
        end = forward_endpoint(spec, x0, ctl)
        if args.format == "json":
            out.json({"T": ctl.T, "steps": ctl.steps, "energy": ctl.energy, "omega": ctl.omega, "endpoint": end})
        else:
            m = ctl.omega.shape[1]
            rows = [[(i + 0.5) * ctl.h] + list(w) for i, w in enumerate(ctl.omega)]
            out.csv(["s"] + [f"omega{k + 1}" for k in range(m)], rows)
    elif args.action == "cost":
        x0, x1 = _floats(args.x0), _floats(args.x1)
        out.csv(["cost"], [[optimal_cost(spec, x0, x1, args.tau, convention=args.convention)]])
    else:
        z0 = _point(args.z0, N) if args.z0 else GroupPoint.origin(N)
        domain = _domain(args.domain, N)
        cls = parse_control_class(args.control_class)
        if args.sample:
            seed = _need_seed(args)
            P = attainable_sample(spec, z0, domain, cls, args.sample, seed)
            out.csv([f"x{i + 1}" for i in range(N)] + ["t"], P)
        else:
            grid = attainable_grid(spec, z0, domain, cls, args.resolution)
            if args.format == "json":
                out.json(grid.to_dict())
            else:
                out.csv([f"x{i + 1}" for i in range(N)] + ["t"], grid.occupied_points())
    return EXIT_OK


def _harnack_params(args) -> HarnackParams:
    try:
        return HarnackParams(c=args.c, h=args.h, r_cap=args.r_cap, literal_delta=args.literal_delta)
    except ValueError as e:
        raise InputError(str(e)) from e


def cmd_harnack(args, spec, out: Output) -> int:
    N = spec.N
    params = _harnack_params(args)
    domain = _domain(args.domain, N)
    if args.action == "chain":
        z0, z = _point(args.z0, N), _point(args.target, N)
        ch = chain_to(spec, z0, z, domain, params)
        if args.format == "json":
            out.json(ch.to_dict())
        else:
            rows = [list(p.as_array()) + [s, (ch.radii[j] if j < ch.k else 0.0)]
                    for j, (p, s) in enumerate(zip(ch.points, ch.s))]
            out.csv([f"x{i + 1}" for i in range(N)] + ["t", "s", "radius"], rows)
    elif args.action == "bound":
        z0 = _point(args.z0, N)
        res = harnack_bound(spec, z0, _points_list(args.targets, N), domain, params)
        rows = [list(z.as_array()) + [b] for z, b in res]
        out.csv([f"x{i + 1}" for i in range(N)] + ["t", "bound"], rows)
    else:
        if args.z0:
            z0 = _point(args.z0, N)
        else:
            lo, hi = domain.bounds
            z0 = GroupPoint(0.5 * (lo[:N] + hi[:N]), hi[N] - 0.05 * (hi[N] - lo[N]))
        rep = strong_max_report(spec, z0, domain, params, args.resolution, parse_control_class(args.control_class))
        out.json(rep.to_dict())
    return EXIT_OK


# --- argument parser ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kolmo", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"kolmo {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--no-meta", action="store_true", help="omit the metadata header")
    common.add_argument("--out", help="write the primary output here instead of stdout")
    common.add_argument("--seed", type=int, default=None)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("classify", parents=[common], help="hypoellipticity conditions")
    c.add_argument("operator", help="operator JSON file")
    c.add_argument("--t", type=float, default=1.0, help="time for the Gramian test")
    c.add_argument("--z0", help="boundary point for the pointwise classifier")
    c.add_argument("--normal", help="outer normal (nu_x, nu_t) at --z0")

    g = sub.add_parser("geom", parents=[common], help="group law, norms and cylinders")
    g.add_argument("action", choices=["norm", "inverse", "compose", "distance", "cylinder"])
    g.add_argument("operator", help="operator JSON file")
    g.add_argument("--z", required=True)
    g.add_argument("--w", help="second point, or the cylinder center")
    g.add_argument("--r", type=float, default=1.0)
    g.add_argument("--shape", default="Q", choices=[s.value for s in CylinderShape])

    k = sub.add_parser("kernel", parents=[common], help="fundamental solution checks")
    k.add_argument("action", choices=["eval", "meanvalue", "chapman", "bounds"])
    k.add_argument("operator", help="operator JSON file")
    k.add_argument("--pole")
    k.add_argument("--points", help="CSV of points x..,t (default stdin)")
    k.add_argument("--z0")
    k.add_argument("--z")
    k.add_argument("--zeta")
    k.add_argument("--r", type=float, default=1.0)
    k.add_argument("--s", type=float)
    k.add_argument("--nodes", type=int, default=64)
    k.add_argument("--samples", type=int, default=1_000_000)
    k.add_argument("--levels", default="1,10,100,1000")
    k.add_argument("--threads", type=int, default=1)

    s = sub.add_parser("simulate", parents=[common], help="sample the diffusion")
    s.add_argument("operator", help="operator JSON file")
    s.add_argument("--method", choices=["exact", "em"], default="exact")
    s.add_argument("--x0")
    s.add_argument("--t", type=float, default=1.0)
    s.add_argument("--dt", type=float)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--threads", type=int, default=1)

    ct = sub.add_parser("control", parents=[common], help="minimum energy and attainable sets")
    ct.add_argument("action", choices=["reach", "cost", "attainable"])
    ct.add_argument("operator", help="operator JSON file")
    ct.add_argument("--x0")
    ct.add_argument("--x1")
    ct.add_argument("--t0", type=float, default=0.0)
    ct.add_argument("--t1", type=float, default=1.0)
    ct.add_argument("--tau", type=float, default=1.0)
    ct.add_argument("--steps", type=int)
    ct.add_argument("--convention", choices=["2C", "C"], default="2C")
    ct.add_argument("--z0")
    ct.add_argument("--domain", help="boxes 'lo;hi' joined by '|' (default unit box)")
    ct.add_argument("--class", dest="control_class", default="bounded:1")
    ct.add_argument("--resolution", type=int, default=64)
    ct.add_argument("--sample", type=int, default=0, help="sample this many curve endpoints instead")
    ct.add_argument("--format", choices=["csv", "json"], default="csv")

    h = sub.add_parser("harnack", parents=[common], help="Harnack chains and propagation")
    h.add_argument("action", choices=["chain", "bound", "maxprinciple"])
    h.add_argument("operator", help="operator JSON file")
    h.add_argument("--z0")
    h.add_argument("--target")
    h.add_argument("--targets", help="points separated by ';'")
    h.add_argument("--domain")
    h.add_argument("--c", type=float, default=float(np.e))
    h.add_argument("--h", type=float, default=None)
    h.add_argument("--r-cap", type=float, default=1.0)
    h.add_argument("--literal-delta", action="store_true")
    h.add_argument("--class", dest="control_class", default="bounded:1")
    h.add_argument("--resolution", type=int, default=8)
    h.add_argument("--format", choices=["csv", "json"], default="json")
    return p


COMMANDS = {
    "classify": cmd_classify,
    "geom": cmd_geom,
    "kernel": cmd_kernel,
    "simulate": cmd_simulate,
    "control": cmd_control,
    "harnack": cmd_harnack,
}

REQUIRED = {
    ("control", "reach"): ("x0", "x1"),
    ("control", "cost"): ("x0", "x1"),
    ("harnack", "chain"): ("z0", "target"),
    ("harnack", "bound"): ("z0", "targets"),
}


_FLAGS = {"--no-meta", "--literal-delta", "--help", "--version"}
_NEGATIVE = re.compile(r"^-[\d.]")


def _attach_negative_values(argv: list[str]) -> list[str]:
    """Turn ``--z -1,2,0`` into ``--z=-1,2,0``; argparse would read the value as an option."""
    out = []
    i = 0
    while i < len(argv):
        a = argv[i]
        if (a.startswith("--") and "=" not in a and a not in _FLAGS and i + 1 < len(argv)
                and _NEGATIVE.match(argv[i + 1])):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
        else:
            out.append(a)
            i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _attach_negative_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INPUT
    try:
        for name in REQUIRED.get((args.command, getattr(args, "action", None)), ()):
            if getattr(args, name) is None:
                raise InputError(f"--{name} is required")
        try:
            spec = load_operator(args.operator, strict=args.command not in ("classify", "simulate"))
        except (KolmoError, KeyError, TypeError, ValueError, OSError) as e:
            raise InputError(f"cannot load operator: {e}") from e
        out = Output(args)
        code = COMMANDS[args.command](args, spec, out)
        out.flush()
        return code
    except BrokenPipeError:
        # reader closed early (e.g. `| head`); silence the flush at interpreter exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
    except SeedMissing as e:
        print(f"kolmo: {e}", file=sys.stderr)
        return EXIT_SEED
    except InputError as e:
        print(f"kolmo: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (NotControllable, TargetNotAttainable) as e:
        print(f"kolmo: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_VERDICT
    except (KolmoError, np.linalg.LinAlgError, FloatingPointError) as e:
        print(f"kolmo: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
