"""Command-line front end.

Subcommands: validate, ingest, gen, perturb, quotient, wasserstein, ugw,
ugw-inf, ugh, usturm, bounds, matrix, mds.

Exit codes: 0 success, 2 validation failure, 3 parse error,
4 infeasible input / size-cap refusal.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import glob
import json
import os
import sys

import numpy as np

from . import bounds as bounds_mod
from .gw import (FwConfig, SizeCapError, dgw_fw, ugh_exact, ugw_fw,
                 ugw_inf_exact, usturm_bruteforce)
from .phylo import NewickError, parse_newick_multi, tree_shape_space
from .spaces import (load_space, quotient, save_space, space_from_json,
                     space_to_json, validate)
from .synth import GenSpec, gen_ultrametric, perturb
from .transport import (ScalarMeasure, w_halfline, w_line_classical,
                        w_quantile, w_ultrametric)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PARSE = 3
EXIT_INFEASIBLE = 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _fmt(x):
    return "%.17g" % x


def _emit(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _load_space_checked(path, mode="ultra_dissimilarity", skip_diag=False):
    try:
        space = load_space(path)
    except (json.JSONDecodeError, KeyError) as exc:
        raise CliError("cannot parse %s: %s" % (path, exc), EXIT_PARSE)
    except (OSError, ValueError) as exc:
        raise CliError("cannot load %s: %s" % (path, exc), EXIT_VALIDATION)
    if not skip_diag:
        rep = validate(space, mode=mode)
        if not rep.ok:
            raise CliError("%s failed %s validation: %r"
                           % (path, mode, rep.violations[:5]), EXIT_VALIDATION)
    return space


def _parse_p(text):
    if text in ("inf", "Inf", "INF", "infinity"):
        return np.inf
    return float(text)


def _load_measure(path):
    try:
        with open(path) as f:
            obj = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError("cannot parse %s: %s" % (path, exc), EXIT_PARSE)
    if isinstance(obj, list):
        return np.array(obj, dtype=float)
    if "x" in obj:
        return ScalarMeasure(np.array(obj["x"], float), np.array(obj["m"], float))
    return np.array(obj["m"], dtype=float)


def _config_value(args, cfgfile, key, default):
    val = getattr(args, key.replace("-", "_"), None)
    if val is not None:
        return val
    if key in cfgfile:
        return cfgfile[key]
    return default


def _resolved(args, cfgfile, spec):
    """Resolve option values with precedence flags > config file > defaults
    and return both the values and the loggable config dict."""
    out = {}
    for key, default in spec.items():
        out[key] = _config_value(args, cfgfile, key, default)
    return out


def _load_config_file(path):
    if not path:
        return {}
    try:
        with open(path) as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError("cannot read config %s: %s" % (path, exc), EXIT_PARSE)


# ---------------------------------------------------------------------------
# subcommand implementations


def _cmd_validate(args):
    space = _load_space_checked(args.space, skip_diag=True)
    rep = validate(space, mode=args.mode)
    _emit({"ok": rep.ok, "mode": rep.mode,
           "violations": [list(v) for v in rep.violations]}, args.out)
    return EXIT_OK if rep.ok else EXIT_VALIDATION


def _cmd_ingest(args):
    try:
        with open(args.newick) as f:
            trees = parse_newick_multi(f.read())
    except NewickError as exc:
        raise CliError("newick parse error in %s: %s" % (args.newick, exc),
                       EXIT_PARSE)
    except OSError as exc:
        raise CliError(str(exc), EXIT_PARSE)
    spaces = [tree_shape_space(t, unit_edges=args.unit_edges,
                               measure=args.measure) for t in trees]
    if len(spaces) == 1:
        if args.out:
            save_space(spaces[0], args.out, kind="ultra_dissimilarity")
        else:
            _emit(space_to_json(spaces[0], kind="ultra_dissimilarity"), None)
    else:
        base = args.out or "tree"
        stem, ext = os.path.splitext(base)
        for i, sp in enumerate(spaces):
            save_space(sp, "%s_%d%s" % (stem, i, ext or ".json"),
                       kind="ultra_dissimilarity")
    return EXIT_OK


def _cmd_gen(args):
    cfgfile = _load_config_file(args.config)
    vals = _resolved(args, cfgfile, {
        "k": 3, "samples_per_block": 100, "subsample": 30, "seed": 0})
    spec = GenSpec(k=int(vals["k"]),
                   samples_per_block=int(vals["samples_per_block"]),
                   subsample=int(vals["subsample"]), seed=int(vals["seed"]))
    space = gen_ultrametric(spec)
    obj = space_to_json(space, kind="ultrametric")
    obj["config"] = vals
    if args.out:
        with open(args.out, "w") as f:
            json.dump(obj, f)
            f.write("\n")
    else:
        _emit(obj, None)
    return EXIT_OK


def _cmd_perturb(args):
    space = _load_space_checked(args.space, mode="ultrametric")
    out = perturb(space, args.t, seed=args.seed or 0)
    obj = space_to_json(out, kind="ultrametric")
    obj["config"] = {"t": args.t, "seed": args.seed or 0}
    _emit(obj, args.out)
    return EXIT_OK


def _cmd_quotient(args):
    space = _load_space_checked(args.space)
    q = quotient(space, args.t)
    obj = space_to_json(q.quotient)
    obj["level"] = q.level
    obj["blocks"] = [list(b) for b in q.blocks]
    _emit(obj, args.out)
    return EXIT_OK


def _cmd_wasserstein(args):
    p = _parse_p(args.p)
    a = _load_measure(args.alpha)
    b = _load_measure(args.beta)
    if args.ground == "halfline":
        if not isinstance(a, ScalarMeasure) or not isinstance(b, ScalarMeasure):
            raise CliError("halfline ground needs ScalarMeasure files "
                           '({"x": [...], "m": [...]})', EXIT_VALIDATION)
        if args.q is not None:
            value = w_quantile(a, b, p, float(args.q))
        else:
            value = w_halfline(a, b, p)
    elif args.ground == "line":
        value = w_line_classical(a, b, p)
    else:
        space = _load_space_checked(args.ground, mode="ultrametric")
        if isinstance(a, ScalarMeasure) or isinstance(b, ScalarMeasure):
            raise CliError("ultrametric ground needs plain mass vectors",
                           EXIT_VALIDATION)
        value = w_ultrametric(space, a, b, p)
    _emit({"value": value, "method": "wasserstein",
           "config": {"p": args.p, "q": args.q, "ground": args.ground}},
          args.out)
    return EXIT_OK


def _fw_config(args, cfgfile):
    vals = _resolved(args, cfgfile, {
        "restarts": 40, "iters": 5000, "seed": 0, "step": "exact_line_search",
        "hitrun_steps": 10, "tol": 1e-10})
    return FwConfig(restarts=int(vals["restarts"]),
                    iterations=int(vals["iters"]),
                    step_rule=str(vals["step"]), seed=int(vals["seed"]),
                    hitrun_steps=int(vals["hitrun_steps"]),
                    tol_stationarity=float(vals["tol"])), vals


def _cmd_ugw(args):
    x = _load_space_checked(args.a, mode="ultrametric")
    y = _load_space_checked(args.b, mode="ultrametric")
    p = _parse_p(args.p)
    cfgfile = _load_config_file(args.config)
    cfg, vals = _fw_config(args, cfgfile)
    if p == np.inf:
        raise CliError("use ugw-inf for p=inf", EXIT_INFEASIBLE)
    res = dgw_fw(x, y, p, cfg) if args.classical else ugw_fw(x, y, p, cfg)
    _emit({"value": res.value, "method": res.method,
           "coupling": res.coupling.tolist(), "trace": res.trace,
           "config": dict(vals, p=args.p, classical=bool(args.classical))},
          args.out)
    return EXIT_OK


def _cmd_ugw_inf(args):
    x = _load_space_checked(args.a, mode="ultrametric")
    y = _load_space_checked(args.b, mode="ultrametric")
    res = ugw_inf_exact(x, y)
    _emit({"value": res.value, "method": res.method, "level": res.level,
           "matching": [[list(a), list(b)] for a, b in res.matching]},
          args.out)
    return EXIT_OK


def _cmd_ugh(args):
    x = _load_space_checked(args.a, mode="ultrametric")
    y = _load_space_checked(args.b, mode="ultrametric")
    _emit({"value": ugh_exact(x, y), "method": "ugh"}, args.out)
    return EXIT_OK


def _cmd_usturm(args):
    x = _load_space_checked(args.a, mode="ultrametric")
    y = _load_space_checked(args.b, mode="ultrametric")
    try:
        res = usturm_bruteforce(x, y, _parse_p(args.p), max_n=args.max_n)
    except SizeCapError as exc:
        raise CliError(str(exc), EXIT_INFEASIBLE)
    _emit({"value": res.value, "method": res.method,
           "matching": [list(m) for m in res.matching],
           "config": {"p": args.p, "max_n": args.max_n}}, args.out)
    return EXIT_OK


_BOUND_FNS = {
    "uslb": bounds_mod.uslb, "utlb": bounds_mod.utlb, "uflb": bounds_mod.uflb,
    "slb": bounds_mod.slb, "tlb": bounds_mod.tlb, "flb": bounds_mod.flb,
}


def _cmd_bounds(args):
    x = _load_space_checked(args.a)
    y = _load_space_checked(args.b)
    p = _parse_p(args.p)
    which = [w.strip() for w in args.which.split(",") if w.strip()]
    bad = [w for w in which if w not in _BOUND_FNS]
    if bad:
        raise CliError("unknown bounds: %s" % ",".join(bad), EXIT_VALIDATION)
    values = {w: _BOUND_FNS[w](x, y, p) for w in which}
    _emit({"values": values, "config": {"p": args.p, "which": args.which}},
          args.out)
    return EXIT_OK


def _matrix_method(method, p, cfg_seed, fw_vals):
    if method in _BOUND_FNS:
        fn = _BOUND_FNS[method]
        return lambda x, y, seed: fn(x, y, p)
    if method == "ugw-inf":
        return lambda x, y, seed: ugw_inf_exact(x, y).value
    if method == "ugh":
        return lambda x, y, seed: ugh_exact(x, y)
    if method == "ugw-fw":
        def run(x, y, seed):
            cfg = FwConfig(restarts=int(fw_vals["restarts"]),
                           iterations=int(fw_vals["iters"]),
                           step_rule=str(fw_vals["step"]), seed=seed,
                           hitrun_steps=int(fw_vals["hitrun_steps"]),
                           tol_stationarity=float(fw_vals["tol"]))
            return ugw_fw(x, y, p, cfg).value
        return run
    raise CliError("unknown matrix method %r" % method, EXIT_VALIDATION)


def _cmd_matrix(args):
    cfgfile = _load_config_file(args.config)
    fw_vals = _resolved(args, cfgfile, {
        "restarts": 40, "iters": 5000, "seed": 0, "step": "exact_line_search",
        "hitrun_steps": 10, "tol": 1e-10})
    seed = int(fw_vals["seed"])
    p = _parse_p(args.p)
    spaces = []
    if args.dir:
        paths = sorted(glob.glob(os.path.join(args.dir, "*.json")))
        for path in paths:
            name = os.path.splitext(os.path.basename(path))[0]
            try:
                spaces.append((name, _load_space_checked(path)))
            except CliError:
                if not args.skip_invalid:
                    raise
    elif args.newick_dir:
        paths = sorted(glob.glob(os.path.join(args.newick_dir, "*")))
        for path in paths:
            name = os.path.splitext(os.path.basename(path))[0]
            try:
                with open(path) as f:
                    trees = parse_newick_multi(f.read())
            except (NewickError, OSError, UnicodeDecodeError) as exc:
                if args.skip_invalid:
                    continue
                raise CliError("newick parse error in %s: %s" % (path, exc),
                               EXIT_PARSE)
            for i, t in enumerate(trees):
                suffix = "" if len(trees) == 1 else "_%d" % i
                spaces.append((name + suffix,
                               tree_shape_space(t, unit_edges=True)))
    else:
        raise CliError("matrix needs --dir or --newick-dir", EXIT_VALIDATION)
    if len(spaces) < 2:
        raise CliError("matrix needs at least 2 spaces", EXIT_VALIDATION)
    run = _matrix_method(args.method, p, seed, fw_vals)
    n = len(spaces)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]

    def job(k):
        i, j = pairs[k]
        pair_seed = int(np.random.SeedSequence(seed, spawn_key=(k,))
                        .generate_state(1)[0])
        try:
            return run(spaces[i][1], spaces[j][1], pair_seed)
        except SizeCapError as exc:
            raise CliError(str(exc), EXIT_INFEASIBLE)

    threads = args.threads or os.cpu_count() or 1
    mat = np.zeros((n, n))
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as ex:
        for k, val in enumerate(ex.map(job, range(len(pairs)))):
            i, j = pairs[k]
            mat[i, j] = mat[j, i] = val
    ids = [name for name, _ in spaces]
    config = {"method": args.method, "p": args.p, "seed": seed,
              "threads_requested": args.threads, "format": args.format}
    if args.method == "ugw-fw":
        config.update({k: fw_vals[k] for k in
                       ("restarts", "iters", "step", "hitrun_steps", "tol")})
    if args.format == "csv":
        lines = ["," + ",".join(ids)]
        for i in range(n):
            lines.append(ids[i] + "," + ",".join(_fmt(v) for v in mat[i]))
        text = "\n".join(lines) + "\n"
        if args.out:
            with open(args.out, "w") as f:
                f.write(text)
        else:
            sys.stdout.write(text)
        # resolved run configuration goes to stderr to keep the CSV clean
        sys.stderr.write(json.dumps(config, sort_keys=True) + "\n")
    else:
        _emit({"ids": ids, "matrix": mat.tolist(), "config": config}, args.out)
    return EXIT_OK


def classical_mds(matrix, dim):
    """Classical MDS: double-center the squared distances, take the top
    eigenpairs, scale eigenvectors by root eigenvalues.  Negative
    eigenvalues are clamped to zero (with a warning on stderr).  Signs are
    fixed so each coordinate's largest-magnitude entry is positive."""
    d = np.asarray(matrix, dtype=float)
    n = d.shape[0]
    if dim > n:
        raise ValueError("dim cannot exceed the number of points")
    j = np.eye(n) - np.full((n, n), 1.0 / n)
    b = -0.5 * j @ (d ** 2) @ j
    vals, vecs = np.linalg.eigh(b)
    order = np.argsort(vals)[::-1][:dim]
    vals = vals[order]
    vecs = vecs[:, order]
    if np.any(vals < -1e-12):
        sys.stderr.write("warning: negative eigenvalues clamped to 0 "
                         "(matrix is not Euclidean-embeddable)\n")
    vals = np.clip(vals, 0.0, None)
    coords = vecs * np.sqrt(vals)
    for c in range(coords.shape[1]):
        k = np.argmax(np.abs(coords[:, c]))
        if coords[k, c] < 0:
            coords[:, c] = -coords[:, c]
    return coords


def _read_matrix(path):
    try:
        if path.endswith(".json"):
            with open(path) as f:
                obj = json.load(f)
            return obj["ids"], np.array(obj["matrix"], dtype=float)
        with open(path) as f:
            rows = [line.rstrip("\n").split(",") for line in f
                    if line.strip() and not line.startswith("#")]
        ids = rows[0][1:]
        mat = np.array([[float(v) for v in row[1:]] for row in rows[1:]])
        return ids, mat
    except (OSError, ValueError, KeyError, IndexError,
            json.JSONDecodeError) as exc:
        raise CliError("cannot read matrix %s: %s" % (path, exc), EXIT_PARSE)


def _cmd_mds(args):
    ids, mat = _read_matrix(args.matrix)
    if mat.shape[0] != mat.shape[1] or np.max(np.abs(mat - mat.T)) > 1e-9:
        raise CliError("mds needs a square symmetric matrix", EXIT_VALIDATION)
    try:
        coords = classical_mds(mat, args.dim)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_VALIDATION)
    if args.format == "csv":
        lines = ["id," + ",".join("c%d" % k for k in range(args.dim))]
        for pid, row in zip(ids, coords):
            lines.append(pid + "," + ",".join(_fmt(v) for v in row))
        text = "\n".join(lines) + "\n"
        if args.out:
            with open(args.out, "w") as f:
                f.write(text)
        else:
            sys.stdout.write(text)
    else:
        _emit({"ids": list(ids), "coords": coords.tolist(),
               "config": {"dim": args.dim}}, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser():
    top = argparse.ArgumentParser(
        prog="ultragw",
        description="Ultrametric Gromov-Wasserstein toolbox")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=None)
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--format", choices=["json", "csv"], default="json")

    p = sub.add_parser("validate", help="check the metric axioms of a space")
    p.add_argument("space")
    p.add_argument("--mode", choices=["ultrametric", "ultra_dissimilarity"],
                   default="ultrametric")
    common(p)
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("ingest", help="Newick file to tree-shape space(s)")
    p.add_argument("--newick", required=True)
    p.add_argument("--unit-edges", action=argparse.BooleanOptionalAction,
                   default=True)
    p.add_argument("--measure", choices=["uniform", "length-weighted"],
                   default="uniform")
    common(p)
    p.set_defaults(fn=_cmd_ingest)

    p = sub.add_parser("gen", help="random ultrametric space")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--samples-per-block", type=int, default=None)
    p.add_argument("--subsample", type=int, default=None)
    common(p)
    p.set_defaults(fn=_cmd_gen)

    p = sub.add_parser("perturb", help="perturb a space below a level")
    p.add_argument("space")
    p.add_argument("--t", type=float, required=True)
    common(p)
    p.set_defaults(fn=_cmd_perturb)

    p = sub.add_parser("quotient", help="level quotient of a space")
    p.add_argument("space")
    p.add_argument("--t", type=float, required=True)
    common(p)
    p.set_defaults(fn=_cmd_quotient)

    p = sub.add_parser("wasserstein", help="exact 1-d / ultrametric OT")
    p.add_argument("alpha")
    p.add_argument("beta")
    p.add_argument("--p", required=True)
    p.add_argument("--q", default=None)
    p.add_argument("--ground", default="halfline",
                   help="'halfline', 'line', or a path to an ultrametric "
                        "space JSON")
    common(p)
    p.set_defaults(fn=_cmd_wasserstein)

    def fw_opts(p):
        p.add_argument("--restarts", type=int, default=None)
        p.add_argument("--iters", type=int, default=None)
        p.add_argument("--step", choices=["exact_line_search", "harmonic"],
                       default=None)
        p.add_argument("--hitrun-steps", type=int, default=None)
        p.add_argument("--tol", type=float, default=None)

    p = sub.add_parser("ugw", help="Frank-Wolfe GW upper bound")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--p", required=True)
    p.add_argument("--classical", action="store_true")
    fw_opts(p)
    common(p)
    p.set_defaults(fn=_cmd_ugw)

    p = sub.add_parser("ugw-inf", help="exact order-infinity ultrametric GW")
    p.add_argument("a")
    p.add_argument("b")
    common(p)
    p.set_defaults(fn=_cmd_ugw_inf)

    p = sub.add_parser("ugh", help="exact ultrametric Gromov-Hausdorff")
    p.add_argument("a")
    p.add_argument("b")
    common(p)
    p.set_defaults(fn=_cmd_ugh)

    p = sub.add_parser("usturm", help="brute-force Sturm ultrametric GW")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--p", required=True)
    p.add_argument("--max-n", type=int, default=7)
    common(p)
    p.set_defaults(fn=_cmd_usturm)

    p = sub.add_parser("bounds", help="lower bounds for a pair of spaces")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--p", required=True)
    p.add_argument("--which", default="uslb,utlb,uflb")
    common(p)
    p.set_defaults(fn=_cmd_bounds)

    p = sub.add_parser("matrix", help="pairwise matrix over a corpus")
    p.add_argument("--dir", default=None)
    p.add_argument("--newick-dir", default=None)
    p.add_argument("--method", "--which", dest="method", required=True,
                   choices=["ugw-inf", "ugh", "ugw-fw", "uslb", "utlb",
                            "uflb", "slb", "tlb", "flb"])
    p.add_argument("--p", default="1")
    p.add_argument("--skip-invalid", action="store_true")
    fw_opts(p)
    common(p)
    p.set_defaults(fn=_cmd_matrix)

    p = sub.add_parser("mds", help="classical MDS coordinates of a matrix")
    p.add_argument("matrix")
    p.add_argument("--dim", type=int, default=2)
    common(p)
    p.set_defaults(fn=_cmd_mds)

    return top


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        sys.stderr.write("error: %s\n" % exc)
        return exc.code
    except (ValueError, NewickError) as exc:
        sys.stderr.write("error: %s\n" % exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
