"""Command-line front end: ``gon fit | argmax | eval | verify | bench``.

Exit codes: 0 success, 2 data error, 3 configuration error, 4 domain error
(e.g. a conditional maximizer outside the calibrated range).
"""

import argparse
import json
import logging
import sys

import numpy as np

from gon import __version__
from gon.bench import make_grid, run_benchmark
from gon.constraints import verify_unimodal_by_rays
from gon.dataio import load_csv, read_rows
from gon.errors import ConfigError, DataError, DomainError, InvalidHyperparameters
from gon.model import FORMAT_VERSION, load_model, save_model
from gon.training import MAXIMIZE, MINIMIZE, LabelScaler, fit, split_config

EXIT_OK, EXIT_DATA, EXIT_CONFIG, EXIT_DOMAIN = 0, 2, 3, 4

log = logging.getLogger("gon")


def _csv_list(text, cast=str):
    return [cast(t.strip()) for t in text.split(",") if t.strip()] if text else []


def _emit(obj):
    print(json.dumps(obj))


def _load_model(path):
    try:
        return load_model(path)
    except (OSError, ValueError, KeyError) as e:
        raise DataError(f"cannot read model {path}: {e}") from e


def cmd_fit(args):
    doc = {}
    if args.config:
        try:
            with open(args.config) as f:
                doc = json.load(f)
        except (OSError, ValueError) as e:
            raise InvalidHyperparameters(f"cannot read config {args.config}: {e}") from e
    overrides = {
        "epochs": args.epochs, "learning_rate": args.learning_rate,
        "batch_size": args.batch_size, "keypoints": args.keypoints,
        "lattice_size": args.lattice_size, "lattice_dim": args.lattice_dim,
        "num_lattices": args.num_lattices, "seed": args.seed,
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    config, hp, extra = split_config(doc)

    try:
        ds = load_csv(args.data, args.label, _csv_list(args.features) or None,
                      _csv_list(args.cond))
    except OSError as e:
        raise DataError(str(e)) from e
    domains = None
    if "feature_domains" in extra:
        fd = extra["feature_domains"]
        domains = []
        for j, name in enumerate(ds.feature_names):
            if name in fd:
                domains.append(tuple(fd[name]))
            else:
                col = ds.X[:, j]
                domains.append((float(col.min()), float(col.max())))

    model, report = fit(ds.X, ds.y, config, hp, Z=ds.Z,
                        direction=MINIMIZE if args.minimize else MAXIMIZE, domains=domains,
                        features=ds.feature_names, cond_features=ds.cond_names,
                        label=ds.label_name)
    save_model(model, args.out)
    report_path = args.report or _sibling(args.out, ".report.json")
    with open(report_path, "w") as f:
        json.dump(report.to_dict(), f, indent=1)
        f.write("\n")
    _emit({"model": args.out, "report": report_path, "final_loss": report.final_loss,
           "train_rmse": report.train_rmse, "max_violation": report.max_violation,
           "x": report.maximizer})
    return EXIT_OK


def _sibling(path, suffix):
    return path[:-5] + suffix if path.endswith(".json") else path + suffix


def _condition_matrix(model, args, n):
    if model.kind != "cgon":
        return None
    z = _csv_list(args.condition, float)
    if len(z) != model.cond_dims:
        raise DataError(f"--condition needs {model.cond_dims} values for this model")
    return np.tile(np.array(z), (n, 1))


def cmd_argmax(args):
    model = _load_model(args.model)
    if args.candidates:
        header, rows = read_rows(args.candidates)
        ds = load_csv(args.candidates, None, model.features,
                      model.cond_features if model.kind == "cgon" and not args.condition else None)
        Z = ds.Z if ds.Z is not None else _condition_matrix(model, args, len(ds))
        scores = model.predict(ds.X, Z)
        best = int(np.argmax(scores))
        print(",".join(header))
        print(",".join(rows[best]))
        return EXIT_OK

    if model.kind == "cgon":
        if not args.condition:
            raise DataError("a conditional model needs --condition")
        z = np.array(_csv_list(args.condition, float))
        if z.size != model.cond_dims:
            raise DataError(f"--condition needs {model.cond_dims} values for this model")
        m = model.maximizer(z)
    else:
        m = model.maximizer()
    out = {"x": m.point.tolist(), "value": m.value, "features": model.features}
    if model.label_scaler:
        out["prediction"] = float(LabelScaler.from_dict(model.label_scaler).unscale(m.value))
    _emit(out)
    return EXIT_OK


def cmd_eval(args):
    model = _load_model(args.model)
    header, rows = read_rows(args.data)
    label = args.label or (model.label if model.label in header else None)
    cond = model.cond_features if model.kind == "cgon" else None
    ds = load_csv(args.data, label, model.features, cond)
    raw = model.predict(ds.X, ds.Z)
    pred = (LabelScaler.from_dict(model.label_scaler).unscale(raw)
            if model.label_scaler else raw)

    lines = [",".join(header + ["prediction"])]
    lines += [",".join(row + [repr(float(p))]) for row, p in zip(rows, pred)]
    text = "\n".join(lines) + "\n"
    rmse = None if ds.y is None else float(np.sqrt(np.mean((pred - ds.y) ** 2)))
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
        _emit({"rows": len(ds), "rmse": rmse, "out": args.out})
    else:
        sys.stdout.write(text)
        if rmse is not None:
            print(json.dumps({"rmse": rmse}), file=sys.stderr)
    return EXIT_OK


def cmd_verify(args):
    model = _load_model(args.model)
    V = model.half_width
    domain = (np.full(model.dims, -V, dtype=float), np.full(model.dims, V, dtype=float))
    report = verify_unimodal_by_rays(model.ensemble, domain, args.rays, args.steps,
                                     tol=args.tol, seed=args.seed or 0)
    sys.stdout.write(report.to_csv())
    return EXIT_OK


def cmd_bench(args):
    from gon.training import Hyperparams, TrainConfig

    base = args.seed or 0
    grid = make_grid(args.fn, _csv_list(args.dims, int), _csv_list(args.n, int),
                     _csv_list(args.noise, float), range(base, base + args.seeds),
                     conditional=args.conditional)
    hp = Hyperparams(keypoints=args.keypoints, lattice_size=args.lattice_size,
                     lattice_dim=args.lattice_dim)
    cfg = TrainConfig(epochs=args.epochs, learning_rate=args.learning_rate)
    report = run_benchmark(grid, hp, cfg,
                           progress=lambda r: log.info("%s D=%d N=%d sigma=%g seed=%d g=%.6g",
                                                       r.fn, r.D, r.N, r.sigma, r.seed,
                                                       r.g_at_xhat))
    with open(args.out, "w") as f:
        f.write(report.to_csv(timing=not args.omit_timing, baseline=args.with_baseline))
    sys.stdout.write(report.slices_csv())
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="gon", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version",
                   version=f"gon {__version__} (model format_version {FORMAT_VERSION})")
    p.add_argument("--seed", type=int, default=None, help="random seed for the subcommand")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a GON/CGON to a CSV file")
    f.add_argument("--data", required=True)
    f.add_argument("--label", required=True)
    f.add_argument("--config", help="JSON file with training and model settings")
    f.add_argument("--out", required=True, help="model JSON path")
    f.add_argument("--report", help="training report path (default: next to the model)")
    f.add_argument("--minimize", action="store_true", help="fit so the maximizer minimises the label")
    f.add_argument("--features", help="comma-separated feature columns (default: all others)")
    f.add_argument("--cond", help="comma-separated conditional columns (fits a CGON)")
    f.add_argument("--epochs", type=int)
    f.add_argument("--learning-rate", type=float)
    f.add_argument("--batch-size", type=int)
    f.add_argument("--keypoints", type=int)
    f.add_argument("--lattice-size", type=int)
    f.add_argument("--lattice-dim", type=int)
    f.add_argument("--num-lattices", type=int)
    f.set_defaults(func=cmd_fit)

    a = sub.add_parser("argmax", help="print the model's maximizer")
    a.add_argument("--model", required=True)
    a.add_argument("--condition", help="comma-separated conditioning vector for a CGON")
    a.add_argument("--candidates", help="CSV of candidate inputs; print the best row")
    a.set_defaults(func=cmd_argmax)

    e = sub.add_parser("eval", help="append model predictions to a CSV file")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--label", help="label column for RMSE (default: the model's label)")
    e.add_argument("--out", help="output CSV (default: stdout)")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify", help="ray-sample the model's unimodal layer")
    v.add_argument("--model", required=True)
    v.add_argument("--rays", type=int, default=100)
    v.add_argument("--steps", type=int, default=100)
    v.add_argument("--tol", type=float, default=1e-9)
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="run the Rosenbrock/Griewank benchmark")
    b.add_argument("--fn", choices=["rosenbrock", "griewank"], required=True)
    b.add_argument("--dims", default="4", help="comma-separated list")
    b.add_argument("--n", default="1000", help="comma-separated list")
    b.add_argument("--noise", default="1.0", help="comma-separated list of sigma values")
    b.add_argument("--seeds", type=int, default=10, help="number of seeds per cell")
    b.add_argument("--epochs", type=int, default=100)
    b.add_argument("--learning-rate", type=float, default=0.001)
    b.add_argument("--keypoints", type=int, default=10)
    b.add_argument("--lattice-size", type=int, default=3)
    b.add_argument("--lattice-dim", type=int, default=None)
    b.add_argument("--conditional", action="store_true")
    b.add_argument("--with-baseline", action="store_true",
                   help="add a g_sample_best column")
    b.add_argument("--omit-timing", action="store_true",
                   help="leave wall_ms blank so reruns are byte-identical")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except DomainError as e:
        print(f"gon: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    except ConfigError as e:
        print(f"gon: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as e:
        print(f"gon: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        print(f"gon: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
