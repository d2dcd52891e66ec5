"""Command line interface: ``greencheb <command> [options]``.

Every command writes its result as JSON on stdout (or to ``--out`` for
artifacts).  Failures exit nonzero with ``{"error": ..., "message": ...}``
on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings

import numpy as np

from .errors import GreenChebError

DEFAULT_FRACTIONAL_TOL = 1e-9
EXACT_TOL = 1e-6
EXACT_RANK = 128


class UsageError(GreenChebError):
    code = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _threads():
    n = os.environ.get("GREENCHEB_THREADS")
    if n:
        import torch

        torch.set_num_threads(max(1, int(n)))


def _default_tol(problem_id: str, tol):
    if tol is not None:
        return tol
    return DEFAULT_FRACTIONAL_TOL if problem_id == "fractional_laplacian" else 2.22e-16


def cmd_generate(a):
    from .pipeline import save_dataset
    from .problems import ProblemSpec, default_kernel, make_dataset

    prob = ProblemSpec(a.problem, a.theta)
    ds = make_dataset(prob, default_kernel(prob, a.sigma), a.n, a.nx, a.ns, a.noise, a.seed)
    sha = save_dataset(a.out, ds)
    return {"out": a.out, "sha256": sha, "n_samples": ds.n_samples, "n_train": int(ds.train_idx.size)}


def cmd_train(a):
    from .pipeline import load_dataset, save_model
    from .problems import DEFAULT_LOSS_NODES, LOSS_NODES
    from .ratnet import AdfSpec, TrainConfig, TrainData, to_green_model, train

    ds = load_dataset(a.data)
    prob = ds.problem
    adf = AdfSpec(prob.domain, prob.domain, enabled=not (a.no_adf or prob.periodic))
    nodes = LOSS_NODES.get(prob.id, DEFAULT_LOSS_NODES) if a.nodes is None else a.nodes
    cfg = TrainConfig(epochs=a.epochs, seed=a.seed, nodes=nodes or None)
    F, U = ds.subset(ds.train_idx)
    Fv, Uv = ds.subset(ds.val_idx)
    val = TrainData(ds.x, ds.s, Fv, Uv) if ds.val_idx.size else None
    t0 = time.perf_counter()
    res = train(TrainData(ds.x, ds.s, F, U), cfg, adf, val=val, log_every=a.log_every)
    t1 = time.perf_counter()
    tol = _default_tol(prob.id, a.tol)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = to_green_model(res.netG, res.netH, adf, prob.domain, prob.domain, tol, prob.theta, a.rank_cap,
                               zero_mean=prob.periodic)
    extra = {
        "train": {"epochs": cfg.epochs, "seed": cfg.seed, "nodes": cfg.nodes, "adf": adf.enabled, "tol": tol,
                  "final_loss": res.train_loss[-1], "initial_loss": res.train_loss[0],
                  "final_val_loss": res.val_loss[-1] if res.val_loss else None},
        "data_sha256": __import__("greencheb.pipeline", fromlist=["file_sha256"]).file_sha256(a.data),
    }
    sha = save_model(a.out, model, {"G": res.netG, "H": res.netH}, extra)
    hist = np.column_stack([res.train_loss, res.val_loss or [np.nan] * len(res.train_loss)])
    np.savetxt(a.out + ".loss.csv", hist, delimiter=",", header="train,validation", comments="")
    return {"out": a.out, "sha256": sha, "rank": model.rank, "final_loss": res.train_loss[-1],
            "train_seconds": t1 - t0, "flags": list(model.flags)}


def cmd_sve(a):
    from .bivariate import build_cdr, sve
    from .manifold import SveModel
    from .pipeline import save_model
    from .problems import ProblemSpec, exact_green

    prob = ProblemSpec(a.problem, a.theta)
    g = exact_green(prob)
    if g is None:
        raise UsageError(f"no closed-form kernel for {a.problem}")
    tol = a.tol if a.tol is not None else EXACT_TOL
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cdr = build_cdr(g, prob.domain, prob.domain, tol, tol, max_rank=a.rank_cap or EXACT_RANK)
    model = SveModel.from_sve(sve(cdr), None, prob.theta, cdr.flags, {"source": "exact", "problem": prob.id})
    sha = save_model(a.out, model, extra={"tol": tol})
    return {"out": a.out, "sha256": sha, "rank": model.rank, "sigma_head": model.sigma[:5].tolist(),
            "flags": list(model.flags)}


def cmd_interpolate(a):
    from .manifold import ModelLibrary, interpolate_models
    from .pipeline import file_sha256, load_model, save_model

    lib = ModelLibrary(tuple(load_model(p) for p in a.models))
    m = interpolate_models(lib, a.theta)
    prov = {"library": [{"path": p, "sha256": file_sha256(p)} for p in a.models], "theta_star": a.theta,
            "base_index": m.meta["base_index"], "base_theta": m.meta["base_theta"], "flags": list(m.flags)}
    sha = save_model(a.out, m, extra={"provenance": prov})
    with open(a.out + ".json", "w") as fh:
        json.dump(prov, fh, indent=2, sort_keys=True)
    return {"out": a.out, "sha256": sha, "rank": m.rank, **prov}


def cmd_evaluate(a):
    from .pipeline import load_dataset, load_model, relative_error, test_error
    from .problems import ProblemSpec, exact_green

    m = load_model(a.model)
    out = {"model": a.model, "theta": m.theta, "rank": m.rank}
    if a.exact:
        g = exact_green(ProblemSpec(a.exact, m.theta))
        if g is None:
            raise UsageError(f"no closed-form kernel for {a.exact}")
        out["relative_error"] = relative_error(m, g)
    if a.data:
        ds = load_dataset(a.data)
        out["test_error_pct"] = test_error(m, ds)
        if ds.zeta > 0:
            out["test_error_clean_pct"] = test_error(m, ds, clean=True)
    return out


def cmd_report(a):
    from .pipeline import build_report

    rep = build_report(a.models, a.data or (), a.exact)
    if a.out:
        with open(a.out, "w") as fh:
            json.dump(rep, fh, indent=2, sort_keys=True)
    return rep


def cmd_verify_orders(a):
    from .manifold import verify_orders

    r = verify_orders(seed=a.seed, K=a.rank)
    r["retraction_ok"] = abs(r["retraction_slope"] - 2.0) <= 0.2
    r["projection_ok"] = abs(r["projection_slope"] - 3.0) <= 0.25
    return r


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="greencheb", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="sample a forcing/response dataset")
    g.add_argument("--problem", required=True)
    g.add_argument("--theta", type=float, default=0.0)
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--nx", type=int)
    g.add_argument("--ns", type=int)
    g.add_argument("--sigma", type=float, default=1e-2, help="normalised GP length scale")
    g.add_argument("--noise", type=float, default=0.0, help="noise level zeta")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="fit rational networks and compress to an SVE model")
    t.add_argument("--data", required=True)
    t.add_argument("--epochs", type=int, default=2000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--nodes", type=int, help="kernel nodes per variable in the loss (default 64, 128 for the "
                   "fractional problem; 0: all sensors)")
    t.add_argument("--tol", type=float)
    t.add_argument("--rank-cap", type=int, default=256)
    t.add_argument("--no-adf", action="store_true")
    t.add_argument("--log-every", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sve", help="SVE model of a closed-form kernel")
    s.add_argument("--problem", required=True)
    s.add_argument("--theta", type=float, default=0.0)
    s.add_argument("--tol", type=float)
    s.add_argument("--rank-cap", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sve)

    i = sub.add_parser("interpolate", help="interpolate a model library to a new theta")
    i.add_argument("--models", nargs="+", required=True)
    i.add_argument("--theta", type=float, required=True)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_interpolate)

    e = sub.add_parser("evaluate", help="relative and test errors of one model")
    e.add_argument("--model", required=True)
    e.add_argument("--exact")
    e.add_argument("--data")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("report", help="recompute metrics for several models")
    r.add_argument("--models", nargs="+", required=True)
    r.add_argument("--data", nargs="*")
    r.add_argument("--exact")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)

    v = sub.add_parser("verify-orders", help="convergence orders of projection and retraction")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--rank", type=int, default=4)
    v.set_defaults(func=cmd_verify_orders)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _threads()
        result = args.func(args)
    except GreenChebError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return 2 if isinstance(exc, UsageError) else 1
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2, sort_keys=True, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
