"""Command-line pipeline: factorize, synth, identify, select, evaluate, recommend.

Every command needs ``--seed``. Per-account randomness is derived from it as
``SeedSequence([seed, crc32(account_id)])`` so results do not depend on
account order or on ``--jobs``.

Exit codes: 2 usage, 3 input/io, 4 schema, 5 numerical.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import math
import re
import sys
import zlib
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import evaluation as ev
from . import io
from . import model_selection as ms
from .data_model import IdentificationResult, UserProfile, lift
from .errors import (
    DatasetMismatchError,
    HousesplitError,
    InputError,
    NumericalError,
    SchemaError,
)
from .factorization import factorize, select_lambda
from .identification import (
    ALGORITHMS,
    EmConfig,
    confident_tails,
    delta_scores,
    fit_single,
    identify,
    similarity,
)
from .ingestion import (
    HOUSEHOLDS_HEADER,
    household_ratios,
    merge_households,
    parse_ratings,
    read_truth,
    write_ratings,
    write_truth,
)
from .recommendation import eval_methods, summarize
from .synthetic import PopulationConfig, generate_population

logger = logging.getLogger("housesplit")

EXIT_USAGE, EXIT_IO, EXIT_SCHEMA, EXIT_NUMERICAL = 2, 3, 4, 5
SELECTION_HEADER = ("account", "mse1", "mse2", "mse3", "bic1", "bic2", "bic3", "gap12", "gap23",
                    "label_bic", "label_outlier", "label")
RECOMMEND_HEADER = ("account", "fold", "method", "rmse", "overlap", "alpha")


def account_seed(seed: int, account: str) -> int:
    """Seed of one account's job, independent of ordering and parallelism."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(account.encode("utf-8"))])
    return int(ss.generate_state(1)[0])


def _scale(text):
    if text is None or text.lower() == "none":
        return None
    try:
        lo, hi = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("scale must be LO,HI or none") from None
    return (lo, hi)


def _slug(i, account):
    return f"{i:05d}_{re.sub(r'[^A-Za-z0-9_.-]', '_', account)[:40]}.json"


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _views(feats, accounts_path, scale, truth_path=None, exclude_cold=False):
    """Account views against ``feats``; movies unknown to the features are an error."""
    ds = parse_ratings(accounts_path, scale)
    index = {m: j for j, m in enumerate(feats.movies)}
    truths = read_truth(truth_path) if truth_path else {}
    views = []
    for a, acc in enumerate(ds.accounts):
        mi, r = ds.account_ratings(a)
        names = [ds.movies[m] for m in mi]
        missing = [m for m in names if m not in index]
        if missing:
            raise DatasetMismatchError(
                f"account {acc!r}: {len(missing)} movies have no features, e.g. {missing[0]!r}"
            )
        fidx = np.array([index[m] for m in names], dtype=np.int64)
        keep = np.ones(len(fidx), bool)
        if exclude_cold and feats.cold is not None:
            keep = ~feats.cold[fidx]
        truth = None
        if acc in truths:
            t = truths[acc]
            lost = [m for m in names if m not in t]
            if lost:
                raise DatasetMismatchError(f"truth for {acc!r} misses movie {lost[0]!r}")
            truth = np.array([t[m] for m in names], dtype=np.int64)[keep]
            _, truth = np.unique(truth, return_inverse=True)
        views.append(lift(feats, fidx[keep], np.asarray(r)[keep], truth, acc))
    return views


def _profiles_json(profiles):
    return [{"u": p.u.tolist(), "z": float(p.z)} for p in profiles]


def _identify_job(args):
    view, n, algo, seed, options = args
    res = fit_single(view, options.get("ridge_lambda", 0.0)) if n == 1 else identify(
        view, n, algo, seed=seed, **options)
    return res


def _map(fn, jobs, n_jobs):
    if n_jobs <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, jobs))


def _algo_options(args):
    if args.algo == "em":
        return {"restarts": args.restarts, "ridge_lambda": args.ridge_lambda}
    return {"ridge_lambda": args.ridge_lambda}


def cmd_factorize(args):
    ds = parse_ratings(args.ratings, args.scale)
    lam = args.lam
    scores = None
    if lam == "cv":
        lam, scores = select_lambda(ds, args.d, seed=args.seed)
    else:
        lam = float(lam)
    feats = factorize(ds, args.d, lam, args.max_iters, args.tol, seed=args.seed,
                      sigma2_source=args.sigma2_source, center=args.center)
    if scores is not None:
        feats.meta["lambda_cv"] = {str(k): v for k, v in scores.items()}
    io.save_features(args.out, feats)
    logger.info("features d=%d sigma2=%s written to %s", args.d, io.fmt(feats.sigma2), args.out)


def cmd_synth(args):
    # hand-written configs may omit schema_version; a wrong one is still rejected
    cfg = io.read_json(args.config, require_version=False)
    cfg = PopulationConfig.from_dict(cfg)
    cfg.seed = args.seed
    pop = generate_population(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_ratings(out / "ratings.csv", pop.dataset)
    io.write_csv(out / "households.csv", HOUSEHOLDS_HEADER,
                 [(h.household_id, pop.dataset.accounts[a]) for h in pop.households
                  for a in h.member_account_indices])
    merged = merge_households(pop.dataset, pop.households, args.conflict)
    write_ratings(out / "accounts.csv", merged.dataset)
    write_truth(out / "truth.csv", merged.dataset, merged.truths)
    files = ("ratings.csv", "households.csv", "accounts.csv", "truth.csv")
    io.write_json(out / "manifest.json", {
        "config": cfg.to_dict(), "seed": args.seed, "users": pop.dataset.N,
        "movies": pop.dataset.M, "ratings": len(pop.dataset), "households": len(pop.households),
        "conflicts": len(merged.conflicts), "sha256": {f: _sha256(out / f) for f in files},
    })


def cmd_identify(args):
    feats = io.load_features(args.features)
    views = _views(feats, args.accounts, args.scale, args.truth, args.exclude_cold)
    opts = _algo_options(args)
    jobs = [(v, args.n, args.algo, account_seed(args.seed, v.account), opts) for v in views]
    results = _map(_identify_job, jobs, args.jobs)
    out = Path(args.out)
    index = []
    for i, (view, res) in enumerate(zip(views, results)):
        rep = {
            "account": view.account, "n": res.n, "algorithm": res.algorithm,
            "seed": jobs[i][3], "movies": [feats.movies[j] for j in view.movie_indices],
            "ratings": view.ratings, "assignment": res.assignment,
            "profiles": _profiles_json(res.profiles), "mse": res.mse,
        }
        if view.ground_truth is not None:
            rep["similarity"] = similarity(res.assignment, view.ground_truth)
        if res.n == 2:
            deltas = delta_scores(view, res.profiles)
            tails = confident_tails(deltas)
            rep["deltas"] = deltas
            names = rep["movies"]
            rep["tails"] = {"user1": [names[j] for j in tails.user1],
                            "user2": [names[j] for j in tails.user2]}
        name = _slug(i, view.account)
        io.write_json(out / name, rep)
        index.append({"account": view.account, "file": name})
    io.write_json(out / "index.json", {"n": args.n, "algorithm": args.algo, "reports": index})


def _fit_sizes_job(args):
    view, sizes, algo, seed, opts = args
    return ms.fit_sizes(view, sizes, algo, seed, **opts)


def cmd_select(args):
    feats = io.load_features(args.features)
    views = _views(feats, args.accounts, args.scale, exclude_cold=args.exclude_cold)
    sizes = (1, 2, 3)
    opts = _algo_options(args)
    jobs = [(v, sizes, args.algo, account_seed(args.seed, v.account), opts) for v in views]
    fits = _map(_fit_sizes_job, jobs, args.jobs)
    sigma2 = feats.sigma2
    reports = [ms.select_size(v, sigma2, sizes, fits=f) for v, f in zip(views, fits)]
    gap12 = np.array([r.normalized_gaps[0] for r in reports])
    gap23 = np.array([r.normalized_gaps[1] for r in reports])
    outlier_sizes, first = None, None
    if len(views) >= 50:
        outlier_sizes, first, _ = ms.two_pass_outlier_sizes(gap12, gap23)
    elif args.method == "outlier":
        raise InputError(f"the outlier method needs >= 50 accounts, got {len(views)}")
    tau = None
    if args.method.startswith("threshold:"):
        arg = args.method.split(":", 1)[1]
        tau = ms.bic_tau(sigma2, feats.d) if arg == "bic" else float(arg)
    rows = []
    for i, (v, r) in enumerate(zip(views, reports)):
        lo = "" if outlier_sizes is None else int(outlier_sizes[i])
        if args.method == "bic":
            label = r.label
        elif args.method == "outlier":
            label = lo
        else:
            label = 2 if ms.classify_threshold(r.mse(1), r.mse(2), v.m, tau) else 1
        rows.append((v.account, r.mse(1), r.mse(2), r.mse(3), r.bic(1), r.bic(2), r.bic(3),
                     gap12[i], gap23[i], r.label, lo, label))
    out = Path(args.out)
    io.write_csv(out / "selection.csv", SELECTION_HEADER, rows)
    summary = {"method": args.method, "sigma2": sigma2, "algorithm": args.algo,
               "accounts": len(rows), "tau": tau,
               "counts": {str(k): int(sum(1 for r in rows if r[-1] == k)) for k in (1, 2, 3)}}
    if first is not None:
        ev.write_gap_hist(out / "gap_hist.csv", first)
        summary["outlier_threshold"] = first.threshold
    io.write_json(out / "selection.json", summary)


def _load_reports(reports_dir):
    d = Path(reports_dir)
    index = io.read_json(d / "index.json")
    return [io.read_json(d / item["file"]) for item in index["reports"]]


def cmd_evaluate(args):
    reports = _load_reports(args.reports)
    truths = read_truth(args.truth)
    feats = io.load_features(args.features)
    index = {m: j for j, m in enumerate(feats.movies)}
    out = Path(args.out)
    alpha = args.alpha

    views, sims, composite = [], {}, {}
    for rep in reports:
        acc = rep["account"]
        if acc not in truths:
            continue
        t = np.array([truths[acc][m] for m in rep["movies"]], dtype=np.int64)
        _, t = np.unique(t, return_inverse=True)
        fidx = np.array([index[m] for m in rep["movies"]], dtype=np.int64)
        view = lift(feats, fidx, np.asarray(rep["ratings"], float), t, acc)
        views.append((view, rep))
        composite[acc] = view.n_true > 1
        sims[acc] = similarity(rep["assignment"], t)
    if not views:
        raise DatasetMismatchError("no reported account appears in the truth file")

    singles = [v for v, _ in views if not composite[v.account]] or [v for v, _ in views]
    ratios = household_ratios([v.ground_truth for v, _ in views if composite[v.account]])
    em_cfg = EmConfig(restarts=args.restarts, ridge_lambda=args.ridge_lambda)
    series = {"identified_composite": [sims[a] for a in sims if composite[a]],
              "identified_single": [sims[a] for a in sims if not composite[a]]}
    summary = {"accounts": len(views), "composites": int(sum(composite.values()))}
    if args.null_runs > 0:
        null = ev.null_similarities(singles, em_cfg, ratios if len(ratios) else None,
                                    seed=args.seed, n_runs=args.null_runs)
        series["null"] = null.tolist()
        summary["null_runs"] = args.null_runs
        summary["null_mean"] = float(null.mean())
        if len(null) >= ev.MIN_NULL_RUNS:
            s_crit = ev.significance_threshold(null, alpha)
            hits = [sims[a] for a in sims if composite[a] and sims[a] > s_crit]
            summary.update(alpha=alpha, s_crit=s_crit, significant=len(hits),
                           significant_fraction=len(hits) / max(summary["composites"], 1))
    ev.write_cdfs(out / "cdf_similarity.csv", {k: v for k, v in series.items() if v})

    diag = [ev.rmse_gap_diagnostic(v, _as_result(v, rep)) for v, rep in views
            if composite[v.account]]
    ev.write_scatter(out / "scatter_sim_gap.csv",
                     [v.account for v, _ in views if composite[v.account]], diag)
    if len(diag) > 2:
        x = np.array([g.similarity for g in diag])
        y = np.array([g.rmse_gap for g in diag])
        if x.std() > 0 and y.std() > 0:
            summary["pearson_similarity_gap"] = float(np.corrcoef(x, y)[0, 1])

    if args.selection:
        sel = {r["account"]: float(r["gap12"]) for r in io.read_csv(args.selection, SELECTION_HEADER)}
        accs = [a for a in composite if a in sel]
        labels = [composite[a] for a in accs]
        if any(labels) and not all(labels):
            curve = ms.roc_curve([sel[a] for a in accs], labels)
            ev.write_roc(out / "roc.csv", {"gap12": curve})
            summary["auc"] = curve.auc
    io.write_json(out / "evaluation.json", summary)


def _as_result(view, rep):
    profiles = [UserProfile(np.asarray(p["u"], float), float(p["z"])) for p in rep["profiles"]]
    labels = np.asarray(rep["assignment"], dtype=np.int64)
    return IdentificationResult(
        int(rep["n"]), labels, profiles, float(rep["mse"]), rep["algorithm"],
        empty=tuple(int(i) for i in np.flatnonzero(np.bincount(labels, minlength=int(rep["n"])) == 0)),
    )


def _recommend_job(args):
    view, folds, em_cfg, seed, alpha = args
    return eval_methods(view, folds, em_cfg, seed=seed, alpha=alpha)


def cmd_recommend(args):
    feats = io.load_features(args.features)
    views = [v for v in _views(feats, args.accounts, args.scale, args.truth)
             if v.ground_truth is not None and v.n_true > 1]
    if not views:
        raise DatasetMismatchError("no composite account with ground truth to evaluate")
    em_cfg = EmConfig(restarts=args.restarts, ridge_lambda=args.ridge_lambda)
    jobs = [(v, args.folds, em_cfg, account_seed(args.seed, v.account), args.alpha) for v in views]
    scores = [s for chunk in _map(_recommend_job, jobs, args.jobs) for s in chunk]
    out = Path(args.out)
    io.write_csv(out / "recommend.csv", RECOMMEND_HEADER,
                 [(s.account, s.fold, s.method, s.rmse, s.overlap,
                   "" if math.isnan(s.alpha) else s.alpha) for s in scores])
    io.write_json(out / "recommend.json", {"folds": args.folds, "methods": summarize(scores)})


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="housesplit", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, jobs=True):
        sp.add_argument("--seed", type=int, required=True,
                        help="root seed; every command needs one for reproducibility")
        sp.add_argument("--out", required=True)
        sp.add_argument("--scale", type=_scale, default=None, help="rating scale LO,HI or none")
        if jobs:
            sp.add_argument("--jobs", type=int, default=1)

    def algo(sp):
        sp.add_argument("--algo", choices=ALGORITHMS, default="em")
        sp.add_argument("--restarts", type=int, default=5)
        sp.add_argument("--ridge-lambda", type=float, default=0.0)
        sp.add_argument("--exclude-cold", action="store_true")

    f = sub.add_parser("factorize", help="learn movie features")
    f.add_argument("--ratings", required=True)
    f.add_argument("--d", type=int, default=10)
    f.add_argument("--lambda", dest="lam", default="1.0", help="ridge penalty or 'cv'")
    f.add_argument("--max-iters", type=int, default=100)
    f.add_argument("--tol", type=float, default=1e-6)
    f.add_argument("--sigma2-source", choices=("train", "holdout"), default="train")
    f.add_argument("--center", action="store_true", help="subtract the global mean rating first")
    common(f, jobs=False)
    f.set_defaults(func=cmd_factorize)

    s = sub.add_parser("synth", help="synthetic population with households")
    s.add_argument("--config", required=True)
    s.add_argument("--conflict", choices=("drop", "average"), default="drop")
    common(s, jobs=False)
    s.set_defaults(func=cmd_synth)

    i = sub.add_parser("identify", help="per-account identification reports")
    i.add_argument("--features", required=True)
    i.add_argument("--accounts", required=True)
    i.add_argument("--n", type=int, required=True)
    i.add_argument("--truth")
    algo(i)
    common(i)
    i.set_defaults(func=cmd_identify)

    se = sub.add_parser("select", help="household size selection")
    se.add_argument("--features", required=True)
    se.add_argument("--accounts", required=True)
    se.add_argument("--method", default="bic",
                    help="bic, outlier, threshold:TAU or threshold:bic")
    algo(se)
    common(se)
    se.set_defaults(func=cmd_select)

    e = sub.add_parser("evaluate", help="similarity CDFs, null significance, ROC")
    e.add_argument("--truth", required=True)
    e.add_argument("--reports", required=True)
    e.add_argument("--features", required=True)
    e.add_argument("--null-runs", type=int, default=100)
    e.add_argument("--alpha", type=float, default=0.05)
    e.add_argument("--selection", help="selection.csv for the ROC table")
    e.add_argument("--restarts", type=int, default=5)
    e.add_argument("--ridge-lambda", type=float, default=0.0)
    common(e, jobs=False)
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("recommend", help="Single/Oracle/EM/CNV comparison")
    r.add_argument("--truth", required=True)
    r.add_argument("--features", required=True)
    r.add_argument("--accounts", required=True)
    r.add_argument("--folds", type=int, default=5)
    r.add_argument("--alpha", type=float, default=None, help="fix the CNV blend")
    r.add_argument("--restarts", type=int, default=5)
    r.add_argument("--ridge-lambda", type=float, default=1.0)
    common(r)
    r.set_defaults(func=cmd_recommend)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "select" and not (
        args.method in ("bic", "outlier") or args.method.startswith("threshold:")
    ):
        parser.error(f"unknown selection method {args.method!r}")
    try:
        args.func(args)
    except SchemaError as exc:
        print(f"housesplit: schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (InputError, OSError) as exc:
        print(f"housesplit: input error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"housesplit: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except HousesplitError as exc:
        print(f"housesplit: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
