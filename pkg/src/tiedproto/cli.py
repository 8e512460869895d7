"""Command-line interface.

Subcommands cover the full pipeline: ``synth`` writes synthetic scenes,
``protos`` extracts prototypes, ``segment`` produces masks and reports,
``sweep`` traces CE/Dice curves (CSV, optionally rendered to an image),
``eval`` scores predictions, ``records`` builds prior-estimation records
from synthetic episode pairs, and ``fit-linest`` fits the linear prior
estimator. Exit codes: 0 success, 2 validation error, 3 I/O or format error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .core import (
    DEFAULT_SIGMA_B,
    DEFAULT_SIGMA_F,
    ClassPriors,
    FeatureGrid,
    GridMask,
    PrototypeSet,
    TpmParams,
    distance_map,
)
from .errors import FormatError, ValidationError
from .evalsynth import Scene, SceneConfig, build_records, gen_scene
from .formats import (
    emit_report,
    read_feature_grid,
    read_mask,
    read_model,
    read_records,
    write_curve_csv,
    write_feature_grid,
    write_mask,
    write_model,
    write_records,
)
from .metrics import cross_entropy, dice
from .posterior import predict_mask, sp_posterior_from_distances, tpm_mc_posterior, tpm_mp_posterior
from .prototype import EmConfig, em_fit, map_pool
from .threshold import (
    avg_est,
    ideal_distance_threshold,
    icp_from_idt,
    lin_est_fit,
    lin_est_predict,
    ocp_prior,
    prior_sweep,
    threshold_sweep,
)


def _add_model_params(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("model parameters")
    group.add_argument("--sigma-f", type=float, default=DEFAULT_SIGMA_F,
                       help="foreground std (default 1/sqrt(11), giving scale 20)")
    group.add_argument("--sigma-b", type=float, default=DEFAULT_SIGMA_B,
                       help="background std (default 1.0)")
    group.add_argument("--d", dest="dim", type=float, default=1.0,
                       help="effective density dimension (default 1)")
    group.add_argument("--kappa", type=float, default=0.5,
                       help="sigmoid steepness (default 0.5)")


def _params(args) -> TpmParams:
    return TpmParams(args.sigma_f, args.sigma_b, dim=args.dim, kappa=args.kappa)


def _load_prototypes(args) -> PrototypeSet:
    grid = read_feature_grid(args.protos)
    vectors = grid.vectors
    if getattr(args, "weights", None):
        with open(args.weights, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        weights = np.asarray(payload["weights"], dtype=np.float64)
        if weights.shape != (vectors.shape[0],):
            raise ValidationError("weights file does not match the prototype count")
    else:
        weights = np.full(vectors.shape[0], 1.0 / vectors.shape[0])
    return PrototypeSet(vectors, weights)


def _prototypes_as_grid(protos: PrototypeSet) -> FeatureGrid:
    return FeatureGrid.from_array(protos.vectors[None, :, :])


def cmd_synth(args) -> int:
    cfg = SceneConfig(
        grid_h=args.height,
        grid_w=args.width,
        dims=args.dims,
        k_fg=args.k_fg,
        clusters_per_class=args.clusters_per_class,
        sigma_fg=args.sigma_fg,
        sigma_bg=args.sigma_bg,
        fg_fraction=args.fg_fraction,
        seed=args.seed,
        background_mode=args.background,
    )
    prototypes = None
    if args.reuse_protos:
        prototypes = read_feature_grid(args.reuse_protos).vectors
    scene = gen_scene(cfg, prototypes=prototypes)
    write_feature_grid(scene.features, args.out_features)
    write_mask(scene.truth, args.out_mask)
    if args.out_protos:
        write_feature_grid(
            FeatureGrid.from_array(scene.prototypes_true[None, :, :]), args.out_protos
        )
    return 0


def cmd_protos(args) -> int:
    features = read_feature_grid(args.features)
    mask = read_mask(args.mask)
    if args.k == 1:
        protos = PrototypeSet.single(map_pool(features, mask, args.class_id))
    else:
        if args.class_id is None:
            selected = mask.labels > 0
        else:
            selected = mask.labels == args.class_id
        points = features.data[selected]
        cfg = EmConfig(
            sigma_f=args.sigma_f,
            k=args.k,
            max_iters=args.max_iters,
            tol=args.tol,
            seed=args.seed,
        )
        protos = em_fit(points, cfg)
    write_feature_grid(_prototypes_as_grid(protos), args.out)
    if args.out_weights:
        emit_report({"weights": list(protos.weights)}, "json", args.out_weights)
    return 0


def _select_binary_prior(args, dists, params) -> float:
    source = args.prior_source
    if source == "fixed":
        return args.p_f
    if source == "avgest":
        return avg_est(read_records(args.records))
    if source == "linest":
        if args.model:
            model = read_model(args.model)
        elif args.records:
            model = lin_est_fit(read_records(args.records))
        else:
            raise ValidationError("linest needs --model or --records")
        if args.support_fg_count is None:
            raise ValidationError("linest needs --support-fg-count")
        return lin_est_predict(model, args.support_fg_count, args.slice_loc)
    if args.truth is None:
        raise ValidationError("ocp needs --truth")
    return ocp_prior(dists, read_mask(args.truth), params)


def cmd_segment(args) -> int:
    params = _params(args)
    features = read_feature_grid(args.features)
    protos = _load_prototypes(args)
    report: dict = {"mode": args.mode, "prior_source": args.prior_source}

    if args.mode == "mc":
        k = len(protos)
        if args.prior_source == "fixed":
            fg_priors = [float(x) for x in args.p_f_list.split(",")] if args.p_f_list else [
                args.p_f / k
            ] * k
            if len(fg_priors) != k:
                raise ValidationError(f"--p-f-list must provide {k} values")
            total_fg = math.fsum(fg_priors)
        else:
            dists = distance_map(features, protos)
            total_fg = _select_binary_prior(args, dists, params)
            fg_priors = [total_fg / k] * k
        if total_fg >= 1.0:
            raise ValidationError("foreground priors must leave room for background")
        priors = ClassPriors(tuple(fg_priors), 1.0 - total_fg)
        maps = tpm_mc_posterior(features, protos.vectors, params, priors)
        pred = predict_mask(maps)
        report["priors_foreground"] = fg_priors
        report["prior_background"] = priors.background
    else:
        if args.mode == "sp" and len(protos) != 1:
            raise ValidationError("sp mode expects exactly one prototype")
        dists = distance_map(features, protos)
        prior = _select_binary_prior(args, dists, params)
        priors = ClassPriors.binary(prior)
        if args.mode == "mp" and args.posterior == "mixture":
            prob = tpm_mp_posterior(features, protos, params, priors)
        else:
            prob = sp_posterior_from_distances(dists, params, priors)
        pred = predict_mask(prob)
        report["prior"] = prior
        report["posterior"] = args.posterior if args.mode == "mp" else "min_distance"

    write_mask(pred, args.out_mask)
    report["pred_fg_count"] = pred.fg_count()
    if args.truth:
        truth = read_mask(args.truth)
        if args.mode == "mc":
            per_class = {
                str(c): dice(pred, truth, c) for c in range(truth.num_classes + 1)
            }
            report["dice_per_class"] = per_class
            report["dice_mean_foreground"] = float(
                np.mean([per_class[str(c)] for c in range(1, truth.num_classes + 1)])
            )
        else:
            binary = GridMask(
                truth.height, truth.width, (truth.labels > 0).astype(np.int64), 1
            )
            report["dice"] = dice(pred, binary, 1)
            report["ce"] = cross_entropy(prob, binary)
    if args.report:
        emit_report(report, "json", args.report)
    return 0


def cmd_sweep(args) -> int:
    params = _params(args)
    features = read_feature_grid(args.features)
    protos = _load_prototypes(args)
    truth = read_mask(args.truth)
    dists = distance_map(features, protos)
    grid = np.linspace(args.grid_min, args.grid_max, args.grid_steps)
    if args.kind == "distance":
        result = threshold_sweep(dists, truth, params, grid)
        x_name = "t_d"
    else:
        result = prior_sweep(dists, truth, params, grid)
        x_name = "p_f"
    if args.out_ce:
        write_curve_csv(args.out_ce, result.grid, result.ce, x_name, "ce")
    if args.out_dice:
        write_curve_csv(args.out_dice, result.grid, result.dice, x_name, "dice")
    if args.report:
        emit_report(
            {
                "kind": result.kind,
                "argmin_ce": result.argmin_ce,
                "argmax_dice": result.argmax_dice,
                "ideal": result.ideal,
                "ideal_ce": result.ideal_ce,
                "ideal_dice": result.ideal_dice,
                "tie": result.tie,
                "grid_points": int(result.grid.size),
            },
            "json",
            args.report,
        )
    if args.plot:
        from .plotting import render_sweep

        render_sweep(result, args.plot)
    return 0


def cmd_eval(args) -> int:
    pred = read_mask(args.pred)
    truth = read_mask(args.truth)
    classes = range(1, max(pred.num_classes, truth.num_classes) + 1)
    rows = [{"class": c, "dice": dice(pred, truth, c)} for c in classes]
    report = {
        "dice_per_class": {str(r["class"]): r["dice"] for r in rows},
        "dice_mean_foreground": float(np.mean([r["dice"] for r in rows])),
    }
    if args.features and args.protos:
        params = _params(args)
        features = read_feature_grid(args.features)
        protos = _load_prototypes(args)
        dists = distance_map(features, protos)
        prob = sp_posterior_from_distances(dists, params, ClassPriors.binary(args.p_f))
        binary = GridMask(
            truth.height, truth.width, (truth.labels > 0).astype(np.int64), 1
        )
        report["ce"] = cross_entropy(prob, binary)
        report["p_f"] = args.p_f
    if args.format == "csv":
        emit_report(rows, "csv", args.report)
    else:
        emit_report(report, "json", args.report)
    return 0


def cmd_records(args) -> int:
    params = _params(args)
    rng = np.random.default_rng(args.seed)
    pairs = []
    for i in range(args.n):
        loc = i / (args.n - 1) if args.n > 1 else 0.5
        base = args.fg_min + (args.fg_max - args.fg_min) * math.sin(math.pi * loc)
        jitter = rng.uniform(-args.fg_jitter, args.fg_jitter) if args.fg_jitter else 0.0
        s_frac = float(np.clip(base, 0.01, 0.49))
        q_frac = float(np.clip(base + jitter, 0.01, 0.49))
        cfg_s = SceneConfig(
            grid_h=args.height, grid_w=args.width, dims=args.dims,
            clusters_per_class=args.clusters_per_class,
            sigma_fg=args.sigma_fg, sigma_bg=args.sigma_bg,
            fg_fraction=s_frac, seed=args.seed + 2 * i + 1,
        )
        cfg_q = SceneConfig(
            grid_h=args.height, grid_w=args.width, dims=args.dims,
            clusters_per_class=args.clusters_per_class,
            sigma_fg=args.sigma_fg, sigma_bg=args.sigma_bg,
            fg_fraction=q_frac, seed=args.seed + 2 * i + 2,
        )
        support = gen_scene(cfg_s)
        query = gen_scene(cfg_q, prototypes=support.prototypes_true)
        pairs.append((support, query, loc))
    records = build_records(
        pairs, params, proto_mode=args.mode, em_k=args.k, em_seed=args.seed
    )
    write_records(records, args.out)
    return 0


def cmd_fit_linest(args) -> int:
    records = read_records(args.records)
    model = lin_est_fit(records)
    write_model(model, args.out)
    print(
        f"intercept={model.intercept:.10g} "
        f"coef_fg_count={model.coef_fg_count:.10g} "
        f"coef_slice_loc={model.coef_slice_loc:.10g}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tiedproto",
        description="Tied-prototype feature-space segmentation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--dims", type=int, default=3)
    p.add_argument("--k-fg", type=int, default=1)
    p.add_argument("--clusters-per-class", type=int, default=1)
    p.add_argument("--sigma-fg", type=float, default=0.2)
    p.add_argument("--sigma-bg", type=float, default=1.0)
    p.add_argument("--fg-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--background", choices=("tied", "uniform"), default="tied")
    p.add_argument("--reuse-protos", help="feature file whose vectors fix the true prototypes")
    p.add_argument("--out-features", required=True)
    p.add_argument("--out-mask", required=True)
    p.add_argument("--out-protos", help="also write the true prototypes as a 1xM grid")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("protos", help="extract prototypes from a scene")
    p.add_argument("--features", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--k", type=int, default=1, help="1 = masked average pooling, >1 = EM")
    p.add_argument("--class-id", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=10)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out", required=True)
    p.add_argument("--out-weights", help="JSON file for the mixture weights")
    _add_model_params(p)
    p.set_defaults(func=cmd_protos)

    p = sub.add_parser("segment", help="posterior + mask prediction")
    p.add_argument("--features", required=True)
    p.add_argument("--protos", required=True)
    p.add_argument("--weights", help="JSON mixture weights for mp mode")
    p.add_argument("--mode", choices=("sp", "mp", "mc"), default="sp")
    p.add_argument("--prior-source", choices=("fixed", "avgest", "linest", "ocp"),
                   default="fixed")
    p.add_argument("--p-f", type=float, default=0.5, help="fixed foreground prior")
    p.add_argument("--p-f-list", help="comma-separated per-class priors (mc fixed)")
    p.add_argument("--records", help="records JSON for avgest/linest")
    p.add_argument("--model", help="fitted linest model JSON")
    p.add_argument("--support-fg-count", type=int, default=None)
    p.add_argument("--slice-loc", type=float, default=0.5)
    p.add_argument("--truth", help="truth mask (required for ocp, optional for metrics)")
    p.add_argument("--posterior", choices=("min-distance", "mixture"),
                   default="min-distance",
                   help="mp probability map construction")
    p.add_argument("--out-mask", required=True)
    p.add_argument("--report", help="JSON report path")
    _add_model_params(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("sweep", help="CE/Dice curves over thresholds or priors")
    p.add_argument("--features", required=True)
    p.add_argument("--protos", required=True)
    p.add_argument("--weights")
    p.add_argument("--truth", required=True)
    p.add_argument("--kind", choices=("distance", "prior"), default="distance")
    p.add_argument("--grid-min", type=float, default=0.01)
    p.add_argument("--grid-max", type=float, default=1.99)
    p.add_argument("--grid-steps", type=int, default=200)
    p.add_argument("--out-ce", help="two-column CSV (threshold, CE)")
    p.add_argument("--out-dice", help="two-column CSV (threshold, Dice)")
    p.add_argument("--report", help="JSON summary path")
    p.add_argument("--plot", help="render the curves to this image file")
    _add_model_params(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="score a predicted mask")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--features", help="query features (enables CE)")
    p.add_argument("--protos", help="prototype file (enables CE)")
    p.add_argument("--weights")
    p.add_argument("--p-f", type=float, default=0.5)
    _add_model_params(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("records", help="build prior-estimation records from scene pairs")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--dims", type=int, default=3)
    p.add_argument("--clusters-per-class", type=int, default=1)
    p.add_argument("--sigma-fg", type=float, default=0.2)
    p.add_argument("--sigma-bg", type=float, default=1.0)
    p.add_argument("--fg-min", type=float, default=0.05)
    p.add_argument("--fg-max", type=float, default=0.33)
    p.add_argument("--fg-jitter", type=float, default=0.0,
                   help="query-side fraction jitter amplitude")
    p.add_argument("--mode", choices=("sp", "mp"), default="sp")
    p.add_argument("--k", type=int, default=5, help="EM prototype count for mp mode")
    p.add_argument("--out", required=True)
    _add_model_params(p)
    p.set_defaults(func=cmd_records)

    p = sub.add_parser("fit-linest", help="fit the linear prior estimator")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_linest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
