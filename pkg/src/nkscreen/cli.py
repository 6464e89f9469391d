"""Command-line pipeline: region preparation through SC-OPF benchmarking.

Every subcommand writes its outputs into a run directory named by a short
hash of the run manifest (subcommand, behavioral flags, seed, and content
hashes of the input artifacts).  Reruns with identical inputs land in the
same directory and, because artifact serialization is deterministic, produce
byte-identical files.  Artifact metadata carries the manifest hash so any
file can be traced back to the run that made it.

Exit codes: 0 success, 1 runtime failure, 2 invalid input, 3 certification
failure.
"""

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field

from . import __version__

CASE_DIR = os.path.join(os.path.dirname(__file__), "cases")


class ValidationError(ValueError):
    """Bad command input (missing file, inconsistent artifacts, bad flag)."""


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: int
    inputs: dict                      # artifact name -> sha256 of contents
    outputs: list = field(default_factory=list)
    version: str = __version__

    @property
    def hash(self):
        payload = {
            "subcommand": self.subcommand,
            "config": self.config,
            "seed": self.seed,
            "inputs": self.inputs,
            "version": self.version,
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def write(self, run_dir):
        from .artifacts import write_json
        write_json(os.path.join(run_dir, "manifest.json"),
                   {**asdict(self), "hash": self.hash})


def resolve_case(name):
    """A case argument is either a JSON file path or a bundled case name."""
    if os.path.isfile(name):
        return name
    bundled = os.path.join(CASE_DIR, name + ".json")
    if os.path.isfile(bundled):
        return bundled
    raise ValidationError(f"case not found: {name!r} is neither a file nor a "
                          f"bundled case in {CASE_DIR}")


def parse_counts(text):
    try:
        counts = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise ValidationError(f"counts must be comma-separated integers, got {text!r}")
    if len(counts) != 3 or any(c < 1 for c in counts):
        raise ValidationError("counts must be three positive integers: train,val,test")
    return counts


def parse_epochs(text):
    try:
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise ValidationError(f"decay epochs must be comma-separated integers, got {text!r}")


def hash_inputs(paths):
    from .artifacts import file_sha256
    hashed = {}
    for name, path in paths.items():
        if not os.path.isfile(path):
            raise ValidationError(f"input file not found: {path}")
        hashed[name] = file_sha256(path)
    return hashed


def start_run(subcommand, out_dir, config, seed, input_paths):
    manifest = RunManifest(subcommand=subcommand, config=config, seed=seed,
                           inputs=hash_inputs(input_paths))
    run_dir = os.path.join(out_dir, f"{subcommand}-{manifest.hash}")
    os.makedirs(run_dir, exist_ok=True)
    return manifest, run_dir


def finish_run(manifest, run_dir, outputs):
    manifest.outputs = sorted(outputs)
    manifest.write(run_dir)
    print(f"run directory: {run_dir}")
    return 0


def reuse_hit(manifest, run_dir):
    """True when the directory already holds a completed run of this manifest.

    A run counts as complete once finish_run wrote manifest.json, so a
    matching hash plus all listed outputs on disk means the artifacts can be
    taken as-is.
    """
    path = os.path.join(run_dir, "manifest.json")
    if not os.path.isfile(path):
        return False
    try:
        with open(path) as fh:
            stored = json.load(fh)
    except json.JSONDecodeError:
        return False
    if stored.get("hash") != manifest.hash:
        return False
    outputs = stored.get("outputs", [])
    return bool(outputs) and all(
        os.path.isfile(os.path.join(run_dir, name)) for name in outputs)


def load_region_file(path):
    from .region import load_region
    if not os.path.isfile(path):
        raise ValidationError(f"region file not found: {path}")
    return load_region(path)


# ---------------------------------------------------------------------------
# prepare-region


def cmd_prepare_region(args):
    import numpy as np

    from .datagen import DemandSampler, sample_injections
    from .grid import load_network
    from .region import (build_region, drop_constant_dims, eliminate_redundant,
                         filter_contingencies, prune_by_box_support,
                         save_region, standardize, with_box)

    case_path = resolve_case(args.case)
    counts = parse_counts(args.counts)
    config = {
        "case": os.path.basename(case_path),
        "k": args.k,
        "counts": list(counts),
        "rel_std": args.rel_std,
        "threshold": args.threshold,
        "inflate": args.inflate,
        "elimination": args.elimination,
        "aim_samples": args.aim_samples,
    }
    manifest, run_dir = start_run("prepare-region", args.out, config,
                                  args.seed, {"case": case_path})
    if args.reuse and reuse_hit(manifest, run_dir):
        print(f"run directory: {run_dir} (reused)")
        return 0

    net = load_network(case_path)
    stage_seconds = {}

    t0 = time.perf_counter()
    region0 = build_region(net, k=args.k)
    stage_seconds["build"] = time.perf_counter() - t0
    print(f"case {net.name}: {net.n} buses, {len(net.lines)} lines, k={args.k}")
    print(f"enumerated {len(region0.contingencies)} contingency sets, "
          f"{region0.n_rows} rows ({stage_seconds['build']:.1f}s)")

    sampler = DemandSampler(nominal=net.demand, rel_std=args.rel_std,
                            seed=args.seed)
    t0 = time.perf_counter()
    X = sample_injections(net, sampler, sum(counts))
    stage_seconds["sample"] = time.perf_counter() - t0
    X_train = X[:counts[0]]
    print(f"sampled {len(X)} secure-dispatch injections "
          f"({stage_seconds['sample']:.1f}s)")

    t0 = time.perf_counter()
    filtered = filter_contingencies(region0, X_train, threshold=args.threshold)
    stage_seconds["filter"] = time.perf_counter() - t0
    print(f"filtered: kept {len(filtered.contingencies)}/"
          f"{len(region0.contingencies)} contingencies, {filtered.n_rows} rows")

    t0 = time.perf_counter()
    reduced = drop_constant_dims(filtered, X)
    stage_seconds["drop_dims"] = time.perf_counter() - t0
    print(f"constant dims dropped: {net.n - reduced.dim} "
          f"({reduced.dim} columns remain), {reduced.n_rows} rows")

    boxed = with_box(reduced, X, inflate=args.inflate)
    t0 = time.perf_counter()
    if args.elimination == "exact":
        aims = boxed.project(X[:args.aim_samples]) if args.aim_samples > 0 else None
        pruned = eliminate_redundant(boxed, aim_points=aims)
    else:
        pruned = prune_by_box_support(boxed)
    stage_seconds["eliminate"] = time.perf_counter() - t0
    print(f"redundancy elimination ({args.elimination}): "
          f"{boxed.n_rows} -> {pruned.n_rows} rows "
          f"({stage_seconds['eliminate']:.1f}s)")

    Xr = pruned.project(X_train)
    mu = Xr.mean(axis=0)
    sigma = Xr.std(axis=0)
    final = standardize(pruned, mu, sigma)

    stamp = {
        "manifest": manifest.hash,
        "case": net.name,
        "k": args.k,
        "seed": args.seed,
        "rel_std": args.rel_std,
        "counts": list(counts),
        "threshold": args.threshold,
    }
    # timings go in the report, never in the artifacts: artifact bytes must
    # depend only on inputs and seed
    filtered.meta.update(stamp)
    final.meta.update(stamp)

    save_region(filtered, os.path.join(run_dir, "region_full.npz"))
    save_region(final, os.path.join(run_dir, "region.npz"))

    from .artifacts import write_json
    report = {
        "manifest": manifest.hash,
        "case": net.name,
        "k": args.k,
        "contingencies_enumerated": len(region0.contingencies),
        "contingencies_kept": len(final.contingencies),
        "rows_enumerated": int(region0.n_rows),
        "rows_filtered": int(filtered.n_rows),
        "rows_before_elimination": int(boxed.n_rows),
        "elimination": args.elimination,
        "rows": int(final.n_rows),
        "columns": int(final.dim),
        "stage_seconds": {k: round(v, 3) for k, v in stage_seconds.items()},
    }
    write_json(os.path.join(run_dir, "region_report.json"), report)

    print(f"reduced constraint matrix: {final.n_rows} rows x {final.dim} columns")
    return finish_run(manifest, run_dir,
                      ["region_full.npz", "region.npz", "region_report.json"])


# ---------------------------------------------------------------------------
# gen-data


def cmd_gen_data(args):
    import numpy as np

    from .datagen import DemandSampler, build_dataset, save_dataset
    from .grid import load_network

    case_path = resolve_case(args.case)
    counts = parse_counts(args.counts)
    full_path = os.path.join(args.region_dir, "region_full.npz")
    std_path = os.path.join(args.region_dir, "region.npz")
    config = {
        "case": os.path.basename(case_path),
        "counts": list(counts),
        "rel_std": args.rel_std,
    }
    manifest, run_dir = start_run(
        "gen-data", args.out, config, args.seed,
        {"case": case_path, "region_full": full_path, "region": std_path})
    if args.reuse and reuse_hit(manifest, run_dir):
        print(f"run directory: {run_dir} (reused)")
        return 0

    net = load_network(case_path)
    region_full = load_region_file(full_path)
    region_std = load_region_file(std_path)
    for region, name in ((region_full, "region_full"), (region_std, "region")):
        if region.n_full != net.n:
            raise ValidationError(f"{name} was built for a {region.n_full}-bus "
                                  f"case, got {net.n} buses")
        for key, want in (("seed", args.seed), ("rel_std", args.rel_std)):
            have = region.meta.get(key)
            if have is not None and have != want:
                raise ValidationError(
                    f"{name} was prepared with {key}={have}, got {key}={want}; "
                    f"labels must come from the sampling that shaped the region")

    sampler = DemandSampler(nominal=net.demand, rel_std=args.rel_std,
                            seed=args.seed)
    t0 = time.perf_counter()
    ds = build_dataset(net, sampler, region_full, counts=counts)
    ds.attach_transform(region_std)
    elapsed = time.perf_counter() - t0

    ds.meta["manifest"] = manifest.hash
    ds.meta["region_manifest"] = region_std.meta.get("manifest", "")
    save_dataset(ds, os.path.join(run_dir, "dataset.npz"))

    for name, sl in (("train", ds.train), ("val", ds.val), ("test", ds.test)):
        y = ds.labels[sl]
        print(f"{name}: {len(y)} samples, {y.mean():.3f} insecure fraction")
    print(f"labeled {len(ds.labels)} injections against {region_full.n_rows} "
          f"rows ({elapsed:.1f}s)")
    return finish_run(manifest, run_dir, ["dataset.npz"])


# ---------------------------------------------------------------------------
# train


def cmd_train(args):
    import numpy as np

    from .datagen import load_dataset
    from .icnn import save_checkpoint
    from .oracle import certify
    from .training import TrainingConfig, train

    config = {
        "depth": args.depth,
        "width": args.width,
        "warm_epochs": args.warm_epochs,
        "scaling_epochs": args.scaling_epochs,
        "batch_size": args.batch_size,
        "pos_weight": args.pos_weight,
        "lr": args.lr,
        "decay_epochs": list(parse_epochs(args.decay_epochs)),
    }
    manifest, run_dir = start_run(
        "train", args.out, config, args.seed,
        {"dataset": args.dataset, "region": args.region})
    # a train manifest is only ever written after the certification gate
    # passed, so a reuse hit is always a certified checkpoint
    if args.reuse and reuse_hit(manifest, run_dir):
        print(f"run directory: {run_dir} (reused)")
        return 0

    ds = load_dataset(args.dataset)
    region = load_region_file(args.region)
    if ds.mu is None:
        raise ValidationError("dataset has no standardization transform; "
                              "regenerate it with gen-data")
    if not (np.allclose(ds.mu, region.mu) and np.allclose(ds.sigma, region.sigma)
            and np.array_equal(ds.dim_map, region.dim_map)):
        raise ValidationError("dataset and region standardizations disagree; "
                              "they must come from the same prepare-region run")

    Z = ds.standardized()
    y = ds.labels
    cfg = TrainingConfig(
        depth=args.depth, width=args.width,
        warm_epochs=args.warm_epochs, scaling_epochs=args.scaling_epochs,
        batch_size=args.batch_size, positive_class_weight=args.pos_weight,
        learning_rate=args.lr, decay_epochs=parse_epochs(args.decay_epochs),
        seed=args.seed,
    )

    t0 = time.perf_counter()
    clf, record = train(region.A, region.b,
                        Z[ds.train], y[ds.train], Z[ds.val], y[ds.val], cfg,
                        box_lower=region.box_lower, box_upper=region.box_upper)
    elapsed = time.perf_counter() - t0
    print(f"trained {args.warm_epochs}+{args.scaling_epochs} epochs in "
          f"{elapsed:.1f}s; selected epoch {record.best_epoch} "
          f"(val fpr {clf.meta['val_fpr']:.4f}), r = {clf.r:.6f}")

    # independent gate before anything is written: never persist an
    # uncertified checkpoint
    report = certify(clf.params, region.A, region.b, r=clf.r, v=clf.v)
    print(f"certification: {report.verdict} "
          f"(worst margin {report.margins.min():.3e}, {report.n_lp} LPs)")
    if not report.reliable:
        print("refusing to write checkpoint", file=sys.stderr)
        return 3

    clf.mu = region.mu
    clf.sigma = region.sigma
    clf.dim_map = region.dim_map

    pred_infeasible = ~clf.predict_feasible(Z[ds.test])
    y_test = y[ds.test].astype(bool)
    fpr = float(pred_infeasible[~y_test].mean()) if (~y_test).any() else 0.0
    fnr = float((~pred_infeasible)[y_test].mean()) if y_test.any() else 0.0
    print(f"test: fpr {fpr:.4f}, fnr {fnr:.4f} over {len(y_test)} samples")

    clf.meta.update({
        "manifest": manifest.hash,
        "dataset_manifest": ds.meta.get("manifest", ""),
        "region_manifest": region.meta.get("manifest", ""),
        "test_fpr": fpr,
        "test_fnr": fnr,
    })
    save_checkpoint(clf, os.path.join(run_dir, "checkpoint.npz"))
    record.to_csv(os.path.join(run_dir, "training_log.csv"))
    return finish_run(manifest, run_dir, ["checkpoint.npz", "training_log.csv"])


# ---------------------------------------------------------------------------
# certify


def cmd_certify(args):
    from .artifacts import write_json
    from .icnn import load_checkpoint
    from .oracle import certify

    manifest, run_dir = start_run(
        "certify", args.out, {"tol": args.tol}, 0,
        {"checkpoint": args.checkpoint, "region": args.region})
    if args.reuse and reuse_hit(manifest, run_dir):
        with open(os.path.join(run_dir, "certify_report.json")) as fh:
            stored = json.load(fh)
        print(f"run directory: {run_dir} (reused)")
        return 0 if stored.get("verdict") == "reliable" else 3

    import numpy as np

    clf = load_checkpoint(args.checkpoint)
    region = load_region_file(args.region)
    if clf.params.n_inputs != region.dim:
        raise ValidationError(
            f"checkpoint takes {clf.params.n_inputs} inputs but the region "
            f"has {region.dim} columns")
    if not (np.allclose(clf.mu, region.mu) and np.allclose(clf.sigma, region.sigma)
            and np.array_equal(clf.dim_map, region.dim_map)):
        raise ValidationError("checkpoint and region coordinates disagree; "
                              "certify against the region the classifier was "
                              "trained in")

    t0 = time.perf_counter()
    report = certify(clf.params, region.A, region.b, r=clf.r, v=clf.v,
                     tol=args.tol)
    elapsed = time.perf_counter() - t0

    out = {
        "manifest": manifest.hash,
        "checkpoint_manifest": clf.meta.get("manifest", ""),
        "r": clf.r,
        "tol": args.tol,
        "seconds": round(elapsed, 3),
        **report.to_dict(),
    }
    write_json(os.path.join(run_dir, "certify_report.json"), out)
    print(f"certification: {report.verdict} over {region.n_rows} rows, "
          f"worst margin {report.margins.min():.3e} at row {report.worst_row} "
          f"({report.n_lp} LPs, {elapsed:.1f}s)")
    finish_run(manifest, run_dir, ["certify_report.json"])
    return 0 if report.reliable else 3


# ---------------------------------------------------------------------------
# screen


def cmd_screen(args):
    import numpy as np

    from .artifacts import write_json
    from .baselines import screen_batch, time_screening
    from .datagen import load_dataset
    from .icnn import load_checkpoint

    manifest, run_dir = start_run(
        "screen", args.out, {"repeats": args.repeats}, 0,
        {"checkpoint": args.checkpoint, "dataset": args.dataset,
         "region_full": args.region_full})
    if args.reuse and reuse_hit(manifest, run_dir):
        print(f"run directory: {run_dir} (reused)")
        return 0

    clf = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.dataset)
    region_full = load_region_file(args.region_full)
    if ds.mu is None:
        raise ValidationError("dataset has no standardization transform")
    if not (np.allclose(ds.mu, clf.mu) and np.allclose(ds.sigma, clf.sigma)
            and np.array_equal(ds.dim_map, clf.dim_map)):
        raise ValidationError("dataset and checkpoint standardizations disagree")

    X = ds.x[ds.test]
    y = ds.labels[ds.test].astype(bool)

    def icnn_pass():
        return ~clf.predict_feasible(ds.standardized(X))

    times = []
    for _ in range(max(1, args.repeats)):
        t0 = time.perf_counter()
        pred_infeasible = icnn_pass()
        times.append(time.perf_counter() - t0)
    icnn_seconds = float(np.median(times))

    fpr = float(pred_infeasible[~y].mean()) if (~y).any() else 0.0
    fnr = float((~pred_infeasible)[y].mean()) if y.any() else 0.0
    confusion = {
        "true_insecure_flagged": int((pred_infeasible & y).sum()),
        "missed_insecure": int((~pred_infeasible & y).sum()),
        "false_alarms": int((pred_infeasible & ~y).sum()),
        "true_secure_passed": int((~pred_infeasible & ~y).sum()),
    }

    early = screen_batch(region_full, X, early_exit=True)
    full = screen_batch(region_full, X, early_exit=False)
    sweep = time_screening(region_full, X, repeats=max(1, args.repeats))

    report = {
        "manifest": manifest.hash,
        "checkpoint_manifest": clf.meta.get("manifest", ""),
        "n_test": int(len(y)),
        "fpr": fpr,
        "fnr": fnr,
        "confusion": confusion,
        "icnn_seconds": icnn_seconds,
        "early_exit_seconds": sweep["early_exit_seconds"],
        "full_sweep_seconds": sweep["full_sweep_seconds"],
        "speedup_vs_early_exit": sweep["early_exit_seconds"] / icnn_seconds,
        "speedup_vs_full_sweep": sweep["full_sweep_seconds"] / icnn_seconds,
        "exhaustive_agreement_early": float((early == ds.labels[ds.test]).mean()),
        "exhaustive_agreement_full": float((full == ds.labels[ds.test]).mean()),
    }
    write_json(os.path.join(run_dir, "screen_report.json"), report)

    print(f"screened {len(y)} samples: fnr {fnr:.4f}, fpr {fpr:.4f}")
    print(f"icnn {icnn_seconds * 1e3:.1f}ms vs sweep "
          f"{sweep['early_exit_seconds'] * 1e3:.1f}ms (early exit) / "
          f"{sweep['full_sweep_seconds'] * 1e3:.1f}ms (full): "
          f"speedup {report['speedup_vs_early_exit']:.1f}x / "
          f"{report['speedup_vs_full_sweep']:.1f}x")
    return finish_run(manifest, run_dir, ["screen_report.json"])


# ---------------------------------------------------------------------------
# scopf-bench


def cmd_scopf_bench(args):
    from .artifacts import write_json
    from .datagen import load_dataset
    from .grid import load_network
    from .icnn import load_checkpoint
    from .scopf import benchmark_scopf, save_benchmark

    case_path = resolve_case(args.case)
    config = {
        "case": os.path.basename(case_path),
        "limit": args.limit,
        "backend": args.backend,
    }
    manifest, run_dir = start_run(
        "scopf-bench", args.out, config, 0,
        {"case": case_path, "checkpoint": args.checkpoint,
         "dataset": args.dataset, "region_full": args.region_full})
    if args.reuse and reuse_hit(manifest, run_dir):
        print(f"run directory: {run_dir} (reused)")
        return 0

    net = load_network(case_path)
    clf = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.dataset)
    region_full = load_region_file(args.region_full)
    if ds.d is None:
        raise ValidationError("dataset stores no demand draws; regenerate it "
                              "with gen-data")

    demands = ds.d[ds.test]
    if args.limit > 0:
        demands = demands[:args.limit]

    from .scopf import region_safe_for_dispatch
    if not region_safe_for_dispatch(net, region_full, demands):
        raise ValidationError(
            "the region folds a dispatchable injection dimension; pass the "
            "full-dimension region (region_full.npz)")

    records, summary = benchmark_scopf(net, demands, region_full, clf,
                                       backend=args.backend)
    summary["manifest"] = manifest.hash
    save_benchmark(records, summary,
                   os.path.join(run_dir, "scopf_instances.csv"),
                   os.path.join(run_dir, "scopf_summary.json"))

    print(f"solved {summary['instances']} instances: "
          f"{summary['feasible_full']} feasible (full), "
          f"{summary['feasible_icnn']} feasible (icnn)")
    print(f"mean excess cost {summary['mean_excess_cost'] * 100:.3f}%, "
          f"extra infeasible {summary['extra_infeasible_fraction'] * 100:.2f}%, "
          f"conservativeness violations {summary['conservativeness_violations']}")
    print(f"runtime: full {summary['mean_runtime_full'] * 1e3:.1f}ms, "
          f"icnn {summary['mean_runtime_icnn'] * 1e3:.1f}ms "
          f"(speedup {summary['speedup']:.2f}x)")
    return finish_run(manifest, run_dir,
                      ["scopf_instances.csv", "scopf_summary.json"])


# ---------------------------------------------------------------------------
# parser and dispatch


def add_run_flags(p):
    p.add_argument("--out", default="runs",
                   help="directory that receives the run directory")
    p.add_argument("--reuse", action="store_true",
                   help="skip the run when this exact manifest already "
                        "completed under --out")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nkscreen",
        description="Certified contingency screening with input-convex "
                    "classifiers")
    parser.add_argument("--threads", type=int, default=0,
                        help="cap BLAS thread pools (0 leaves them alone)")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("prepare-region",
                       help="build, filter, reduce, and standardize the "
                            "secure-injection polytope")
    p.add_argument("--case", required=True,
                   help="case JSON path or bundled case name (e.g. case39)")
    p.add_argument("--k", type=int, default=2, help="contingency order")
    p.add_argument("--counts", default="10000,2000,2000",
                   help="train,val,test sample counts")
    p.add_argument("--rel-std", type=float, default=0.15,
                   help="relative demand standard deviation")
    p.add_argument("--threshold", type=float, default=0.9,
                   help="drop contingencies violated by more than this "
                        "fraction of training samples")
    p.add_argument("--inflate", type=float, default=1.2,
                   help="bounding-box inflation factor")
    p.add_argument("--elimination", default="support",
                   choices=["support", "exact"],
                   help="row reduction: per-row box-support screening "
                        "(reference pipeline) or LP-exact minimal form")
    p.add_argument("--aim-samples", type=int, default=500,
                   help="sample points used to aim facet-certification rays "
                        "(exact elimination only)")
    p.add_argument("--seed", type=int, default=0)
    add_run_flags(p)
    p.set_defaults(func=cmd_prepare_region)

    p = sub.add_parser("gen-data",
                       help="sample injections and label them against the "
                            "full region")
    p.add_argument("--case", required=True)
    p.add_argument("--region-dir", required=True,
                   help="prepare-region run directory")
    p.add_argument("--counts", default="10000,2000,2000")
    p.add_argument("--rel-std", type=float, default=0.15)
    p.add_argument("--seed", type=int, default=0)
    add_run_flags(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train",
                       help="train a classifier and certify it against the "
                            "reduced region")
    p.add_argument("--dataset", required=True)
    p.add_argument("--region", required=True,
                   help="reduced standardized region (region.npz)")
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--width", type=int, default=50)
    p.add_argument("--warm-epochs", type=int, default=500)
    p.add_argument("--scaling-epochs", type=int, default=9500)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--pos-weight", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--decay-epochs", default="1500,8500")
    p.add_argument("--seed", type=int, default=0)
    add_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("certify",
                       help="re-verify a checkpoint against a region")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--region", required=True)
    p.add_argument("--tol", type=float, default=1e-7)
    add_run_flags(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("screen",
                       help="time classifier screening against exhaustive "
                            "row sweeps on the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--region-full", required=True,
                   help="full-dimension filtered region (region_full.npz)")
    p.add_argument("--repeats", type=int, default=3)
    add_run_flags(p)
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("scopf-bench",
                       help="compare classifier-constrained dispatch against "
                            "the full security-constrained problem")
    p.add_argument("--case", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--region-full", required=True,
                   help="dispatch region; a reduced region is accepted only "
                        "when every folded dimension is provably "
                        "non-dispatchable")
    p.add_argument("--limit", type=int, default=0,
                   help="cap the number of test demand instances (0 = all)")
    p.add_argument("--backend", default="auto",
                   choices=["auto", "simplex", "highs"])
    add_run_flags(p)
    p.set_defaults(func=cmd_scopf_bench)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads > 0:
        # must happen before numpy loads its BLAS; heavy imports are
        # deferred into the command bodies for exactly this reason
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 1
    except Exception as e:
        from .training import CertificationFailed
        if isinstance(e, CertificationFailed):
            print(f"certification failure: {e}", file=sys.stderr)
            return 3
        if isinstance(e, (ValueError, KeyError, FileNotFoundError,
                          IsADirectoryError, NotADirectoryError)):
            print(f"invalid input: {e}", file=sys.stderr)
            return 2
        import traceback
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
