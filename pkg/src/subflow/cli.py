"""Command-line entry point: synthetic data generation, subgroup discovery,
subgroup evaluation, and the gradient verification suite.

Exit codes: 0 success, 1 usage or data error, 2 training failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, data, discovery, flows, gradcheck, metrics, rules
from .errors import SubflowError

DENSITY_GRID_POINTS = 512


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def build_parser() -> _Parser:
    parser = _Parser(prog="subflow",
                     description="Find interpretable subgroups whose target "
                                 "distribution diverges from the marginal.")
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("discover", parents=[], help="run subgroup discovery on a CSV")
    d.add_argument("--data", required=True, help="input CSV with header row")
    d.add_argument("--target", required=True, help="name of the target column")
    d.add_argument("--k", type=int, default=5, help="number of subgroups")
    d.add_argument("--gamma", type=float, default=0.3, help="size-correction exponent")
    d.add_argument("--lambda", dest="lam", type=float, default=2.0,
                   help="diversity regularizer strength")
    d.add_argument("--t0", type=float, default=0.2, help="initial temperature")
    d.add_argument("--epochs-marginal", type=int, default=1000)
    d.add_argument("--epochs-subgroup", type=int, default=1000)
    d.add_argument("--lr-flow", type=float, default=5e-2)
    d.add_argument("--lr-rule", type=float, default=2e-2)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--robust-scale", action="store_true",
                   help="standardize the target by median/IQR (heavy tails)")
    d.add_argument("--truth", default=None,
                   help="optional truth JSON (as written by `subflow synth`) "
                        "to report F1 per subgroup")
    d.add_argument("--out", default="out", help="output directory")
    d.set_defaults(func=cmd_discover)

    s = sub.add_parser("synth", help="generate a planted-subgroup benchmark")
    s.add_argument("--n", type=int, default=20000)
    s.add_argument("--p", type=int, default=10)
    s.add_argument("--c", type=int, default=4)
    s.add_argument("--volume", type=float, default=0.1)
    s.add_argument("--dist", default="normal",
                   help=f"target distribution inside the subgroup; one of: "
                        f"{', '.join(data.TARGET_DISTRIBUTIONS)}")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="out", help="output directory")
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("eval", help="evaluate membership columns against a target")
    e.add_argument("--data", required=True)
    e.add_argument("--target", required=True)
    e.add_argument("--memberships", required=True,
                   help="CSV with row_index and soft_k/crisp_k columns")
    e.add_argument("--truth", default=None, help="optional truth JSON for F1")
    e.add_argument("--out", default="out", help="output directory")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--instances", type=int, default=100)
    g.set_defaults(func=cmd_gradcheck)
    return parser


def _json_dump(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_truth(path) -> np.ndarray:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return np.asarray(payload["labels"], dtype=bool)


def _crisp_metrics(y, crisp_mask, edges, full_hist, truth):
    """BC / size-corrected KL / size-corrected AMD for one crisp subgroup,
    plus F1 against the truth labels when available."""
    out = {"bc": None, "kl_size_corrected": None, "amd_size_corrected": None,
           "f1": None}
    frac = float(crisp_mask.mean())
    if crisp_mask.any():
        sub_hist = metrics.histogram(y[crisp_mask], edges)
        out["bc"] = metrics.bhattacharyya(sub_hist, full_hist)
        out["kl_size_corrected"] = metrics.size_corrected(
            metrics.kl_hist(sub_hist, full_hist), frac, 1.0)
        out["amd_size_corrected"] = metrics.size_corrected(
            metrics.amd(y[crisp_mask], y), frac, 1.0)
    if truth is not None:
        out["f1"] = metrics.f1(crisp_mask, truth)
    return out


def cmd_discover(args) -> int:
    started = time.perf_counter()
    try:
        dataset = data.load_csv(args.data, args.target)
        truth = _load_truth(args.truth) if args.truth else None
        if truth is not None and truth.size != dataset.n_samples:
            raise ValueError("truth labels do not match the dataset length")
    except (OSError, ValueError, SubflowError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 1

    cfg = discovery.TrainConfig(
        epochs_marginal=args.epochs_marginal, epochs_subgroup=args.epochs_subgroup,
        lr_flow=args.lr_flow, lr_rule=args.lr_rule, gamma=args.gamma, lam=args.lam,
        t0=args.t0, k_subgroups=args.k, seed=args.seed,
        robust_scale=args.robust_scale)
    try:
        marginal = discovery.fit_marginal_flow(dataset, cfg)
        results = discovery.discover_k(dataset, cfg, marginal_flow=marginal)
    except SubflowError as exc:
        print(f"training failure: {exc}", file=sys.stderr)
        return 2

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    y = dataset.target

    edges = metrics.fd_bin_edges(y)
    full_hist = metrics.histogram(y, edges)
    report_groups = []
    rule_lines = []
    successes = []
    for k, res in enumerate(results):
        if isinstance(res, discovery.FailedRound):
            report_groups.append({"round": k, "error": res.error})
            rule_lines.append(f"# round {k + 1} failed: {res.error}")
            continue
        crisp_mask = rules.crisp_eval_batch(res.crisp_rule, dataset.features)
        entry = {
            "round": k,
            "rule_text": res.rule_text,
            "kl_score": res.kl_score,
            "size_frac": res.size_frac,
            "crisp_size_frac": float(crisp_mask.mean()),
            "objective_value": res.objective_value,
            "subgroup_flow": res.subgroup_flow.to_vector().tolist(),
        }
        entry.update(_crisp_metrics(y, crisp_mask, edges, full_hist, truth))
        report_groups.append(entry)
        rule_lines.append(res.rule_text)
        successes.append((k, res, crisp_mask))

    report = {
        "tool": "subflow",
        "version": __version__,
        "seed": args.seed,
        "config": {
            "data": str(args.data), "target": args.target,
            "k_subgroups": cfg.k_subgroups, "gamma": cfg.gamma, "lam": cfg.lam,
            "t0": cfg.t0, "epochs_marginal": cfg.epochs_marginal,
            "epochs_subgroup": cfg.epochs_subgroup, "lr_flow": cfg.lr_flow,
            "lr_rule": cfg.lr_rule, "spline_bins": cfg.spline_bins,
            "spline_tail_bound": cfg.spline_tail_bound,
            "robust_scale": cfg.robust_scale,
            "epochs_flow_warmup": cfg.epochs_flow_warmup,
        },
        "marginal_flow": marginal.to_vector().tolist(),
        "subgroups": report_groups,
        "timing": {"total_seconds": time.perf_counter() - started},
    }
    _json_dump(report, out_dir / "report.json")
    (out_dir / "rules.txt").write_text("\n".join(rule_lines) + "\n", encoding="utf-8")

    with open(out_dir / "memberships.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["row_index"]
        for k, _, _ in successes:
            header += [f"soft_{k + 1}", f"crisp_{k + 1}"]
        writer.writerow(header)
        for i in range(dataset.n_samples):
            row = [i]
            for _, res, crisp_mask in successes:
                row += [repr(float(res.memberships[i])), int(crisp_mask[i])]
            writer.writerow(row)

    span = y.max() - y.min()
    grid = np.linspace(y.min() - 0.5 * span, y.max() + 0.5 * span,
                       DENSITY_GRID_POINTS)
    columns = {"y": grid, "marginal": np.exp(flows.log_prob(marginal, grid))}
    for k, res, _ in successes:
        columns[f"subgroup_{k + 1}"] = np.exp(flows.log_prob(res.subgroup_flow, grid))
    with open(out_dir / "densities.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns.keys())
        for i in range(DENSITY_GRID_POINTS):
            writer.writerow([repr(float(col[i])) for col in columns.values()])
    return 0


def cmd_synth(args) -> int:
    try:
        cfg = data.SynthConfig(n=args.n, p=args.p, c=args.c, volume=args.volume,
                               target_dist=args.dist, seed=args.seed)
    except ValueError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 1
    dataset, labels, planted = data.synth_generate(cfg)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "data.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(dataset.feature_names + ["y"])
        for i in range(cfg.n):
            writer.writerow([repr(float(v)) for v in dataset.features[i]]
                            + [repr(float(dataset.target[i]))])
    truth = {
        "labels": labels.astype(int).tolist(),
        "rule_text": rules.rule_to_text(planted, dataset.feature_names),
        "rule": [{"feature_index": c.feature_index, "kind": c.kind,
                  "lo": c.lo, "hi": c.hi} for c in planted.clauses],
        "seed": cfg.seed,
        "config": {"n": cfg.n, "p": cfg.p, "c": cfg.c, "volume": cfg.volume,
                   "target_dist": cfg.target_dist},
        "notes": {"exponential": "rate 0.5 (scale 2.0)"},
    }
    _json_dump(truth, out_dir / "truth.json")
    print(f"wrote {out_dir / 'data.csv'} ({cfg.n} rows, positive fraction "
          f"{labels.mean():.4f})")
    return 0


def _read_memberships(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path} is empty")
        rows = list(reader)
    table = np.asarray(rows, dtype=float)
    crisp_cols = {name: table[:, j].astype(bool)
                  for j, name in enumerate(header) if name.startswith("crisp_")}
    if not crisp_cols:
        raise ValueError("no crisp_* columns found in memberships file")
    return crisp_cols


def cmd_eval(args) -> int:
    try:
        dataset = data.load_csv(args.data, args.target)
        crisp_cols = _read_memberships(args.memberships)
        truth = _load_truth(args.truth) if args.truth else None
        n = dataset.n_samples
        for name, col in crisp_cols.items():
            if col.size != n:
                raise ValueError(
                    f"membership column {name} has {col.size} rows, dataset has {n}")
        if truth is not None and truth.size != n:
            raise ValueError("truth labels do not match the dataset length")
    except (OSError, ValueError, SubflowError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 1

    y = dataset.target
    edges = metrics.fd_bin_edges(y)
    full_hist = metrics.histogram(y, edges)
    out = {}
    for name, mask in sorted(crisp_cols.items()):
        entry = _crisp_metrics(y, mask, edges, full_hist, truth)
        entry["size_frac"] = float(mask.mean())
        out[name] = entry
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _json_dump(out, out_dir / "metrics.json")
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def cmd_gradcheck(args) -> int:
    errors = gradcheck.run_all(seed=args.seed, instances=args.instances)
    ok = True
    for name, err in errors.items():
        print(f"{name}: max relative error {err:.3e}")
        ok = ok and err <= gradcheck.TOLERANCE
    print("gradient check " + ("PASSED" if ok else "FAILED")
          + f" (tolerance {gradcheck.TOLERANCE:.0e})")
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
