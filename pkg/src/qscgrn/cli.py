"""Command-line entry point: ``qscgrn {infer,synth,simulate,gradcheck,replay}``.

Exit codes: 0 success, 2 usage, 3 data error, 4 numeric divergence.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import tempfile
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from qscgrn import __version__, grn, ingest, model, statevec, synth, train

logger = logging.getLogger("qscgrn")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4

# Keys accepted in a --config file; each mirrors the flag of the same name.
CONFIG_KEYS = {
    "iters": int, "lr": float, "alpha": float, "threshold": float, "prune": float,
    "init": str, "seed": int, "init_low": float, "init_high": float,
    "init_mean": float, "init_sd": float, "log_every": int, "format": str, "genes": str,
}
INFER_DEFAULTS = {
    "iters": 50_000, "lr": 1.0, "alpha": 1.0, "threshold": None, "prune": grn.DEFAULT_PRUNE,
    "init": "zeros", "seed": None, "init_low": -0.1, "init_high": 0.1, "init_mean": 0.0,
    "init_sd": 0.1, "log_every": 100, "format": "auto", "genes": None,
}


class UsageError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"[{stage}] {exc}")
        self.stage = stage
        self.exc = exc


class _stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        logger.debug("stage %s", self.name)

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, (StageError, UsageError)):
            raise StageError(self.name, exc) from exc
        return False


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json_atomic(path: Path, doc: dict) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def _versions() -> dict:
    import scipy
    return {"qscgrn": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__,
            "platform": platform.platform()}


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            out[key] = CONFIG_KEYS[key](value)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return out


def resolve_infer_settings(args) -> dict:
    """Flags override the config file, which overrides the defaults."""
    settings = dict(INFER_DEFAULTS)
    if args.config:
        settings.update(read_config_file(args.config))
    for key in INFER_DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if settings["init"] not in train.INIT_STRATEGIES:
        raise UsageError(f"--init must be one of {', '.join(train.INIT_STRATEGIES)}")
    if settings["init"] != "zeros" and settings["seed"] is None:
        raise UsageError(f"--init {settings['init']} requires --seed for reproducibility")
    return settings


def run_infer(input_path, out_dir, settings: dict, baseline=None, argv=None) -> dict:
    started = time.perf_counter()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    with _stage("load"):
        X = ingest.load_matrix(input_path, settings["format"])
        if settings["genes"]:
            X = X.subset([g.strip() for g in settings["genes"].split(",") if g.strip()])
        if X.n_genes > statevec.max_qubits():
            raise statevec.CapacityError(
                f"{X.n_genes} genes exceeds the qubit cap of {statevec.max_qubits()}")
    with _stage("binarize"):
        Xb = ingest.binarize(X)
        p_obs, counts = ingest.observed_distribution(Xb)
    with _stage("init"):
        strategy = train.InitStrategy(
            settings["init"], settings["seed"], settings["init_low"], settings["init_high"],
            settings["init_mean"], settings["init_sd"])
        theta0 = train.init_theta(Xb.activation_ratios, strategy)
    config = train.TrainConfig(
        learning_rate=settings["lr"], max_iterations=settings["iters"],
        loss_threshold=settings["threshold"], alpha=settings["alpha"], init=strategy,
        log_every=settings["log_every"])
    with _stage("optimize"):
        result = train.optimize(p_obs, Xb.n_cells, config, theta0, counts=counts)
    with _stage("prune"):
        adjacency = grn.prune(result.theta, settings["prune"])
        network = grn.to_network(adjacency, Xb.gene_names, settings["prune"])
    score = None
    if baseline:
        with _stage("score"):
            score = grn.score_against_baseline(network, grn.load_baseline(baseline))

    with _stage("export"):
        outputs = {
            "theta": out_dir / "theta.csv",
            "history": out_dir / "history.csv",
            "adjacency": out_dir / "adjacency.csv",
            "distributions": out_dir / "distributions.csv",
            "network_dot": out_dir / "network.dot",
            "network_json": out_dir / "network.json",
            "network_graphml": out_dir / "network.graphml",
        }
        model.save_theta(outputs["theta"], result.theta)
        result.history.write_csv(outputs["history"])
        grn.write_matrix_csv(outputs["adjacency"], adjacency, Xb.gene_names)
        ingest.write_distribution(outputs["distributions"], {
            "count": counts,
            "p_obs": p_obs,
            "p_obs_smoothed": train.smooth(p_obs, Xb.n_cells, config.alpha),
            "p_out": result.final_p_out,
            "p_out_smoothed": train.smooth(result.final_p_out, Xb.n_cells, config.alpha),
        })
        grn.export(network, outputs["network_dot"], "dot")
        grn.export(network, outputs["network_json"], "json")
        grn.export(network, outputs["network_graphml"], "graphml")
        if score is not None:
            outputs["score"] = out_dir / "score.json"
            outputs["score"].write_text(json.dumps(score, indent=2) + "\n", encoding="utf-8")

    manifest = {
        "command": "infer",
        "argv": list(argv) if argv is not None else None,
        "started_at": datetime.now(timezone.utc).isoformat(),
        "inputs": {"matrix": {"path": str(Path(input_path).resolve()),
                              "sha256": _sha256(input_path)}},
        "settings": settings,
        "config": config.to_dict(),
        "seed": settings["seed"],
        "versions": _versions(),
        "genes": Xb.gene_names,
        "activation_ratios": Xb.activation_ratios.tolist(),
        "n_cells": Xb.n_cells,
        "stop_reason": result.stop_reason,
        "iterations": result.iterations,
        "final_loss": result.final_loss,
        "final_error": result.final_error,
        "n_edges": len(network.edges),
        "score": score,
        "outputs": {k: {"path": str(p.resolve()), "sha256": _sha256(p)}
                    for k, p in outputs.items()},
        "wall_clock_seconds": time.perf_counter() - started,
    }
    if baseline:
        manifest["inputs"]["baseline"] = {"path": str(Path(baseline).resolve()),
                                          "sha256": _sha256(baseline)}
    _write_json_atomic(out_dir / "manifest.json", manifest)
    return manifest


def cmd_infer(args) -> int:
    settings = resolve_infer_settings(args)
    manifest = run_infer(args.input, args.out_dir, settings, args.baseline, sys.argv)
    print(f"{len(manifest['genes'])} genes, {manifest['n_cells']} cells; "
          f"stopped after {manifest['iterations']} iterations ({manifest['stop_reason']}); "
          f"loss={manifest['final_loss']:.6g} error={manifest['final_error']:.6g}; "
          f"{manifest['n_edges']} edges -> {args.out_dir}")
    if manifest["score"]:
        s = manifest["score"]
        print(f"accuracy={s['accuracy']:.4f} f1={s['f1']:.4f} precision={s['precision']:.4f}")
    return EXIT_OK


def cmd_replay(args) -> int:
    doc = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    if doc.get("command") != "infer":
        raise UsageError("only infer manifests can be replayed")
    inputs = doc["inputs"]
    baseline = inputs.get("baseline", {}).get("path")
    manifest = run_infer(inputs["matrix"]["path"], args.out_dir, doc["settings"], baseline,
                         sys.argv)
    mismatched = [k for k, v in doc["outputs"].items()
                  if manifest["outputs"].get(k, {}).get("sha256") != v["sha256"]]
    for key in mismatched:
        print(f"differs: {key}")
    print("replay reproduced all outputs" if not mismatched else
          f"replay differs in {len(mismatched)} output(s)")
    return EXIT_OK if not mismatched else EXIT_DIVERGED


def cmd_synth(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    if args.theta:
        with _stage("load"):
            theta_star = model.load_theta(args.theta)
        n = theta_star.shape[0]
        if args.n is not None and args.n != n:
            raise UsageError(f"--n {args.n} disagrees with the {n}x{n} theta file")
    else:
        if args.n is None:
            raise UsageError("--n is required unless --theta is given")
        if args.seed is None:
            raise UsageError("a random theta needs --seed")
        with _stage("theta"):
            theta_star = synth.random_theta(args.n, rng, args.offdiag_range,
                                            consistent=not args.raw_theta)
    with _stage("sample"):
        Xb = synth.sample_cells(theta_star, args.m, rng)
    matrix_path = out_dir / "matrix.tsv"
    ingest.write_binarized(matrix_path, Xb)
    model.save_theta(out_dir / "theta_star.csv", theta_star)
    print(f"wrote {Xb.n_genes} x {Xb.n_cells} matrix to {matrix_path}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    with _stage("load"):
        theta = model.load_theta(args.theta)
    with _stage("simulate"):
        raw = statevec.probabilities(model.forward(theta))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        p_out = model.zero_and_rescale(raw)
    except model.DegenerateDistributionError as exc:
        ingest.write_distribution(out, {"raw": raw})
        raise StageError("rescale", exc) from exc
    ingest.write_distribution(out, {"raw": raw, "p_out": p_out})
    print(f"wrote {len(raw)} basis states to {out}")
    return EXIT_OK


def gradcheck(n: int, seed: int, h: float = 1e-5, m: int = 1000, alpha: float = 1.0) -> dict:
    """Analytic vs central finite-difference gradient on a random instance."""
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-np.pi, np.pi, size=(n, n))
    p_obs = rng.dirichlet(np.ones(1 << n))
    p_obs[0] = 0.0
    p_obs /= p_obs.sum()
    p_obs_hat = train.smooth(p_obs, m, alpha)

    def loss(t):
        return train.kl_loss(train.smooth(model.output_distribution(t), m, alpha), p_obs_hat)

    analytic = model.loss_gradient(theta, p_obs, m, alpha)
    numeric = np.zeros_like(theta)
    for k in range(n):
        for p in range(n):
            if k == p:
                continue
            up, down = theta.copy(), theta.copy()
            up[k, p] += h
            down[k, p] -= h
            numeric[k, p] = (loss(up) - loss(down)) / (2 * h)
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    big = scale >= 1e-6
    return {
        "n": n, "seed": seed, "h": h,
        "max_rel_err": float(np.max(diff[big] / scale[big])) if big.any() else 0.0,
        "max_abs_err_small": float(np.max(diff[~big])) if (~big).any() else 0.0,
        "max_abs_err": float(diff.max()),
    }


def cmd_gradcheck(args) -> int:
    if not 2 <= args.n <= 6:
        raise UsageError("--n must be between 2 and 6")
    report = gradcheck(args.n, args.seed, args.h)
    print(json.dumps(report, indent=2))
    return EXIT_OK if report["max_rel_err"] <= 1e-5 else EXIT_DIVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qscgrn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="fit the circuit to an expression matrix and emit the GRN")
    p.add_argument("--input", required=True, help="genes x cells TSV/CSV matrix")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", help="key = value file; flags take precedence")
    p.add_argument("--genes", help="comma-separated subset of genes to model")
    p.add_argument("--format", choices=("auto", "tsv", "csv"), help="input format")
    p.add_argument("--iters", type=int, help="maximum iterations (default 50000)")
    p.add_argument("--lr", type=float, help="learning rate (default 1)")
    p.add_argument("--alpha", type=float, help="Laplace smoothing parameter (default 1)")
    p.add_argument("--threshold", type=float, help="loss stopping threshold (default 2^n*1e-6)")
    p.add_argument("--prune", type=float, help="edge pruning threshold in radians (default 0.087)")
    p.add_argument("--init", choices=train.INIT_STRATEGIES, help="regulation-angle init")
    p.add_argument("--seed", type=int)
    p.add_argument("--init-low", type=float)
    p.add_argument("--init-high", type=float)
    p.add_argument("--init-mean", type=float)
    p.add_argument("--init-sd", type=float)
    p.add_argument("--log-every", type=int, help="history stride (default 100)")
    p.add_argument("--baseline", help="baseline GRN edge list (source,target,sign)")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("synth", help="sample a binarized matrix from a known theta")
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--theta", help="theta CSV to sample from (default: random)")
    p.add_argument("--offdiag-range", type=float, default=0.5)
    p.add_argument("--raw-theta", action="store_true",
                   help="skip the encoder-consistency adjustment of a random theta")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("simulate", help="write the output distribution of a theta")
    p.add_argument("--theta", required=True)
    p.add_argument("--out", default="distributions.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("replay", help="re-run an infer manifest and compare outputs")
    p.add_argument("manifest")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "m", 1) is not None and getattr(args, "m", 1) < 1:
            raise UsageError("--m must be >= 1")
        if getattr(args, "n", None) is not None and args.command == "synth" and args.n < 2:
            raise UsageError("--n must be >= 2")
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except StageError as exc:
        code = EXIT_DIVERGED if isinstance(exc.exc, train.DivergenceError) else EXIT_DATA
        print(f"qscgrn: error {exc}", file=sys.stderr)
        return code
    except (OSError, ValueError) as exc:
        print(f"qscgrn: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
