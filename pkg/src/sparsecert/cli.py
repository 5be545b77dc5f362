"""Command-line front end.

Every file-producing run writes one JSON manifest next to its primary
output (``<out>.manifest.json``) recording the resolved parameters, seeds,
input/output file hashes, and wall-clock duration, so results can be traced
and re-verified byte-for-byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .attack import AttackConfig, robust_accuracy
from .data import (Dataset, gen_approx_sparse, gen_separable_binary,
                   load_dataset, load_model, save_dataset, save_model,
                   write_results)
from .dictionary import Dictionary, mutual_coherence
from .encoder import EncoderConfig, encode, encode_batch
from .errors import SparseCertError
from .model import (BoundInputs, Hypothesis, certified_radius,
                    generalization_bound, predict)
from .smoothing import SmoothingConfig, smooth_certify_full
from .train import TrainConfig, pretrain_dictionary, train_supervised

_GENERATIVE = "this command draws randomness; --seed is required"


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(command: str, args, inputs, outputs, seeds, started):
    params = {k: v for k, v in vars(args).items()
              if k not in ("func", "command") and not callable(v)}
    manifest = {
        "command": command,
        "params": params,
        "seeds": seeds,
        "library_version": __version__,
        "inputs": {p: _sha256(p) for p in inputs},
        "outputs": {p: _sha256(p) for p in outputs},
        "duration_seconds": time.time() - started,
    }
    path = outputs[0] + ".manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated float list: {text!r}")


def _require_model(path: str) -> Hypothesis:
    obj = load_model(path)
    if isinstance(obj, Dictionary):
        raise SparseCertError(
            f"{path} stores a dictionary only; a classifier model is required")
    return obj


def _dictionary_of(obj) -> Dictionary:
    return obj if isinstance(obj, Dictionary) else obj.dict


def _encoder_lam(obj, lam_flag) -> float:
    if lam_flag is not None:
        return lam_flag
    if isinstance(obj, Dictionary):
        raise SparseCertError(
            "model file has no penalty; pass --lambda explicitly")
    return obj.lam


# ---------------------------------------------------------------- commands

def _cmd_synth(args):
    if args.kind == "separable":
        dataset, dic, w_true = gen_separable_binary(
            args.d, args.p, args.k, args.m, args.margin, args.seed,
            lam=args.lam)
        model = Hypothesis(dict=dic, weights=w_true[:, None], lam=args.lam)
    else:
        dataset, dic, _ = gen_approx_sparse(
            args.d, args.p, args.k, args.m, args.nu, args.seed)
        model = dic
    save_dataset(dataset, args.out)
    outputs = [args.out]
    if args.model_out:
        save_model(model, args.model_out)
        outputs.append(args.model_out)
    return [], outputs, [args.seed]


def _cmd_pretrain(args):
    dataset = load_dataset(args.data)
    cfg = TrainConfig(lambda_target=args.lam, unroll_T=args.unroll,
                      epochs=args.epochs, batch_size=args.batch,
                      seed=args.seed, num_atoms=args.p)
    dic = pretrain_dictionary(dataset, cfg)
    save_model(dic, args.out)

    probe = dataset.samples[:min(256, dataset.m)]
    errs = []
    for row in probe:
        res = encode(dic, row, args.lam)
        errs.append(float(res.residual @ res.residual))
    write_results(
        [{"epochs": args.epochs, "reconstruction_mse": float(np.mean(errs)),
          "mu": mutual_coherence(dic)}],
        args.report)
    return [args.data], [args.out, args.report], [args.seed]


def _cmd_train(args):
    dataset = load_dataset(args.data)
    if dataset.labels is None:
        raise SparseCertError(f"{args.data} is unlabeled; training needs labels")
    if args.init:
        init = _dictionary_of(load_model(args.init))
    else:
        if args.p is None:
            raise SparseCertError("pass --init or --p for the dictionary size")
        rng = np.random.default_rng(args.seed)
        from .dictionary import normalize_columns
        init = normalize_columns(rng.standard_normal((dataset.d, args.p)))
    cfg = TrainConfig(alpha=args.alpha, beta=args.beta,
                      lambda_target=args.lam, unroll_T=args.unroll,
                      epochs=args.epochs, batch_size=args.batch,
                      seed=args.seed, dict_lr_scale=args.dict_lr_scale,
                      probe_s=args.probe_s)
    hyp, report = train_supervised(dataset, cfg, init)
    save_model(hyp, args.out)
    rows = [
        {"epoch": e, "loss": report.loss[e],
         "clean_acc": report.clean_accuracy[e],
         "mean_tau": report.mean_gap[e], "mu": report.coherence[e]}
        for e in range(len(report.loss))
    ]
    write_results(rows, args.report,
                  header=["epoch", "loss", "clean_acc", "mean_tau", "mu"])
    inputs = [args.data] + ([args.init] if args.init else [])
    return inputs, [args.out, args.report], [args.seed]


def _cmd_encode(args):
    obj = load_model(args.model)
    dic = _dictionary_of(obj)
    lam = _encoder_lam(obj, args.lam)
    dataset = load_dataset(args.data)
    results = encode_batch(dic, dataset.samples, lam,
                           threads=args.threads)
    header = (["sample_id", "iterations_used", "kkt_residual"]
              + [f"code_{j}" for j in range(dic.p)]
              + [f"slack_{j}" for j in range(dic.p)])
    rows = []
    for i, res in enumerate(results):
        row = {"sample_id": i, "iterations_used": res.iterations_used,
               "kkt_residual": res.kkt_residual}
        row.update({f"code_{j}": res.code[j] for j in range(dic.p)})
        row.update({f"slack_{j}": res.slack[j] for j in range(dic.p)})
        rows.append(row)
    write_results(rows, args.out, header=header)
    return [args.model, args.data], [args.out], []


def _cmd_gapscan(args):
    obj = load_model(args.model)
    dic = _dictionary_of(obj)
    dataset = load_dataset(args.data)
    rows = []
    for lam in args.lambdas:
        results = encode_batch(dic, dataset.samples, lam,
                               threads=args.threads)
        taus = np.min(np.stack([np.sort(r.slack) for r in results]), axis=0)
        rows.extend({"lambda": lam, "s": s, "tau_star": taus[s]}
                    for s in range(dic.p))
    write_results(rows, args.out, header=["lambda", "s", "tau_star"])
    return [args.model, args.data], [args.out], []


def _cmd_certify(args):
    hyp = _require_model(args.model)
    dataset = load_dataset(args.data)
    if dataset.labels is None:
        raise SparseCertError(f"{args.data} is unlabeled; certify needs labels")
    rows = []
    nu_star = np.inf
    any_correct = False
    radii_per_sample = np.full(dataset.m, -1.0)
    for i, (row, y) in enumerate(zip(dataset.samples, dataset.labels)):
        label, _, _ = predict(hyp, row)
        cert = certified_radius(hyp, row, label)
        rows.append({"sample_id": i, "label": int(y), "prediction": label,
                     "margin": cert.margin, "best_s": cert.best_s,
                     "tau": cert.tau_at_best_s, "radius": cert.radius})
        if label == int(y):
            any_correct = True
            nu_star = min(nu_star, cert.radius)
            radii_per_sample[i] = cert.radius
    if not any_correct:
        nu_star = 0.0
    rows.append({"sample_id": -1, "label": -1, "prediction": -1,
                 "margin": 0.0, "best_s": -1, "tau": 0.0,
                 "radius": float(nu_star)})
    write_results(rows, args.out,
                  header=["sample_id", "label", "prediction", "margin",
                          "best_s", "tau", "radius"])
    outputs = [args.out]
    if args.curve_out:
        budgets = args.radii if args.radii is not None else \
            list(np.linspace(0.0, hyp.lam / 2.0, 21))
        curve = [{"radius": r,
                  "certified_accuracy": float((radii_per_sample >= r).mean())}
                 for r in budgets]
        write_results(curve, args.curve_out,
                      header=["radius", "certified_accuracy"])
        outputs.append(args.curve_out)
    return [args.model, args.data], outputs, []


def _cmd_attack(args):
    hyp = _require_model(args.model)
    dataset = load_dataset(args.data)
    if dataset.labels is None:
        raise SparseCertError(f"{args.data} is unlabeled; attack needs labels")
    cfg = AttackConfig(budget=0.0, steps=args.steps,
                       step_size=args.step_size, restarts=args.restarts,
                       seed=args.seed)
    accs = robust_accuracy(hyp, dataset, args.budgets, cfg)
    rows = [{"budget": b, "robust_accuracy": float(a),
             "n_success": int(round((1.0 - a) * dataset.m)),
             "n_samples": dataset.m}
            for b, a in zip(args.budgets, accs)]
    write_results(rows, args.out,
                  header=["budget", "robust_accuracy", "n_success",
                          "n_samples"])
    return [args.model, args.data], [args.out], [args.seed]


def _cmd_smooth(args):
    hyp = _require_model(args.model)
    dataset = load_dataset(args.data)
    if dataset.labels is None:
        raise SparseCertError(f"{args.data} is unlabeled; smooth needs labels")
    cfg = SmoothingConfig(sigma=args.sigma, n0=args.n0, n=args.n,
                          alpha=args.alpha, seed=args.seed)
    rows = []
    for i, (row, y) in enumerate(zip(dataset.samples, dataset.labels)):
        res = smooth_certify_full(hyp, row, cfg, sample_index=i)
        rows.append({"sample_id": i, "label": int(y),
                     "prediction": res.label, "p_lower": res.p_lower,
                     "radius": res.radius})
    write_results(rows, args.out,
                  header=["sample_id", "label", "prediction", "p_lower",
                          "radius"])
    return [args.model, args.data], [args.out], [args.seed]


def _cmd_bound(args):
    if args.weight_bound is None:
        if args.model is None:
            raise SparseCertError("pass --B or --model to fix the weight bound")
        hyp = _require_model(args.model)
        weight_bound = float(np.linalg.norm(hyp.weights, 2))
    else:
        weight_bound = args.weight_bound
    report = generalization_bound(BoundInputs(
        loss_bound=args.b, loss_lipschitz=args.lip,
        weight_norm_bound=weight_bound, input_dim=args.d,
        num_atoms=args.p, num_samples=args.m, lam=args.lam,
        coherence_bound=args.eta, sparsity=args.s, perturbation=args.nu,
        confidence=args.delta, min_gap=args.tau))
    print(f"gap_bound = {report.gap_bound!r}")
    print(f"k_lambda = {report.k_lambda!r}")
    print(f"m_min = {report.m_min!r}")
    print(f"applicable = {report.applicable}")
    if args.out:
        write_results(
            [{"m": args.m, "d": args.d, "p": args.p, "lambda": args.lam,
              "eta": args.eta, "s": args.s, "nu": args.nu, "tau": args.tau,
              "delta": args.delta, "b": args.b, "B": weight_bound,
              "L": args.lip, "gap_bound": report.gap_bound,
              "k_lambda": report.k_lambda, "m_min": report.m_min,
              "applicable": report.applicable}],
            args.out)
        inputs = [args.model] if args.model else []
        return inputs, [args.out], []
    return None


# ---------------------------------------------------------------- parser

def _add_threads(sub):
    sub.add_argument("--threads", type=int,
                     default=int(os.environ.get("SSC_THREADS", "1")),
                     help="worker threads for per-sample work")


def build_parser() -> _Parser:
    parser = _Parser(prog="sparsecert",
                     description="Sparse-code classifiers with certified "
                                 "robustness: data, training, certificates, "
                                 "attacks, smoothing, and bounds.")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", parser_class=_Parser)

    sub = subs.add_parser("synth", help="generate a synthetic dataset")
    sub.add_argument("--kind", choices=("separable", "sparse"),
                     default="separable")
    sub.add_argument("--d", type=int, required=True)
    sub.add_argument("--p", type=int, required=True)
    sub.add_argument("--k", type=int, required=True)
    sub.add_argument("--m", type=int, required=True)
    sub.add_argument("--margin", type=float, default=0.05)
    sub.add_argument("--nu", type=float, default=0.05)
    sub.add_argument("--lambda", dest="lam", type=float, default=0.2)
    sub.add_argument("--seed", type=int, required=True, help=_GENERATIVE)
    sub.add_argument("--out", required=True, help="SSCD output path")
    sub.add_argument("--model-out", dest="model_out",
                     help="also save the generating dictionary/read-out (SSCM)")
    sub.set_defaults(func=_cmd_synth)

    sub = subs.add_parser("pretrain", help="unsupervised dictionary fit")
    sub.add_argument("--data", required=True)
    sub.add_argument("--p", type=int, required=True)
    sub.add_argument("--lambda", dest="lam", type=float, default=0.2)
    sub.add_argument("--unroll", type=int, default=25)
    sub.add_argument("--epochs", type=int, default=10)
    sub.add_argument("--batch", type=int, default=128)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True, help="SSCM output path")
    sub.add_argument("--report", required=True, help="report CSV path")
    sub.set_defaults(func=_cmd_pretrain)

    sub = subs.add_parser("train", help="supervised dictionary + classifier")
    sub.add_argument("--data", required=True)
    sub.add_argument("--init", help="SSCM dictionary to start from")
    sub.add_argument("--p", type=int, help="dictionary size when no --init")
    sub.add_argument("--alpha", type=float, default=1e-3)
    sub.add_argument("--beta", type=float, default=1e-4)
    sub.add_argument("--lambda", dest="lam", type=float, default=0.2)
    sub.add_argument("--unroll", type=int, default=25)
    sub.add_argument("--epochs", type=int, default=35)
    sub.add_argument("--batch", type=int, default=128)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--dict-lr-scale", dest="dict_lr_scale", type=float,
                     default=1.0)
    sub.add_argument("--probe-s", dest="probe_s", type=int, default=60)
    sub.add_argument("--out", required=True, help="SSCM output path")
    sub.add_argument("--report", required=True, help="per-epoch CSV path")
    sub.set_defaults(func=_cmd_train)

    sub = subs.add_parser("encode", help="codes and slack for every sample")
    sub.add_argument("--model", required=True)
    sub.add_argument("--data", required=True)
    sub.add_argument("--lambda", dest="lam", type=float)
    _add_threads(sub)
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=_cmd_encode)

    sub = subs.add_parser("gapscan",
                          help="minimal encoder gap vs sparsity level")
    sub.add_argument("--model", required=True)
    sub.add_argument("--data", required=True)
    sub.add_argument("--lambdas", type=_float_list, required=True)
    _add_threads(sub)
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=_cmd_gapscan)

    sub = subs.add_parser("certify", help="per-sample certified radii")
    sub.add_argument("--model", required=True)
    sub.add_argument("--data", required=True)
    sub.add_argument("--radii", type=_float_list,
                     help="budgets for the certified-accuracy curve")
    sub.add_argument("--curve-out", dest="curve_out",
                     help="certified-accuracy curve CSV")
    _add_threads(sub)
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=_cmd_certify)

    sub = subs.add_parser("attack", help="PGD robust accuracy vs budget")
    sub.add_argument("--model", required=True)
    sub.add_argument("--data", required=True)
    sub.add_argument("--budgets", type=_float_list, required=True)
    sub.add_argument("--steps", type=int, default=40)
    sub.add_argument("--step-size", dest="step_size", type=float)
    sub.add_argument("--restarts", type=int, default=3)
    sub.add_argument("--seed", type=int, required=True, help=_GENERATIVE)
    _add_threads(sub)
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=_cmd_attack)

    sub = subs.add_parser("smooth", help="randomized-smoothing certificates")
    sub.add_argument("--model", required=True)
    sub.add_argument("--data", required=True)
    sub.add_argument("--sigma", type=float, required=True)
    sub.add_argument("--n0", type=int, default=100)
    sub.add_argument("--n", type=int, default=10_000)
    sub.add_argument("--alpha", type=float, default=1e-4)
    sub.add_argument("--seed", type=int, required=True, help=_GENERATIVE)
    _add_threads(sub)
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=_cmd_smooth)

    sub = subs.add_parser("bound", help="generalization-gap calculator")
    sub.add_argument("--m", type=int, required=True)
    sub.add_argument("--d", type=int, required=True)
    sub.add_argument("--p", type=int, required=True)
    sub.add_argument("--lambda", dest="lam", type=float, required=True)
    sub.add_argument("--eta", type=float, required=True)
    sub.add_argument("--s", type=int, required=True)
    sub.add_argument("--nu", type=float, required=True)
    sub.add_argument("--tau", type=float, required=True)
    sub.add_argument("--delta", type=float, required=True)
    sub.add_argument("--b", type=float, default=1.0)
    sub.add_argument("--B", dest="weight_bound", type=float,
                     help="weight-norm bound; default: spectral norm of "
                          "--model weights")
    sub.add_argument("--L", dest="lip", type=float, default=1.0)
    sub.add_argument("--model", help="SSCM file to measure --B from")
    sub.add_argument("--out", help="optional single-row CSV")
    sub.set_defaults(func=_cmd_bound)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.error("a subcommand is required")
    started = time.time()
    try:
        result = args.func(args)
    except SystemExit:
        raise
    except (SparseCertError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if result is not None:
        inputs, outputs, seeds = result
        _write_manifest(args.command, args, inputs, outputs, seeds, started)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
