"""``mpsa`` command-line interface.

Subcommands: generate, fit, cluster, denoise, benchmark. Settings files are
JSON; command-line flags override values read from a file.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from . import benchmark, modelio, psa
from .datagen import SpectrumSpec, SyntheticSpec, make_rng, sample_mpsa
from .denoise import METHODS, DenoiseConfig, denoise_image
from .errors import ConfigError, InputError, NumericalError, ParseError
from .fileio import atomic_write_text, format_csv, read_data_csv, read_labels_csv, write_data_csv
from .metrics import ari
from .mixture import STRATEGIES, FitConfig, cpem_fit, em_fit, predict
from .pgm import read_pgm, write_pgm

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ComponentSettings(_Strict):
    composition: list[int]
    lambda1: float
    snr: float | None = None
    delta: float | None = None


class GenerateSettings(_Strict):
    n: int
    weights: list[float]
    components: list[ComponentSettings]
    mean_bound: float | None = None
    means: list[list[float]] | None = None
    distribution: Literal["gaussian", "skew-normal"] = "gaussian"
    skew_shape: float | list[float] | None = None


class FitSettings(_Strict):
    C: int | None = None
    strategy: str | None = None
    alpha: float | Literal["bic"] | None = None
    types: str | None = None
    reg_eps: float | None = None
    max_iter: int | None = None
    tol: float | None = None
    seed: int | None = None
    kmeans_restarts: int | None = None
    kmeans_max_iter: int | None = None
    init_types: Literal["spherical", "full"] | None = None
    relative_n: Literal["component", "total"] | None = None


PRESETS = {
    "fig1": lambda: SyntheticSpec(
        1000, (0.4, 0.3, 0.3),
        [SpectrumSpec((1, 1), 1.0, snr=0.01), SpectrumSpec((2,), 0.5, snr=0.01), SpectrumSpec((2,), 0.1, snr=0.01)],
        mean_bound=8.0,
    ),
    **{name: s.make_spec for name, s in benchmark.SUITES.items() if s.make_spec is not None},
}


def _load_json(path, model: type[BaseModel]):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(exc.strerror or str(exc), path=str(path)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{exc.msg} (line {exc.lineno}, column {exc.colno})", path=str(path)) from exc
    try:
        return model.model_validate(doc)
    except ValidationError as exc:
        err = exc.errors()[0]
        where = ".".join(str(part) for part in err["loc"]) or "<root>"
        raise ConfigError(err["msg"], path=f"{path}:{where}") from None


def synthetic_spec_from(settings: GenerateSettings, origin: str = "spec") -> SyntheticSpec:
    comps = []
    for i, c in enumerate(settings.components):
        try:
            comps.append(SpectrumSpec(tuple(c.composition), c.lambda1, snr=c.snr, delta=c.delta))
        except InputError as exc:
            raise ConfigError(str(exc), path=f"{origin}:components.{i}") from None
    shape = settings.skew_shape
    try:
        return SyntheticSpec(
            settings.n, settings.weights, comps, mean_bound=settings.mean_bound,
            means=None if settings.means is None else np.array(settings.means),
            distribution=settings.distribution,
            skew_shape=None if shape is None else np.asarray(shape, dtype=float),
        )
    except InputError as exc:
        raise ConfigError(str(exc), path=origin) from None


def parse_types(text: str, p: int, C: int) -> list[tuple[int, ...]]:
    """``"p"``/``"spherical"``, ``"full"``, one composition ``"1,1"`` for all
    components, or one per component separated by ``;`` (``"1,1;2;2"``)."""
    text = text.strip()
    if text in ("p", "spherical"):
        return [psa.spherical_type(p)] * C
    if text == "full":
        return [psa.full_type(p)] * C
    try:
        parts = [tuple(int(v) for v in chunk.split(",")) for chunk in text.split(";")]
    except ValueError:
        raise ConfigError(f"cannot parse composition list {text!r}", path="types") from None
    if len(parts) == 1:
        parts = parts * C
    if len(parts) != C:
        raise ConfigError(f"{len(parts)} compositions given for C={C}", path="types")
    try:
        return [psa.as_composition(g, p) for g in parts]
    except InputError as exc:
        raise ConfigError(str(exc), path="types") from None


def _alpha(text):
    if text is None or text == "bic":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"alpha must be a number or 'bic', got {text!r}") from None


def resolve_fit(args, defaults: FitConfig | None = None) -> tuple[FitConfig, FitSettings]:
    """Merge the settings file (if any) with command-line flags."""
    settings = _load_json(args.config, FitSettings) if getattr(args, "config", None) else FitSettings()
    flags = {
        "C": getattr(args, "C", None), "strategy": args.strategy, "alpha": args.alpha, "types": getattr(args, "types", None),
        "reg_eps": args.reg_eps, "max_iter": args.max_iter, "tol": args.tol, "seed": args.seed,
    }
    merged = settings.model_copy(update={k: v for k, v in flags.items() if v is not None})
    base = defaults or FitConfig()
    kwargs = {
        "strategy": merged.strategy, "alpha": merged.alpha, "reg_eps": merged.reg_eps, "max_iter": merged.max_iter,
        "rel_tol": merged.tol, "seed": merged.seed, "kmeans_restarts": merged.kmeans_restarts,
        "kmeans_max_iter": merged.kmeans_max_iter, "init_types": merged.init_types, "relative_n": merged.relative_n,
    }
    kwargs = {k: v for k, v in kwargs.items() if v is not None}
    try:
        config = FitConfig(**{**vars(base), **kwargs})
    except InputError as exc:
        raise ConfigError(str(exc)) from None
    return config, merged


def cmd_generate(args) -> int:
    if (args.spec is None) == (args.preset is None):
        raise ConfigError("give exactly one of --spec and --preset")
    if args.spec is not None:
        spec = synthetic_spec_from(_load_json(args.spec, GenerateSettings), origin=args.spec)
    else:
        spec = PRESETS[args.preset]()
    if args.n is not None:
        try:
            spec = SyntheticSpec(args.n, spec.weights, spec.components, spec.mean_bound, spec.means,
                                 spec.distribution, spec.skew_shape)
        except InputError as exc:
            raise ConfigError(str(exc), path="n") from None
    X, labels, truth = sample_mpsa(spec, make_rng(args.seed))
    write_data_csv(args.out, X, labels)
    truth_path = args.truth or os.path.splitext(args.out)[0] + ".truth.json"
    atomic_write_text(truth_path, modelio.serialize(truth))
    print(f"wrote {X.shape[0]} samples (p={X.shape[1]}) to {args.out}; ground truth to {truth_path}")
    return EXIT_OK


def trace_csv(trace) -> str:
    rows = [
        [r.iteration, repr(r.loglik), repr(r.penalized_loglik), r.kappa,
         ";".join(psa.format_composition(g) for g in r.compositions)]
        for r in trace.records
    ]
    return format_csv(["iteration", "loglik", "penalized_ll", "kappa", "compositions"], rows)


def cmd_fit(args) -> int:
    config, settings = resolve_fit(args)
    if settings.C is None:
        raise ConfigError("the number of components is required (-C)", path="C")
    X, labels = read_data_csv(args.data)
    C = settings.C
    types = parse_types(settings.types, X.shape[1], C) if settings.types else None
    if config.supervised and labels is None:
        raise ConfigError("supervised fitting needs a label column")
    fit_labels = labels if config.supervised else None
    if config.strategy == "fixed":
        if types is None:
            raise ConfigError("--strategy fixed needs --types", path="types")
        model, trace = em_fit(X, C, types, config, labels=fit_labels)
    else:
        model, trace = cpem_fit(X, C, config, labels=fit_labels, initial_types=types)
    atomic_write_text(args.out, modelio.serialize(model))
    if args.trace:
        atomic_write_text(args.trace, trace_csv(trace))
    last = trace.records[-1]
    print(
        f"iterations={trace.n_iter} converged={trace.converged} kappa={model.kappa} "
        f"penalized_ll={last.penalized_loglik:.6f} "
        f"compositions={' '.join(psa.format_composition(g) for g in model.compositions)}"
    )
    return EXIT_OK


def _read_model(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(exc.strerror or str(exc), str(path)) from exc
    return modelio.deserialize(text)


def cmd_cluster(args) -> int:
    X, _ = read_data_csv(args.data)
    model = _read_model(args.model)
    if model.dim != X.shape[1]:
        raise InputError(f"model dimension {model.dim} differs from data dimension {X.shape[1]}")
    labels = predict(X, model)
    atomic_write_text(args.out, format_csv(["label"], ([int(v)] for v in labels)))
    print(f"wrote {labels.size} labels to {args.out}")
    if args.truth:
        truth = read_labels_csv(args.truth)
        print(f"ARI {ari(truth, labels):.6f}")
    return EXIT_OK


def cmd_denoise(args) -> int:
    fit, _ = resolve_fit(args, FitConfig(strategy="bottom-up"))
    if args.method != "mpsa" and args.strategy is None:
        fit = FitConfig(**{**vars(fit), "strategy": "fixed"})
    try:
        config = DenoiseConfig(
            method=args.method, fit=fit, sigma=args.sigma, supervised=args.supervised,
            noise_mode=args.noise_mode, clamp=not args.no_clamp,
        )
    except InputError as exc:
        raise ConfigError(str(exc)) from None
    noisy = read_pgm(args.noisy)
    clean = read_pgm(args.clean) if args.clean else None
    if clean is not None and clean.shape != noisy.shape:
        raise InputError(f"clean image is {clean.shape}, noisy image is {noisy.shape}")
    out, report = denoise_image(noisy, args.patch, args.C, config, clean=clean)
    write_pgm(out, args.out)
    if args.report:
        atomic_write_text(args.report, json.dumps(report.to_dict(), indent=1))
    if args.patch_csv:
        kappas = [psa.kappa_psa(g) for g in report.compositions]
        rows = ([int(c), kappas[int(c) - 1]] for c in report.patch_labels)
        atomic_write_text(args.patch_csv, format_csv(["component", "kappa"], rows))
    msg = f"sigma={math.sqrt(report.sigma2) * 255:.2f}/255 kappa={report.kappa}"
    if report.psnr is not None:
        msg += f" psnr={report.psnr:.2f} (noisy {report.psnr_noisy:.2f})"
    print(msg)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    models = args.models.split(",") if args.models else None
    if args.csv:
        if args.C is None:
            raise ConfigError("--csv needs -C")
        rows = benchmark.run_csv(args.csv, args.C, args.metric, args.folds, args.seed, models)
    else:
        rows = benchmark.run_suite(args.suite, args.repetitions, args.seed, models)
    text = benchmark.rows_to_csv(rows)
    if args.out:
        atomic_write_text(args.out, text)
    for r in rows:
        print(f"{r.model:8s} {r.dataset:14s} {r.metric:28s} {r.mean:10.4f} +- {r.std:.4f}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _fit_flags(sp, strategy_default_note=""):
    sp.add_argument("--config", help="JSON settings file; flags override its values")
    sp.add_argument("--strategy", choices=STRATEGIES, help=f"composition selection strategy{strategy_default_note}")
    sp.add_argument("--alpha", type=_alpha, help="penalty per parameter, or 'bic' for ln(n)/2")
    sp.add_argument("--reg-eps", type=float, help="relative covariance regularization")
    sp.add_argument("--max-iter", type=int)
    sp.add_argument("--tol", type=float, help="relative improvement threshold for convergence")
    sp.add_argument("--seed", type=int, help="random seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mpsa", description="Mixtures of Gaussians with piecewise-constant eigenvalue profiles.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="sample a synthetic dataset")
    g.add_argument("--spec", help="JSON dataset description")
    g.add_argument("--preset", choices=sorted(PRESETS), help="built-in dataset description")
    g.add_argument("-n", type=int, help="override the sample size")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output CSV")
    g.add_argument("--truth", help="ground-truth model document (default: <out>.truth.json)")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="fit a mixture to a CSV dataset")
    f.add_argument("data")
    f.add_argument("-C", type=int, help="number of components")
    f.add_argument("--types", help="'p' or 'spherical', 'full', or compositions like '1,1;2;2'")
    _fit_flags(f, " (default hierarchical)")
    f.add_argument("--out", required=True, help="output model document")
    f.add_argument("--trace", help="per-iteration trace CSV")
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("cluster", help="assign samples to components of a fitted model")
    c.add_argument("data")
    c.add_argument("--model", required=True)
    c.add_argument("--out", required=True, help="output labels CSV")
    c.add_argument("--truth", help="CSV with a 'label' column; prints the ARI")
    c.set_defaults(func=cmd_cluster)

    d = sub.add_parser("denoise", help="denoise a grayscale PGM image")
    d.add_argument("noisy")
    d.add_argument("--patch", "-s", type=int, default=8, help="patch side")
    d.add_argument("-C", type=int, default=3)
    d.add_argument("--method", choices=METHODS, default="mpsa")
    _fit_flags(d, " (default bottom-up)")
    d.add_argument("--clean", help="clean reference PGM, enables PSNR reporting")
    d.add_argument("--sigma", type=float, help="noise standard deviation in [0, 1] pixel units")
    d.add_argument("--supervised", action="store_true", help="use --sigma instead of estimating the noise")
    d.add_argument("--noise-mode", choices=("post-hoc", "enforced"), default="post-hoc")
    d.add_argument("--no-clamp", action="store_true", help="do not clamp shrinkage factors to [0, 1]")
    d.add_argument("--out", required=True, help="output PGM")
    d.add_argument("--report", help="JSON report")
    d.add_argument("--patch-csv", help="per-patch component index and kappa")
    d.set_defaults(func=cmd_denoise)

    b = sub.add_parser("benchmark", help="run a built-in benchmark suite")
    b.add_argument("--suite", choices=sorted(benchmark.SUITES), default="mpsa10")
    b.add_argument("--repetitions", type=int, default=10)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--models", help=f"comma-separated subset of {','.join(benchmark.MODELS)}")
    b.add_argument("--csv", help="labeled CSV dataset; runs stratified k-fold instead of a suite")
    b.add_argument("-C", type=int, help="number of components for --csv")
    b.add_argument("--folds", type=int, default=10)
    b.add_argument("--metric", choices=("clustering", "density"), default="clustering")
    b.add_argument("--out", help="output CSV")
    b.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"mpsa: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"mpsa: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, OSError) as exc:
        print(f"mpsa: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
