"""Command-line front end: ``gbppm fit | sample | summarize | reproduce``."""

from __future__ import annotations

import csv
import functools
import sys
from pathlib import Path

import click
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import studies
from .core import (
    BERNOULLI_KL_MODEL,
    BINARY,
    CONTINUOUS,
    SQ_EUCLIDEAN_MODEL,
    CohesionModel,
    ConfigError,
    Dataset,
    DomainError,
    GBPPMError,
    GibbsConfig,
    Partition,
    manhattan,
    minkowski,
    pairwise_sq_euclidean,
)
from .bregman import adjusted_centroids, plain_centroids
from .dissim import DissimMatrix, pairwise_matrix
from .fit import fit_map
from .gibbs import ChainSamples, run_chain
from .uq import REPORT_SCHEMA, coclustering, medoids, summary_report, write_report

EXIT_USAGE = 2
EXIT_RUNTIME = 3
MODELS = ("sq-euclidean", "bernoulli-kl", "manhattan", "minkowski", "pairwise-sq-euclidean")


def make_model(name: str, p: float = 2.0) -> CohesionModel:
    if name == "sq-euclidean":
        return SQ_EUCLIDEAN_MODEL
    if name == "bernoulli-kl":
        return BERNOULLI_KL_MODEL
    if name == "manhattan":
        return manhattan()
    if name == "minkowski":
        return minkowski(p)
    if name == "pairwise-sq-euclidean":
        return pairwise_sq_euclidean()
    raise ConfigError(f"unknown model {name!r}")


def _load_data(path, model_name: str) -> Dataset:
    return Dataset.from_csv(path, BINARY if model_name == "bernoulli-kl" else CONTINUOUS)


def _dissim(data: Dataset, model: CohesionModel, cache: str | None) -> DissimMatrix | None:
    """Pairwise matrix for dissimilarity models, reusing ``cache`` when it exists."""
    if model.is_bregman:
        return None
    if cache and Path(cache).exists():
        dmat = DissimMatrix.load(cache, model.p, model.gamma)
        if dmat.n != data.n:
            raise ConfigError(f"dissimilarity cache {cache} has n={dmat.n}, data has n={data.n}")
        return dmat
    dmat = pairwise_matrix(data, model)
    if cache:
        dmat.save(cache)
    return dmat


def _read_labels(path) -> Partition:
    return Partition.from_json(Path(path).read_text())


def _guard(fn):
    """Map library errors to exit codes with a one-line diagnostic on stderr."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (DomainError, ConfigError) as exc:
            kind = "domain error" if isinstance(exc, DomainError) else "configuration error"
            click.echo(f"gbppm: {kind}: {exc}", err=True)
            sys.exit(EXIT_USAGE)
        except (GBPPMError, OSError, ValueError, RuntimeError) as exc:
            click.echo(f"gbppm: runtime error: {exc}", err=True)
            sys.exit(EXIT_RUNTIME)

    return wrapper


# config keys follow the flag names; a few flags store under another name
_CONFIG_ALIASES = {"model": "model_name", "map": "map_labels"}


def _config_defaults(path) -> dict:
    """Top-level keys apply to every command; a ``[command]`` table overrides them."""
    try:
        raw = tomllib.loads(Path(path).read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise click.BadParameter(str(exc), param_hint="--config") from None
    def key(k):
        k = k.replace("-", "_")
        return _CONFIG_ALIASES.get(k, k)

    common = {key(k): v for k, v in raw.items() if not isinstance(v, dict)}
    out = {}
    for cmd in ("fit", "sample", "summarize", "reproduce"):
        section = {key(k): v for k, v in raw.get(cmd, {}).items()}
        out[cmd] = {**common, **section}
    return out


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", type=click.Path(exists=True, dir_okay=False),
              help="TOML file of option defaults; command-line flags take precedence.")
@click.pass_context
def cli(ctx, config):
    """Loss-based clustering with generalized Bayes product partition models."""
    if config:
        ctx.default_map = _config_defaults(config)


def _model_options(f):
    f = click.option("--model", "model_name", type=click.Choice(MODELS), default="sq-euclidean",
                     show_default=True, help="Cohesion model.")(f)
    f = click.option("--p", type=float, default=2.0, show_default=True, help="Exponent for --model minkowski.")(f)
    f = click.option("--dissim-cache", type=click.Path(dir_okay=False),
                     help="Binary pairwise-matrix file, read if present and written otherwise.")(f)
    return f


@cli.command()
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@_model_options
@click.option("--k", type=click.IntRange(min=1), required=True, help="Number of clusters.")
@click.option("--restarts", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--max-iter", type=click.IntRange(min=1), default=300, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default=".", show_default=True)
@_guard
def fit(data, model_name, p, dissim_cache, k, restarts, seed, max_iter, out_dir):
    """Loss-minimizing partition; writes labels.json and report.json."""
    K = k
    model = make_model(model_name, p)
    ds = _load_data(data, model_name)
    model.check_compatible(ds)
    dmat = _dissim(ds, model, dissim_cache)
    res = fit_map(ds, model, K, restarts=restarts, seed=seed, max_iter=max_iter, dmat=dmat)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "labels.json").write_text(res.partition.to_json())
    report = {"schema": REPORT_SCHEMA, "model": model_name, "K": K, "n": ds.n, "seed": seed,
              "loss": res.loss, "best_restart": res.restart, "loss_trace": res.trace,
              "block_sizes": res.partition.block_sizes.tolist(),
              "medoids": (medoids(res.partition, ds, model, dmat) + 1).tolist()}
    if model.is_bregman:
        cent = adjusted_centroids(ds, res.partition) if model.kind == BERNOULLI_KL_MODEL.kind \
            else plain_centroids(ds, res.partition)
        report["centroids"] = cent.means.tolist()
    write_report(report, out / "report.json")
    click.echo(f"loss {res.loss:.6g}, block sizes {res.partition.block_sizes.tolist()}")


@cli.command()
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@_model_options
@click.option("--k", type=click.IntRange(min=1), help="Number of clusters (default: from --init-from).")
@click.option("--init-from", type=click.Path(exists=True, dir_okay=False),
              help="labels.json to start from; otherwise a fresh MAP fit.")
@click.option("--iterations", type=click.IntRange(min=1), default=6000, show_default=True)
@click.option("--burnin", type=click.IntRange(min=0), default=1000, show_default=True)
@click.option("--thin", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--lambda-mode", type=click.Choice(["fixed", "hierarchical"]),
              help="Default: hierarchical, or fixed for bernoulli-kl.")
@click.option("--lam", type=float, default=1.0, show_default=True, help="Lambda in fixed mode.")
@click.option("--a-lambda", type=float, default=1.0, show_default=True, help="Gamma prior shape.")
@click.option("--b-lambda", type=float, default=0.0, show_default=True, help="Gamma prior rate.")
@click.option("--xi", type=float, help="Lambda power (default nd/2 or nd by model).")
@click.option("--lambda-tilde", type=float, default=1.0, show_default=True)
@click.option("--restarts", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default="samples.ndjson", show_default=True)
@click.option("--trace-out", type=click.Path(dir_okay=False), default="trace.csv", show_default=True)
@_guard
def sample(data, model_name, p, dissim_cache, k, init_from, iterations, burnin, thin, lambda_mode, lam,
           a_lambda, b_lambda, xi, lambda_tilde, restarts, seed, out, trace_out):
    """Gibbs sampling of partitions; writes NDJSON draws and a loss trace CSV."""
    K = k
    model = make_model(model_name, p)
    ds = _load_data(data, model_name)
    model.check_compatible(ds)
    dmat = _dissim(ds, model, dissim_cache)
    if init_from:
        init = _read_labels(init_from)
        K = K or init.K
        init = Partition(init.labels, K)
    elif K is None:
        raise click.UsageError("need --k or --init-from")
    else:
        init = fit_map(ds, model, K, restarts=restarts, seed=seed, dmat=dmat).partition
    if lambda_mode is None:
        lambda_mode = "fixed" if model_name == "bernoulli-kl" else "hierarchical"
    cfg = GibbsConfig(lambda_mode=lambda_mode, lam=lam, a_lambda=a_lambda, b_lambda=b_lambda, xi=xi,
                      lambda_tilde=lambda_tilde, n_iterations=iterations, n_burnin=burnin, thin=thin,
                      rng_seed=seed)
    chain = run_chain(ds, model, K, cfg, init, dmat=dmat)
    chain.meta["cli_model"] = model_name
    chain.to_ndjson(out)
    with Path(trace_out).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "loss"])
        w.writerows((t + 1, f"{v:.10g}") for t, v in enumerate(chain.trace))
    click.echo(f"{len(chain)} draws kept, mean loss {chain.losses.mean() if len(chain) else float('nan'):.6g}")


@cli.command()
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@click.argument("samples", type=click.Path(exists=True, dir_okay=False))
@_model_options
@click.option("--map", "map_labels", type=click.Path(exists=True, dir_okay=False),
              help="labels.json of the point estimate (default: fresh MAP fit).")
@click.option("--alpha", type=click.FloatRange(0, 1, min_open=True, max_open=True), default=0.05,
              show_default=True)
@click.option("--new-points", type=click.Path(exists=True, dir_okay=False),
              help="CSV of points for predictive allocation.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default="summary.json", show_default=True)
@click.option("--coclustering-out", type=click.Path(dir_okay=False), default="coclustering.csv",
              show_default=True, help="Long-format (i, j, s) table.")
@_guard
def summarize(data, samples, model_name, p, dissim_cache, map_labels, alpha, new_points, seed, out,
              coclustering_out):
    """Co-clustering, point estimates, credible balls and predictive probabilities."""
    chain = ChainSamples.from_ndjson(samples)
    if len(chain) == 0:
        raise ConfigError(f"{samples} holds no draws")
    model_name = chain.meta.get("cli_model", model_name)
    model = make_model(model_name, chain.meta.get("p", p))
    ds = _load_data(data, model_name)
    if chain.labels.shape[1] != ds.n:
        raise ConfigError("samples and data disagree on n")
    dmat = _dissim(ds, model, dissim_cache)
    K = int(chain.meta.get("K", chain.labels.max() + 1))
    est = _read_labels(map_labels) if map_labels else fit_map(ds, model, K, seed=seed, dmat=dmat).partition
    pts = None
    if new_points:
        pts = Dataset.from_csv(new_points).values
        if pts.shape[1] != ds.d:
            raise DomainError(f"new points have {pts.shape[1]} columns, data has {ds.d}")
    report = summary_report(chain, est, ds, model, alpha=alpha, dmat=dmat, new_points=pts)
    report["model"] = model_name
    write_report(report, out)
    coclustering(chain).to_long_csv(coclustering_out)
    click.echo(f"summary written to {out}")


@cli.command()
@click.argument("study", type=click.Choice(["sim1", "sim2", "carcinoma"]))
@click.option("--data", type=click.Path(exists=True, dir_okay=False), help="118 x 7 binary CSV for carcinoma.")
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--replicates", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--iterations", type=click.IntRange(min=1), help="Gibbs sweeps (default: study setting).")
@click.option("--burnin", type=click.IntRange(min=0), default=1000, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default=".", show_default=True)
@_guard
def reproduce(study, data, seed, replicates, iterations, burnin, out_dir):
    """Run a full study and write its tidy results table (results.csv)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if study == "carcinoma":
        if not data:
            raise ConfigError("external dataset required: pass --data with the 118 x 7 binary ratings CSV")
        ds = Dataset.from_csv(data, BINARY)
        res = studies.carcinoma(ds, seed=seed, n_iterations=iterations or 16000, n_burnin=burnin)
        (out / "labels_vi.json").write_text(res.extras["vi"].to_json())
        np.savetxt(out / "centroids.csv", res.extras["centroids"], delimiter=",", fmt="%.4f")
        np.savetxt(out / "predictive.csv", res.extras["predictive"], delimiter=",", fmt="%.4f")
        res.extras["S"].to_long_csv(out / "coclustering.csv")
    elif study == "sim1":
        res = studies.sim1(replicates=replicates, seed=seed, n_iterations=iterations or 6000, n_burnin=burnin)
    else:
        res = studies.sim2(replicates=replicates, seed=seed, n_iterations=iterations or 6000, n_burnin=burnin)
    res.to_csv(out / "results.csv")
    click.echo(f"{len(res.rows)} result rows written to {out / 'results.csv'}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="gbppm", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        return EXIT_RUNTIME
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
