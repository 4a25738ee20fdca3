"""Command-line front door: validate/generate bundles, compute profiles, export, serve.

Exit codes: 0 success, 1 runtime failure, 2 validation failure, 3 bad usage.
Errors go to stderr as a single machine-parsable ``error: <code>: <message>``
line; data goes to stdout or the requested output files.
"""

from __future__ import annotations

import os
import sys
from dataclasses import replace
from pathlib import Path

import click

from .bundle import load_bundle, validate_bundle
from .difficulty import (
    DifficultyConfig,
    IndexParams,
    build_spaces,
    compute_profiles,
    export_profiles_csv,
    pattern_counts,
    project_2d,
)
from .errors import DiffLensError
from .flow import build_flow, flow_to_json
from .synth import SynthSpec, synth_generate

CACHE_ENV = "DIFFLENS_CACHE_DIR"


class ValidationFailure(Exception):
    """User input failed validation; mapped to exit code 2."""

    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(message)


def _compute_options(fn):
    options = [
        click.option("--k", type=int, default=10, show_default=True, help="Neighborhood size."),
        click.option("--exact", is_flag=True, help="Use exhaustive search instead of the tree forest."),
        click.option("--trees", type=int, default=16, show_default=True, help="Random-projection trees per probe."),
        click.option("--leaf-size", type=int, default=32, show_default=True, help="Tree leaf capacity."),
        click.option("--seed", type=int, default=0, show_default=True, help="Index construction seed."),
        click.option(
            "--threshold-mode",
            type=click.Choice(["fixed", "quantile"]),
            default="fixed",
            show_default=True,
            help="How low/high difficulty is decided for taxonomy patterns.",
        ),
        click.option("--quantile", type=float, default=0.7, show_default=True, help="Quantile threshold (quantile mode)."),
        click.option("--theta-data", type=float, default=0.5, show_default=True, help="Fixed data threshold."),
        click.option("--theta-model", type=float, default=0.5, show_default=True, help="Fixed model threshold."),
        click.option("--theta-human", type=float, default=0.5, show_default=True, help="Fixed human threshold."),
        click.option(
            "--layer-kdn-reference",
            type=click.Choice(["final-prediction", "ground-truth"]),
            default="final-prediction",
            show_default=True,
            help="Reference label for per-layer disagreement scores.",
        ),
        click.option("--zscore", is_flag=True, help="Standardize each probe space before k-NN."),
        click.option("--profile-train", is_flag=True, help="Also profile the training split (leave-one-out)."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _build_config(opts: dict) -> tuple[DifficultyConfig, IndexParams]:
    config = DifficultyConfig(
        k=opts["k"],
        layer_kdn_reference=opts["layer_kdn_reference"],
        threshold_mode=opts["threshold_mode"],
        theta_data=opts["theta_data"],
        theta_model=opts["theta_model"],
        theta_human=opts["theta_human"],
        quantile=opts["quantile"],
        profile_splits=("test", "train") if opts["profile_train"] else ("test",),
        zscore=opts["zscore"],
    )
    params = IndexParams(
        mode="exact" if opts["exact"] else "approximate",
        trees=opts["trees"],
        leaf_size=opts["leaf_size"],
        seed=opts["seed"],
    )
    return config, params


def _load(bundle_dir: str):
    try:
        return load_bundle(bundle_dir)
    except DiffLensError as exc:
        raise ValidationFailure("invalid-bundle", str(exc)) from exc


def _run(bundle, config: DifficultyConfig, params: IndexParams):
    spaces = build_spaces(bundle, config, params, cache_dir=os.environ.get(CACHE_ENV))
    result = compute_profiles(bundle, spaces, config)
    return replace(result, params=params)


@click.group()
def cli() -> None:
    """Instance-difficulty analytics for DNN classifier test sets."""


@cli.command()
@click.argument("bundle", type=click.Path(exists=True, file_okay=False))
def validate(bundle: str) -> None:
    """Check a bundle directory; list every violation found."""
    report = validate_bundle(bundle)
    if report.ok:
        click.echo("ok")
        return
    for violation in report.violations:
        click.echo(f"violation: {violation.code}: {violation.message}")
    raise ValidationFailure(
        "invalid-bundle",
        f"{len(report.violations)} violation(s); first: {report.violations[0].message}",
    )


@cli.group()
def synth() -> None:
    """Synthetic bundles with planted difficulty ground truth."""


@synth.command()
@click.argument("spec", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Output bundle directory.")
def gen(spec: str, out_dir: str) -> None:
    """Generate a bundle from a JSON spec (deterministic per seed)."""
    try:
        synth_spec = SynthSpec.from_json(spec)
        manifest, expectations = synth_generate(synth_spec, out_dir)
    except (DiffLensError, ValueError) as exc:
        raise ValidationFailure("invalid-spec", str(exc)) from exc
    click.echo(f"bundle={out_dir}")
    click.echo(f"n_train={manifest.n_train}")
    click.echo(f"n_test={manifest.n_test}")
    click.echo(f"expected_accuracy={expectations['accuracy']!r}")


@cli.command()
@click.argument("bundle", type=click.Path(exists=True, file_okay=False))
@_compute_options
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write profiles CSV here.")
def compute(bundle: str, out: str | None, **opts) -> None:
    """Run the difficulty pipeline and print a key=value summary."""
    config, params = _build_config(opts)
    result = _run(_load(bundle), config, params)

    import numpy as np

    present = ~np.isnan(result.human)
    click.echo(f"n_profiled={result.size}")
    click.echo(f"accuracy={float(result.correct.mean())!r}")
    click.echo(f"mean_data_kdn={float(result.data_kdn.mean())!r}")
    click.echo(f"mean_model_difficulty={float(result.model_difficulty.mean())!r}")
    human_mean = float(result.human[present].mean()) if present.any() else None
    click.echo(f"mean_human_difficulty={human_mean!r}")
    for code, count in pattern_counts(result).items():
        click.echo(f"pattern_{code}={count}")
    if out is not None:
        Path(out).write_text(export_profiles_csv(result), encoding="utf-8")
        click.echo(f"profiles={out}")


@cli.command()
@click.argument("bundle", type=click.Path(exists=True, file_okay=False))
@_compute_options
@click.option("--port", type=int, default=8642, show_default=True, help="Listen port.")
@click.option("--host", default="127.0.0.1", show_default=True, help="Bind address.")
@click.option("--precompute", is_flag=True, help="Run the pipeline before accepting requests.")
@click.option("--frontend", type=click.Path(file_okay=False), default=None, help="Static UI directory to serve.")
def serve(bundle: str, port: int, host: str, precompute: bool, frontend: str | None, **opts) -> None:
    """Serve the exploration API (and optionally the UI) over HTTP."""
    import uvicorn

    from .server import create_app

    config, params = _build_config(opts)
    app = create_app(_load(bundle), config, params, precompute=precompute, frontend_dir=frontend)
    click.echo(f"serving on http://{host}:{port}", err=True)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@cli.command()
@click.argument("bundle", type=click.Path(exists=True, file_okay=False))
@click.option("--what", type=click.Choice(["profiles", "flow", "projection"]), required=True, help="Artifact to export.")
@click.option("--subset", "subset_file", type=click.Path(exists=True, dir_okay=False), default=None, help="Id-list CSV restricting the export.")
@click.option("--source", default="pixel", show_default=True, help="Projection source (pixel, layer:<name>, pattern).")
@click.option("--out", type=click.Path(dir_okay=False), default="-", show_default=True, help="Output path ('-' for stdout).")
@_compute_options
def export(bundle: str, what: str, subset_file: str | None, source: str, out: str, **opts) -> None:
    """Export profiles, a difficulty flow, or a 2-D projection."""
    import json as json_

    config, params = _build_config(opts)
    loaded = _load(bundle)
    result = _run(loaded, config, params)

    subset_ids = result.ids
    if subset_file is not None:
        lines = [ln.strip() for ln in Path(subset_file).read_text("utf-8").splitlines()]
        subset_ids = tuple(ln for ln in lines if ln and ln != "instance_id")
        unknown = [iid for iid in subset_ids if iid not in result.index_of]
        if unknown:
            raise ValidationFailure("unknown-instance", f"subset file names unknown ids: {unknown[:3]}")

    if what == "profiles":
        keep = set(subset_ids)
        csv_text = export_profiles_csv(result)
        if subset_file is not None:
            lines = csv_text.splitlines(keepends=True)
            csv_text = lines[0] + "".join(ln for ln in lines[1:] if ln.split(",", 1)[0] in keep)
        payload = csv_text
    elif what == "flow":
        payload = json_.dumps(flow_to_json(build_flow(result, subset_ids)), indent=2) + "\n"
    else:
        projection = project_2d(loaded, result, source)
        rows = [i for i, iid in enumerate(projection.ids) if iid in set(subset_ids)]
        payload = "instance_id,x,y\n" + "".join(
            f"{projection.ids[i]},{float(projection.coords[i][0])!r},{float(projection.coords[i][1])!r}\n"
            for i in rows
        )

    if out == "-":
        click.echo(payload, nl=False)
    else:
        Path(out).write_text(payload, encoding="utf-8")
        click.echo(f"wrote {out}", err=True)


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:  # --help and friends
        return exc.exit_code
    except click.UsageError as exc:
        click.echo(f"error: usage: {exc.format_message()}", err=True)
        return 3
    except ValidationFailure as exc:
        click.echo(f"error: {exc.code}: {exc}", err=True)
        return 2
    except DiffLensError as exc:
        click.echo(f"error: {type(exc).__name__.lower()}: {exc}", err=True)
        return 2
    except click.ClickException as exc:
        click.echo(f"error: cli: {exc.format_message()}", err=True)
        return 1
    except OSError as exc:
        click.echo(f"error: io: {exc}", err=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
