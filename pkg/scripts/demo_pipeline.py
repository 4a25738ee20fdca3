#!/usr/bin/env python3
"""Generate the default synthetic bundle, profile it, and export every artifact.

Usage:
    python scripts/demo_pipeline.py --out /tmp/difflens-demo [--seed 0] [--exact]
"""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

from difflens.bundle import load_bundle
from difflens.difficulty import (
    DifficultyConfig,
    IndexParams,
    export_profiles_csv,
    pattern_counts,
    project_2d,
    run_pipeline,
)
from difflens.flow import build_flow, flow_to_json
from difflens.synth import SynthSpec, load_expectations, synth_generate


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, required=True, help="working directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--k", type=int, default=10)
    parser.add_argument("--exact", action="store_true", help="exhaustive search instead of the forest")
    args = parser.parse_args()

    bundle_dir = args.out / "bundle"
    spec = SynthSpec(seed=args.seed)
    t0 = time.monotonic()
    synth_generate(spec, bundle_dir)
    print(f"generated {spec.n_train}/{spec.n_test} bundle in {time.monotonic() - t0:.1f}s -> {bundle_dir}")

    bundle = load_bundle(bundle_dir)
    config = DifficultyConfig(k=args.k)
    params = IndexParams(mode="exact" if args.exact else "approximate")
    t0 = time.monotonic()
    result = run_pipeline(bundle, config, params)
    print(f"profiled {result.size} instances in {time.monotonic() - t0:.1f}s ({params.mode}, k={config.k})")

    expectations = load_expectations(bundle_dir)
    print(f"accuracy {result.correct.mean():.4f} (planted {expectations['accuracy']:.4f})")
    print("pattern histogram:")
    for code, count in pattern_counts(result).items():
        if count:
            print(f"  {code:>12}: {count}")

    (args.out / "profiles.csv").write_text(export_profiles_csv(result))
    graph = build_flow(result, result.ids)
    (args.out / "flow.json").write_text(json.dumps(flow_to_json(graph), indent=2))
    projection = project_2d(bundle, result, "pattern")
    (args.out / "projection.csv").write_text(
        "instance_id,x,y\n"
        + "".join(
            f"{iid},{float(x)!r},{float(y)!r}\n"
            for iid, (x, y) in zip(projection.ids, projection.coords)
        )
    )
    print(f"exports written to {args.out}/(profiles.csv|flow.json|projection.csv)")
    print(f"explore interactively: difflens serve {bundle_dir} --precompute")


if __name__ == "__main__":
    main()
