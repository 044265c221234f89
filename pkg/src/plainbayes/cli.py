"""Command-line interface: one subcommand per pipeline stage plus `run`.

Subcommands:

* ``simulate``       — generate a synthetic linear dataset CSV.
* ``elicit-prior``   — belief text -> validated prior JSON.
* ``elicit-model``   — problem description -> validated model JSON.
* ``fit``            — model JSON + dataset CSV -> trace CSV + stats JSON.
* ``summarize``      — trace CSV -> summary table (text/json/csv).
* ``plot``           — trace CSV (optionally two) -> histogram CSV + SVG.
* ``run``            — the full pipeline into one run directory.

Every command writes a manifest describing its inputs (by content hash),
configuration, and outputs, so a run can be reproduced exactly in replay
mode.  Exit code is 0 iff no stage failed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

from . import __version__, data_io, diagnostics, elicitation, plotting, sampler, spec_schema
from .errors import ElicitationFailed, PlainbayesError
from .posterior import build_posterior

__all__ = ["main", "build_parser"]


# ---------------------------------------------------------------------------
# Manifest


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class _Manifest:
    def __init__(self, command: str, config: dict):
        self.payload = {
            "tool": "plainbayes",
            "version": __version__,
            "command": command,
            "created_at": _utc_now(),
            "config": config,
            "input_hashes": {},
            "outputs": [],
        }

    def add_input(self, path) -> None:
        self.payload["input_hashes"][str(path)] = _sha256_file(path)

    def add_output(self, path) -> None:
        self.payload["outputs"].append(str(path))

    def write(self, path) -> None:
        self.payload["finished_at"] = _utc_now()
        self.add_output(path)
        Path(path).write_text(json.dumps(self.payload, indent=2) + "\n", encoding="utf-8")


def _utc_now() -> str:
    from datetime import datetime, timezone

    return datetime.now(timezone.utc).isoformat()


# ---------------------------------------------------------------------------
# Shared flag groups


def _add_llm_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("llm")
    g.add_argument("--llm-mode", choices=("live", "replay", "record"), default="replay")
    g.add_argument("--fixtures-dir", default=None, help="fixture directory (default: packaged fixtures)")
    g.add_argument("--endpoint-url", default="")
    g.add_argument("--model-name", default="")
    g.add_argument("--api-key-env", default=elicitation.DEFAULT_API_KEY_ENV)
    g.add_argument("--temperature", type=float, default=0.0)
    g.add_argument("--timeout", type=float, default=60.0)
    g.add_argument("--max-retries", type=int, default=2)


def _llm_config(args) -> elicitation.LlmConfig:
    fixtures = args.fixtures_dir
    if fixtures is None and args.llm_mode in ("replay", "record"):
        fixtures = elicitation.packaged_fixtures_dir()
    return elicitation.LlmConfig(
        mode=args.llm_mode,
        endpoint_url=args.endpoint_url,
        model_name=args.model_name,
        api_key_env=args.api_key_env,
        temperature=args.temperature,
        timeout=args.timeout,
        max_retries=args.max_retries,
        fixtures_dir=fixtures,
    )


def _add_sampler_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("sampler")
    g.add_argument("--algorithm", choices=("nuts", "rwm"), default="nuts")
    g.add_argument("--chains", type=int, default=4)
    g.add_argument("--warmup", type=int, default=1000)
    g.add_argument("--draws", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--target-accept", type=float, default=0.8)
    g.add_argument("--max-tree-depth", type=int, default=10)
    g.add_argument("--step-size-init", type=float, default=1.0)
    g.add_argument("--response-column", default="y")


def _sampler_config(args) -> sampler.SamplerConfig:
    return sampler.SamplerConfig(
        algorithm=args.algorithm,
        chains=args.chains,
        warmup_draws=args.warmup,
        kept_draws=args.draws,
        seed=args.seed,
        target_accept=args.target_accept,
        max_tree_depth=args.max_tree_depth,
        step_size_init=args.step_size_init,
    )


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("simulate")
    g.add_argument("--alpha", type=float, default=2.5)
    g.add_argument("--beta", type=float, default=1.8)
    g.add_argument("--sigma", type=float, default=15.0)
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--x-low", type=float, default=0.0)
    g.add_argument("--x-high", type=float, default=100.0)


# ---------------------------------------------------------------------------
# Commands


def _cmd_simulate(args) -> int:
    cfg = data_io.SimConfig(
        alpha=args.alpha, beta=args.beta, sigma=args.sigma,
        n=args.n, x_low=args.x_low, x_high=args.x_high, seed=args.seed,
    )
    dataset = data_io.simulate_linear(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data_io.save_csv(dataset, out)
    manifest = _Manifest("simulate", asdict(cfg))
    manifest.add_output(out)
    manifest.write(Path(str(out) + ".manifest.json"))
    print(f"wrote {dataset.n_rows} rows to {out}")
    return 0


def _read_text_arg(inline: str | None, file_arg: str | None, what: str) -> str:
    if inline is not None:
        return inline
    if file_arg is None:
        raise PlainbayesError(f"provide --{what} or --{what}-file")
    return Path(file_arg).read_text(encoding="utf-8")


def _cmd_elicit_prior(args) -> int:
    cfg = _llm_config(args)
    belief = _read_text_arg(args.belief, args.belief_file, "belief")
    spec = elicitation.elicit_prior(args.param, belief, cfg)
    text = json.dumps(spec_schema.prior_to_obj(spec), indent=2)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        manifest = _Manifest("elicit-prior", {"param": args.param, "llm": _public_llm_config(cfg)})
        manifest.add_output(args.out)
        manifest.write(Path(args.out).with_suffix(".manifest.json"))
    return 0


def _cmd_elicit_model(args) -> int:
    cfg = _llm_config(args)
    description = Path(args.description_file).read_text(encoding="utf-8")
    spec = elicitation.elicit_model(description, cfg)
    text = spec_schema.model_to_json(spec)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        manifest = _Manifest("elicit-model", {"llm": _public_llm_config(cfg)})
        manifest.add_input(args.description_file)
        manifest.add_output(args.out)
        manifest.write(Path(args.out).with_suffix(".manifest.json"))
    return 0


def _public_llm_config(cfg: elicitation.LlmConfig) -> dict:
    obj = asdict(cfg)
    obj["fixtures_dir"] = str(obj["fixtures_dir"]) if obj["fixtures_dir"] else None
    return obj  # the config holds the key's env-var NAME only, never the key


def _fit(model_path, data_path, scfg: sampler.SamplerConfig, response_column: str):
    spec = spec_schema.parse_model_json(Path(model_path).read_text(encoding="utf-8"))
    dataset = data_io.load_csv(data_path)
    validated = spec_schema.validate_model(spec, dataset.column_names())
    pf = build_posterior(validated, dataset, response_column=response_column)
    trace = sampler.sample(pf, scfg)
    return trace


def _cmd_fit(args) -> int:
    scfg = _sampler_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace = _fit(args.model, args.data, scfg, args.response_column)
    trace_path = out_dir / "trace.csv"
    stats_path = out_dir / "stats.json"
    sampler.save_trace(trace, trace_path, stats_path)
    manifest = _Manifest("fit", {"sampler": asdict(scfg), "response_column": args.response_column})
    manifest.add_input(args.model)
    manifest.add_input(args.data)
    manifest.add_output(trace_path)
    manifest.add_output(stats_path)
    manifest.write(out_dir / "manifest.json")
    n_div = int(trace.stats["divergent"].sum())
    print(f"wrote {trace.n_chains}x{trace.n_draws} draws to {trace_path} ({n_div} divergent)")
    return 0


def _render_summary(table: diagnostics.SummaryTable, fmt: str) -> str:
    if fmt == "text":
        return diagnostics.render_text(table)
    if fmt == "csv":
        return diagnostics.render_csv(table)
    return json.dumps(diagnostics.to_json_obj(table), indent=2)


def _cmd_summarize(args) -> int:
    trace = sampler.load_trace(args.trace, args.stats)
    table = diagnostics.summarize(trace, hdi_prob=args.hdi)
    text = _render_summary(table, args.format)
    print(text)
    if args.out:
        Path(args.out).write_text(text + ("\n" if not text.endswith("\n") else ""), encoding="utf-8")
    return 0


def _cmd_plot(args) -> int:
    trace = sampler.load_trace(args.trace)
    compare = sampler.load_trace(args.compare) if args.compare else None
    written = plotting.plot_trace(
        trace,
        args.out_dir,
        compare=compare,
        bins=args.bins,
        label=args.label,
        compare_label=args.compare_label,
    )
    print("\n".join(str(p) for p in written))
    return 0


def _load_beliefs(path) -> dict[str, str]:
    try:
        beliefs = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PlainbayesError(f"beliefs file {path}: invalid JSON: {exc}") from None
    if not isinstance(beliefs, dict) or not beliefs or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in beliefs.items()
    ):
        raise PlainbayesError(
            f"beliefs file {path}: expected a non-empty JSON object mapping parameter names to belief text"
        )
    return beliefs


def _cmd_run(args) -> int:
    started = time.time()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    llm_cfg = _llm_config(args)
    scfg = _sampler_config(args)
    manifest = _Manifest(
        "run",
        {"sampler": asdict(scfg), "llm": _public_llm_config(llm_cfg), "hdi": args.hdi, "bins": args.bins},
    )

    # --- data stage
    if args.data:
        data_path = Path(args.data)
        dataset = data_io.load_csv(data_path)
        manifest.add_input(data_path)
    else:
        sim = data_io.SimConfig(
            alpha=args.alpha, beta=args.beta, sigma=args.sigma,
            n=args.n, x_low=args.x_low, x_high=args.x_high, seed=args.seed,
        )
        dataset = data_io.simulate_linear(sim)
        data_path = out_dir / "data.csv"
        data_io.save_csv(dataset, data_path)
        manifest.payload["config"]["simulate"] = asdict(sim)
        manifest.add_output(data_path)

    # --- elicitation stage
    if args.description_file:
        description = Path(args.description_file).read_text(encoding="utf-8")
        manifest.add_input(args.description_file)
        spec = elicitation.elicit_model(description, llm_cfg)
    elif args.beliefs_file:
        beliefs = _load_beliefs(args.beliefs_file)
        manifest.add_input(args.beliefs_file)
        priors = {
            name: elicitation.elicit_prior(name, belief, llm_cfg)
            for name, belief in beliefs.items()
        }
        likelihood = spec_schema.LikelihoodSpec(
            formula_source=args.formula, noise_param=args.noise_param
        )
        spec = spec_schema.ModelSpec(priors=priors, likelihood=likelihood)
    else:
        raise PlainbayesError("provide --description-file or --beliefs-file")
    model_path = out_dir / "model.json"
    model_path.write_text(spec_schema.model_to_json(spec) + "\n", encoding="utf-8")
    manifest.add_output(model_path)

    # --- fit + report for the elicited model (and optionally a baseline)
    jobs = [("", spec)]
    if args.compare_model:
        compare_spec = spec_schema.parse_model_json(Path(args.compare_model).read_text(encoding="utf-8"))
        manifest.add_input(args.compare_model)
        compare_path = out_dir / "compare_model.json"
        compare_path.write_text(spec_schema.model_to_json(compare_spec) + "\n", encoding="utf-8")
        manifest.add_output(compare_path)
        jobs.append(("compare_", compare_spec))

    traces = {}
    for prefix, job_spec in jobs:
        validated = spec_schema.validate_model(job_spec, dataset.column_names())
        pf = build_posterior(validated, dataset, response_column=args.response_column)
        trace = sampler.sample(pf, scfg)
        traces[prefix] = trace
        sampler.save_trace(trace, out_dir / f"{prefix}trace.csv", out_dir / f"{prefix}stats.json")
        manifest.add_output(out_dir / f"{prefix}trace.csv")
        manifest.add_output(out_dir / f"{prefix}stats.json")
        table = diagnostics.summarize(trace, hdi_prob=args.hdi)
        for fmt, suffix in (("text", "txt"), ("json", "json"), ("csv", "csv")):
            path = out_dir / f"{prefix}summary.{suffix}"
            text = _render_summary(table, fmt)
            path.write_text(text + ("\n" if not text.endswith("\n") else ""), encoding="utf-8")
            manifest.add_output(path)
        label = "baseline" if prefix else "elicited"
        print(f"--- {label} model ---")
        print(diagnostics.render_text(table))

    plots = plotting.plot_trace(
        traces[""],
        out_dir / "plots",
        compare=traces.get("compare_"),
        bins=args.bins,
        label="elicited",
        compare_label="baseline",
    )
    for p in plots:
        manifest.add_output(p)

    manifest.payload["elapsed_seconds"] = round(time.time() - started, 3)
    manifest.write(out_dir / "manifest.json")
    print(f"run complete in {manifest.payload['elapsed_seconds']}s; outputs in {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plainbayes",
        description="Turn plain-language model descriptions into Bayesian inferences.",
    )
    parser.add_argument("--version", action="version", version=f"plainbayes {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic linear dataset")
    _add_sim_flags(p)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("elicit-prior", help="turn one belief into a prior JSON")
    p.add_argument("--param", required=True)
    p.add_argument("--belief", default=None)
    p.add_argument("--belief-file", default=None)
    p.add_argument("--out", default=None)
    _add_llm_flags(p)
    p.set_defaults(func=_cmd_elicit_prior)

    p = sub.add_parser("elicit-model", help="turn a problem description into a model JSON")
    p.add_argument("--description-file", required=True)
    p.add_argument("--out", default=None)
    _add_llm_flags(p)
    p.set_defaults(func=_cmd_elicit_model)

    p = sub.add_parser("fit", help="run MCMC on a model JSON + dataset CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    _add_sampler_flags(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("summarize", help="summary statistics for a trace CSV")
    p.add_argument("--trace", required=True)
    p.add_argument("--stats", default=None)
    p.add_argument("--format", choices=("text", "json", "csv"), default="text")
    p.add_argument("--hdi", type=float, default=0.94)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("plot", help="histograms (CSV + SVG) for a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--compare", default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--label", default="trace")
    p.add_argument("--compare-label", default="compare")
    p.set_defaults(func=_cmd_plot)

    p = sub.add_parser("run", help="full pipeline: elicit, fit, summarize, plot")
    p.add_argument("--description-file", default=None)
    p.add_argument("--beliefs-file", default=None)
    p.add_argument("--formula", default="alpha + beta * X",
                   help="likelihood mean used with --beliefs-file")
    p.add_argument("--noise-param", default="sigma")
    p.add_argument("--compare-model", default=None, help="model JSON to fit alongside for comparison")
    p.add_argument("--data", default=None)
    _add_sim_flags(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--hdi", type=float, default=0.94)
    p.add_argument("--bins", type=int, default=50)
    _add_llm_flags(p)
    _add_sampler_flags(p)
    p.set_defaults(func=_cmd_run)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ElicitationFailed as exc:
        print(f"{args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        if exc.last_response:
            print(f"last response excerpt: {exc.last_response[:200]!r}", file=sys.stderr)
        return 1
    except PlainbayesError as exc:
        print(f"{args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
