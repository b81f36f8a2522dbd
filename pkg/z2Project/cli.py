"""Command-line routes: every subcommand hands its options to a task in dissipativeVqeApp.tasks."""
import functools
import json
import logging
import logging.config
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import click
import numpy as np
from click.core import ParameterSource
from dotenv import dotenv_values

from dissipativeVqeApp import tasks
from dissipativeVqeApp.exceptions import ConfigError, Z2Error
from dissipativeVqeApp.models import AnsatzKind, AnsatzSpec

from . import settings

logger = logging.getLogger(__name__)

GROUP_KEYS = ("preset", "threads", "seed", "out")


@dataclass
class RunContext:
    out_dir: Path
    seed: int
    threads: int
    preset: dict
    preset_name: str
    config: dict = field(default_factory=dict)

    def resolve(self, name, value):
        """Flag or config-file value if given, otherwise the preset's."""
        return self.preset[name] if value is None else value


# Config files
# --------------------------
def _aliases(param):
    return {param.name} | {opt.lstrip("-").replace("-", "_") for opt in param.opts}


def _option_names(command, found=None):
    found = set() if found is None else found
    for param in command.params:
        found |= _aliases(param)
    for sub in getattr(command, "commands", {}).values():
        _option_names(sub, found)
    return found


def read_config(path, known):
    """KEY=value pairs keyed by option name; unknown or empty keys are reported with their line."""
    values = dotenv_values(path)
    lines = Path(path).read_text().splitlines()

    def line_of(key):
        for number, text in enumerate(lines, start=1):
            if text.strip().startswith(f"{key}=") or text.strip().startswith(f"{key} ="):
                return number
        return None

    config = {}
    for key, value in values.items():
        name = key.strip().lower().replace("-", "_")
        if name not in known:
            raise ConfigError(f"unknown option '{key}'", filename=path, line=line_of(key))
        if value is None or value == "":
            raise ConfigError(f"option '{key}' has no value", filename=path, line=line_of(key))
        config[name] = value
    return config


def _default_map(command, config):
    if hasattr(command, "commands"):
        return {name: _default_map(sub, config) for name, sub in command.commands.items()}
    defaults = {}
    for param in command.params:
        for alias in _aliases(param) & config.keys():
            value = config[alias]
            defaults[param.name] = [v.strip() for v in value.split(",")] if param.multiple else value
    return defaults


# Grids and inputs
# --------------------------
def parse_grid(text):
    """'a:b:n' for n evenly spaced points, or a comma-separated list."""
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            return np.linspace(float(start), float(stop), int(count)).tolist()
        return [float(value) for value in text.split(",") if value.strip()]
    except ValueError as e:
        raise click.BadParameter(f"cannot parse grid '{text}': {e}") from e


def _spec(ansatz, layers, beta_only=False):
    return AnsatzSpec(AnsatzKind(ansatz), layers, clamp_angles=beta_only)


RUN_OPTIONS = (
    click.option("--preset", "stage_preset", type=click.Choice(sorted(settings.PRESETS)), default=None,
                 help="Overrides the group-level preset for this command."),
    click.option("--threads", "stage_threads", type=click.IntRange(min=1), default=None),
    click.option("--seed", "stage_seed", type=int, default=None),
    click.option("--out", "stage_out", type=click.Path(file_okay=False), default=None),
)


def _with_stage_options(run, stage_preset, stage_threads, stage_seed, stage_out):
    changes = {}
    if stage_preset is not None:
        changes.update(preset=settings.PRESETS[stage_preset], preset_name=stage_preset)
    if stage_threads is not None:
        changes["threads"] = stage_threads
    if stage_seed is not None:
        changes["seed"] = stage_seed
    if stage_out is not None:
        changes["out_dir"] = Path(stage_out)
    if not changes:
        return run
    return replace(run, **changes)


def pipeline_stage(name):
    """Run a stage, map domain errors to exit codes and write the run manifest.

    Every stage also accepts --preset, --threads, --seed and --out after the
    subcommand; those win over the group-level values.
    """

    def decorator(fn):
        @functools.wraps(fn)
        def wrapper(run, stage_preset, stage_threads, stage_seed, stage_out, **options):
            run = _with_stage_options(run, stage_preset, stage_threads, stage_seed, stage_out)
            run.out_dir.mkdir(parents=True, exist_ok=True)
            started_at = tasks.utc_now()
            started = time.perf_counter()
            try:
                resolved = fn(run, **options)
            except ConfigError as e:
                raise click.UsageError(str(e)) from e
            except Z2Error as e:
                raise click.ClickException(str(e)) from e
            elapsed = time.perf_counter() - started
            config = {"preset": run.preset_name, "threads": run.threads, "out": str(run.out_dir), **resolved}
            tasks.write_manifest(run.out_dir, name, config, run.seed, started_at, elapsed)

        command = click.pass_obj(wrapper)
        for option in reversed(RUN_OPTIONS):
            command = option(command)
        return command

    return decorator


# Commands
# --------------------------
@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="KEY=value run configuration file.")
@click.option("--preset", type=click.Choice(sorted(settings.PRESETS)), default=settings.DEFAULT_PRESET)
@click.option("--threads", type=click.IntRange(min=1), default=settings.MAX_THREADS)
@click.option("--seed", type=int, default=0, help="Master seed.")
@click.option("--out", type=click.Path(file_okay=False), default=str(settings.OUTPUT_DIR),
              help="Output directory (Z2_OUTPUT_DIR).")
@click.pass_context
def main(ctx, config_path, preset, threads, seed, out):
    logging.config.dictConfig(settings.LOGGING)
    config = {}
    if config_path:
        try:
            config = read_config(config_path, _option_names(ctx.command))
        except ConfigError as e:
            raise click.UsageError(str(e)) from e

    group_values = {"preset": preset, "threads": threads, "seed": seed, "out": out}
    for key in GROUP_KEYS:
        if key in config and ctx.get_parameter_source(key) is ParameterSource.DEFAULT:
            group_values[key] = config[key]
    try:
        preset_name = str(group_values["preset"])
        if preset_name not in settings.PRESETS:
            raise ConfigError(f"unknown preset '{preset_name}'", filename=config_path)
        run = RunContext(
            out_dir=Path(group_values["out"]),
            seed=int(group_values["seed"]),
            threads=int(group_values["threads"]),
            preset=settings.PRESETS[preset_name],
            preset_name=preset_name,
            config=config,
        )
    except (ValueError, ConfigError) as e:
        raise click.UsageError(str(e)) from e

    ctx.default_map = _default_map(ctx.command, {k: v for k, v in config.items() if k not in GROUP_KEYS})
    ctx.obj = run


@main.group()
def lattice():
    """Lattice geometry."""


@lattice.command("info")
@click.option("--d", type=int, required=True)
@pipeline_stage("lattice info")
def lattice_info(run, d):
    description = tasks.lattice_info(d, run.out_dir / f"lattice_d{d}.json")
    click.echo(json.dumps(description, indent=2))
    return {"d": d}


@main.command("ed")
@click.option("--d", type=int, required=True)
@click.option("--lambda", "lambda_grid", default=None, help="Grid 'a:b:n' or comma list; preset grid if absent.")
@pipeline_stage("ed")
def ed(run, d, lambda_grid):
    """Exact ground states and observables along a coupling grid."""
    if lambda_grid is None:
        lambdas = np.linspace(0.0, run.preset["lambda_max"], run.preset["n_lambda"]).tolist()
    else:
        lambdas = parse_grid(lambda_grid)
    rows, path = tasks.run_ed(d, lambdas, run.out_dir, max_workers=run.threads)
    click.echo(path)
    return {"d": d, "lambdas": lambdas}


@main.group()
def vqe():
    """Variational optimization."""


@vqe.command("sweep")
@click.option("--ansatz", type=click.Choice([k.value for k in AnsatzKind]), default=AnsatzKind.DVA.value)
@click.option("--d", type=int, required=True)
@click.option("--layers", type=click.IntRange(min=1), required=True)
@click.option("--lambda-max", type=float, default=None)
@click.option("--n-lambda", type=int, default=None)
@click.option("--n-seeds", type=int, default=None)
@click.option("--delta", type=float, default=None)
@click.option("--beta-only", is_flag=True, help="Optimize beta alone with all angles held at zero.")
@click.option("--ed/--no-ed", "with_ed", default=True)
@pipeline_stage("vqe sweep")
def vqe_sweep(run, ansatz, d, layers, lambda_max, n_lambda, n_seeds, delta, beta_only, with_ed):
    spec = _spec(ansatz, layers, beta_only)
    resolved = {
        "ansatz": ansatz, "d": d, "layers": layers, "beta_only": beta_only, "with_ed": with_ed,
        "lambda_max": run.resolve("lambda_max", lambda_max),
        "n_lambda": run.resolve("n_lambda", n_lambda),
        "n_seeds": run.resolve("n_seeds", n_seeds),
        "delta": run.resolve("delta", delta),
    }
    result, csv_path, json_path = tasks.run_sweep(
        d, spec, resolved["lambda_max"], resolved["n_lambda"], resolved["n_seeds"], resolved["delta"],
        run.seed, run.out_dir, with_ed=with_ed, max_workers=run.threads,
    )
    click.echo(f"{csv_path}\n{json_path}")
    if result.max_relative_error is not None:
        click.echo(f"max relative error: {result.max_relative_error:.3e}")
    return resolved


@main.command("observables")
@click.option("--params", "params_path", type=click.Path(exists=True, dir_okay=False), required=True)
@pipeline_stage("observables")
def observables(run, params_path):
    """Magnetization, Creutz ratios and S_t of optimized states."""
    rows, path = tasks.run_observables(params_path, run.out_dir)
    click.echo(path)
    return {"params": params_path}


@main.group()
def circuit():
    """Gate-level circuits."""


@circuit.command("emit")
@click.option("--ansatz", type=click.Choice([k.value for k in AnsatzKind]), default=AnsatzKind.DVA.value)
@click.option("--d", type=int, required=True)
@click.option("--layers", type=click.IntRange(min=1), default=None)
@click.option("--params", "params_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Sweep parameter file; all-zero parameters when absent.")
@click.option("--lambda", "lam", type=float, default=None, help="Pick the stored point nearest this coupling.")
@click.option("--format", "output_format", type=click.Choice(["json"]), default="json")
@pipeline_stage("circuit emit")
def circuit_emit(run, ansatz, d, layers, params_path, lam, output_format):
    if params_path:
        spec, stored_d, stored_lam, params = tasks.load_params(params_path, lam)
        if stored_d != d:
            raise ConfigError(f"parameter file is for d={stored_d}, not d={d}", filename=params_path)
    else:
        if layers is None:
            raise click.BadParameter("--layers is required without --params", param_hint="--layers")
        spec, stored_lam = _spec(ansatz, layers), None
        params = np.zeros(spec.num_params)
    out = run.out_dir / f"circuit_{spec.kind.value}_d{d}_l{spec.layers}.{output_format}"
    metrics = tasks.emit_circuit(d, spec, params, out)
    for key, value in metrics.items():
        click.echo(f"{key}: {value}")
    return {"ansatz": spec.kind.value, "d": d, "layers": spec.layers, "params": params_path,
            "lambda": stored_lam}


@main.group()
def noisy():
    """Noisy trajectory emulation."""


@noisy.command("run")
@click.option("--params", "params_paths", type=click.Path(exists=True, dir_okay=False), multiple=True,
              required=True, help="One sweep parameter file per layer count.")
@click.option("--lambda", "lam", type=float, required=True)
@click.option("--p", "p_grid", required=True, help="Error rates, 'a,b,c' or 'a:b:n'.")
@click.option("--layers", type=int, multiple=True, help="Restrict to these layer counts.")
@click.option("--trajectories", type=int, default=None)
@click.option("--shots", type=int, default=None)
@click.option("--post-select/--no-post-select", default=True)
@pipeline_stage("noisy run")
def noisy_run(run, params_paths, lam, p_grid, layers, trajectories, shots, post_select):
    ps = parse_grid(p_grid)
    resolved = {
        "params": list(params_paths), "lambda": lam, "p": ps, "layers": list(layers),
        "trajectories": run.resolve("trajectories", trajectories),
        "shots": run.resolve("shots", shots),
        "post_select": post_select,
    }
    rows, csv_path, json_path = tasks.run_noisy(
        params_paths, lam, ps, resolved["trajectories"], resolved["shots"], run.seed, run.out_dir,
        post_select=post_select, layers=layers, max_workers=run.threads,
    )
    click.echo(f"{csv_path}\n{json_path}")
    return resolved


@main.group()
def fss():
    """Finite-size scaling."""


@fss.command("fit")
@click.option("--curves", "curve_paths", type=click.Path(exists=True, dir_okay=False), multiple=True, required=True)
@click.option("--theta", type=float, default=settings.SCALING_THETA)
@click.option("--source", default=None, help="Use only curves from this source (ED, DVA, ...).")
@pipeline_stage("fss fit")
def fss_fit(run, curve_paths, theta, source):
    fit, payload = tasks.run_fss(curve_paths, run.out_dir / "fss_fit.json", theta=theta, source=source)
    click.echo(json.dumps({k: payload[k] for k in ("lambda_c", "nu", "beta", "collapse_score")}))
    return {"curves": list(curve_paths), "theta": theta, "source": source}


if __name__ == "__main__":
    main()
