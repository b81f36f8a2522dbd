"""Pipeline tasks behind the command line: run a stage, persist its artifacts."""
import csv
import json
import logging
import os
import time
from datetime import datetime, timezone
from importlib import metadata

import humanize
import numpy as np

from z2Project import settings
from z2Project.workers import map_ordered

from . import __version__, noisy
from .circuits import build_circuit, expected_depth, non_clifford_count
from .dual_engine import bulk_average_magnetization, creutz_ratio, topological_entropy
from .exceptions import (
    ConfigError,
    EntropyBudgetError,
    FitError,
    SizeGuardError,
    UndefinedCreutzRatio,
)
from .lattice import build_lattice
from .models import AnsatzKind, AnsatzSpec, ExperimentConfig, MagnetizationCurve
from .scaling import collapse_score, finite_size_scaling
from .spectra import ground_state
from .vqe import prepare, sweep

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ("source", "d", "lambda", "magnetization")
NOISY_COLUMNS = ("p", "layers", "energy", "stderr", "rejection_rate", "kept", "total",
                 "gap", "relative_error")


# Persistence
# --------------------------
def _format(value):
    if isinstance(value, (float, np.floating)):
        return "{:.17g}".format(float(value))
    if value is None:
        return ""
    return str(value)


def write_csv(path, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format(row.get(column)) for column in header])
    logger.debug(f"Wrote {len(rows)} rows to {path}")
    return path


def write_json(path, payload):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, default=_json_default)
        handle.write("\n")
    return path


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def _version(package):
    try:
        return metadata.version(package)
    except metadata.PackageNotFoundError:
        return "unknown"


def write_manifest(out_dir, subcommand, config, seed, started_at, elapsed):
    payload = {
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "versions": {
            **{name: _version(name) for name in ("numpy", "scipy", "click", "python-dotenv", "humanize")},
            "dissipativeVqeApp": __version__,
        },
        "started_at": started_at.isoformat(),
        "wall_time_seconds": elapsed,
        "wall_time": humanize.naturaldelta(elapsed),
    }
    return write_json(os.path.join(out_dir, settings.MANIFEST_NAME), payload)


def spec_to_dict(spec):
    return {"kind": spec.kind.value, "layers": spec.layers, "clamp_angles": spec.clamp_angles}


def spec_from_dict(payload):
    return AnsatzSpec(AnsatzKind(payload["kind"]), int(payload["layers"]), bool(payload.get("clamp_angles", False)))


def load_params(path, lam=None):
    """Ansatz, lattice size and the parameter vector stored closest to `lam` (last point if None)."""
    with open(path) as handle:
        payload = json.load(handle)
    try:
        spec = spec_from_dict(payload["spec"])
        points = payload["points"]
        d = int(payload["d"])
    except (KeyError, ValueError) as e:
        raise ConfigError(f"malformed parameter file: {e}", filename=str(path)) from e
    if not points:
        raise ConfigError("parameter file holds no points", filename=str(path))
    point = points[-1] if lam is None else min(points, key=lambda p: abs(p["lambda"] - lam))
    return spec, d, float(point["lambda"]), np.asarray(point["params"], dtype=float)


def load_curves(paths, source=None):
    """Magnetization curves, one per (source, d), from any CSV with the curve columns."""
    grouped = {}
    for path in paths:
        with open(path, newline="") as handle:
            reader = csv.DictReader(handle)
            missing = set(CURVE_COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise ConfigError(f"curve file lacks columns {sorted(missing)}", filename=str(path))
            for line, row in enumerate(reader, start=2):
                if source is not None and row["source"] != source:
                    continue
                try:
                    key = (row["source"], int(row["d"]))
                    grouped.setdefault(key, []).append((float(row["lambda"]), float(row["magnetization"])))
                except ValueError as e:
                    raise ConfigError(str(e), filename=str(path), line=line) from e

    sources = {s for s, _ in grouped}
    if len(sources) > 1:
        raise ConfigError(f"curves from several sources {sorted(sources)}; pick one with --source")
    curves = []
    for (name, d), points in sorted(grouped.items()):
        points.sort()
        lambdas, values = zip(*points)
        try:
            curves.append(MagnetizationCurve(name, d, np.array(lambdas), np.array(values)))
        except ValueError as e:
            raise ConfigError(f"{name} d={d}: {e}") from e
    return curves


# Stages
# --------------------------
def lattice_info(d, out=None):
    description = build_lattice(d).describe()
    if out:
        write_json(out, description)
    return description


def _observables_row(state, d):
    row = {"magnetization": bulk_average_magnetization(state)}
    for l in range(1, d):
        try:
            row[f"creutz_{l}"] = creutz_ratio(state, l)
        except UndefinedCreutzRatio as e:
            logger.debug(f"{e}")
            row[f"creutz_{l}"] = float("nan")
    try:
        row["topological_entropy"] = topological_entropy(state)
    except EntropyBudgetError as e:
        logger.debug(f"S_t skipped: {e}")
        row["topological_entropy"] = float("nan")
    return row


def _observable_columns(d):
    return ["magnetization"] + [f"creutz_{l}" for l in range(1, d)] + ["topological_entropy"]


def run_ed(d, lambdas, out_dir, max_workers=None):
    """Exact ground states on a lambda grid; writes ed_d<d>.csv."""
    try:
        started = time.perf_counter()
        geom = build_lattice(d)

        def solve(lam):
            energy, state = ground_state(geom, lam)
            return {"source": "ED", "d": d, "lambda": float(lam), "energy": energy,
                    **_observables_row(state, d)}

        rows = map_ordered(solve, lambdas, max_workers)
        path = write_csv(
            os.path.join(out_dir, f"ed_d{d}.csv"),
            ["source", "d", "lambda", "energy"] + _observable_columns(d),
            rows,
        )
        logger.info(
            f"✅ ED d={d}: {len(rows)} points in {humanize.naturaldelta(time.perf_counter() - started)}"
        )
        return rows, path
    except Exception as e:
        logger.error(f"❌ ED failed for d={d}: {e}", exc_info=True)
        raise


def run_sweep(d, spec, lam_max, n_lambda, n_seeds, delta, seed, out_dir, with_ed=True, max_workers=None):
    """VQE sweep; writes the per-point CSV and the optimal parameters as JSON."""
    try:
        geom = build_lattice(d)
        with_ed = with_ed and geom.num_plaquettes <= settings.MAX_DUAL_PLAQUETTES
        result = sweep(geom, spec, lam_max, n_lambda, n_seeds, delta, seed,
                       with_ed=with_ed, max_workers=max_workers)

        stem = f"sweep_{spec.kind.value}{'-mf' if spec.clamp_angles else ''}_d{d}_l{spec.layers}"
        rows = [
            {
                "source": spec.kind.value.upper(), "d": d, "layers": spec.layers,
                "lambda": r.lam, "energy": r.energy, "ed_energy": r.ed_energy,
                "relative_error": r.relative_error, "infidelity": r.infidelity,
                "magnetization": r.magnetization, "seed": r.seed,
            }
            for r in result.records
        ]
        csv_path = write_csv(
            os.path.join(out_dir, f"{stem}.csv"),
            ["source", "d", "layers", "lambda", "energy", "ed_energy", "relative_error",
             "infidelity", "magnetization", "seed"],
            rows,
        )
        json_path = write_json(os.path.join(out_dir, f"{stem}.json"), {
            "spec": spec_to_dict(spec),
            "d": d,
            "master_seed": seed,
            "max_relative_error": result.max_relative_error,
            "points": [
                {"lambda": r.lam, "params": r.params, "energy": r.energy, "wall_time": r.wall_time}
                for r in result.records
            ],
        })
        return result, csv_path, json_path
    except Exception as e:
        logger.error(f"❌ Sweep {spec} d={d} failed: {e}", exc_info=True)
        raise


def run_observables(params_path, out_dir):
    """Observables of the prepared states stored in a sweep parameter file."""
    try:
        with open(params_path) as handle:
            payload = json.load(handle)
        spec = spec_from_dict(payload["spec"])
        d = int(payload["d"])
        geom = build_lattice(d)
        rows = []
        for point in payload["points"]:
            state = prepare(geom, spec, np.asarray(point["params"], dtype=float))
            rows.append({"source": spec.kind.value.upper(), "d": d, "lambda": float(point["lambda"]),
                         **_observables_row(state, d)})
        path = write_csv(
            os.path.join(out_dir, f"observables_{spec.kind.value}_d{d}_l{spec.layers}.csv"),
            ["source", "d", "lambda"] + _observable_columns(d),
            rows,
        )
        logger.info(f"✅ Observables for {spec} d={d}: {len(rows)} points")
        return rows, path
    except (KeyError, ValueError) as e:
        raise ConfigError(f"malformed parameter file: {e}", filename=str(params_path)) from e
    except Exception as e:
        logger.error(f"❌ Observables failed for {params_path}: {e}", exc_info=True)
        raise


def emit_circuit(d, spec, params, out):
    try:
        geom = build_lattice(d)
        circuit = build_circuit(geom, spec, params)
        metrics = {
            "depth": circuit.depth,
            "template_depth": expected_depth(spec.unitary_layers) if spec.kind is AnsatzKind.DVA else None,
            "cnot_count": circuit.cnot_count,
            "non_clifford_count": non_clifford_count(circuit),
            "num_qubits": circuit.num_qubits,
        }
        write_json(out, {"metrics": metrics, "circuit": circuit.to_dict()})
        logger.info(f"✅ Circuit {spec} d={d}: depth {metrics['depth']}, {metrics['cnot_count']} CNOTs")
        return metrics
    except Exception as e:
        logger.error(f"❌ Circuit emission failed for {spec} d={d}: {e}", exc_info=True)
        raise


def run_noisy(params_paths, lam, ps, trajectories, shots, seed, out_dir,
              post_select=True, layers=None, max_workers=None):
    """Noisy energies for every (parameter file, p); adds thresholds when the grid allows it."""
    try:
        loaded = [load_params(path, lam) for path in params_paths]
        if layers:
            loaded = [entry for entry in loaded if entry[0].layers in set(layers)]
        if not loaded:
            raise ConfigError("no parameter file matches the requested layer counts")
        sizes = {d for _, d, _, _ in loaded}
        if len(sizes) != 1:
            raise ConfigError(f"parameter files mix lattice sizes {sorted(sizes)}")
        d = sizes.pop()
        geom = build_lattice(d)

        reference = None
        try:
            reference, _ = ground_state(geom, lam)
        except SizeGuardError as e:
            logger.warning(f"No ED reference for d={d}: {e}")

        results, rows = {}, []
        index = 0
        for spec, _, stored_lam, params in loaded:
            if abs(stored_lam - lam) > 1e-9:
                logger.warning(f"{spec}: using parameters optimized at lam={stored_lam:g} for lam={lam:g}")
            for p in ps:
                config = ExperimentConfig(d=d, spec=spec, params=params, lam=lam, p=p,
                                          trajectories=trajectories, shots=shots,
                                          seed=seed + index * trajectories, post_select=post_select)
                index += 1
                estimate = noisy.estimate_energy(config, max_workers=max_workers)
                results[(spec.layers, p)] = estimate
                gap = None if reference is None else estimate.energy - reference
                rows.append({
                    "p": float(p), "layers": spec.layers, "energy": estimate.energy,
                    "stderr": estimate.energy_stderr, "rejection_rate": estimate.rejection_rate,
                    "kept": estimate.kept, "total": estimate.total, "gap": gap,
                    "relative_error": None if reference is None else abs(gap) / abs(reference),
                })
        csv_path = write_csv(os.path.join(out_dir, f"noisy_d{d}.csv"), NOISY_COLUMNS, rows)

        summary = {"d": d, "lambda": lam, "reference_energy": reference}
        layer_counts = {layer for layer, _ in results}
        if reference is not None and len(layer_counts) > 1:
            summary["optimal_layers"] = {
                str(p): layer for p, layer in noisy.optimal_layers(results, lam, reference).items()
            }
            positive = [p for p in ps if p > 0]
            if len(positive) >= 4:
                scan = {key: value for key, value in results.items() if key[1] > 0}
                summary["thresholds"] = [
                    {"layers": list(c.layers), "p": c.p, "stderr": c.stderr, "censored": c.censored}
                    for c in noisy.threshold_scan(scan, lam, reference, seed=seed)
                ]
        json_path = write_json(os.path.join(out_dir, f"noisy_d{d}.json"), summary)
        return rows, csv_path, json_path
    except Exception as e:
        logger.error(f"❌ Noisy run failed: {e}", exc_info=True)
        raise


def run_fss(curve_paths, out, theta=settings.SCALING_THETA, source=None):
    try:
        curves = load_curves(curve_paths, source)
        if not curves:
            raise FitError("no magnetization curves found")
        fit = finite_size_scaling(curves, theta)
        payload = fit.to_dict()
        payload["source"] = curves[0].source
        payload["sizes"] = [curve.d for curve in curves]
        try:
            payload["collapse_score"] = collapse_score(curves, fit.lambda_c, fit.nu, fit.beta)
        except FitError as e:
            logger.warning(f"Collapse score unavailable: {e}")
            payload["collapse_score"] = None
        write_json(out, payload)
        return fit, payload
    except Exception as e:
        logger.error(f"❌ Scaling fit failed: {e}", exc_info=True)
        raise


def utc_now():
    return datetime.now(timezone.utc)
