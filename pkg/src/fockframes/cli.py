"""Command-line experiment runner.

Every subcommand writes CSV tables and a ``manifest.json`` into the output
directory and exits with 0 when all assertions hold, 1 when one fails and 2 on a
usage or configuration error.  Parameters come from defaults, then an optional
JSON ``--config`` file, then explicit flags.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .fock import coherent_product, poisson_mixture, coherent_state, fock_basis
from .homodyne import PRE_REGISTERED_SLOPE, HomodyneSetup, homodyne_scan, loglog_slope, moment_compare
from .optics import canonical_json, load_network, network_matrix, unitarity_error
from .theorem import THEOREM_TOL, load_spec, offdiag_sensitivity, theorem_check
from .trajectories import (
    VISIBILITY_THRESHOLD,
    localization_ensemble,
    peak_uniformity_pvalue,
    seed_sequence,
)
from .twirl import collective_twirl, fit_collective_twirl, su2_twirl_spin_half, u1_twirl, u1_twirl_quadrature

OUT_ENV = "FOCKFRAMES_OUT"
DEFAULT_OUT = "fockframes-out"
EXIT_OK, EXIT_ASSERT, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def parse_complex(text) -> complex:
    """Accept ``1``, ``2i``, ``1+i``, ``0.5-2j`` and JSON numbers."""
    if isinstance(text, (int, float, complex)) and not isinstance(text, bool):
        return complex(text)
    if not isinstance(text, str):
        raise ValueError(f"not a complex number: {text!r}")
    s = text.strip().replace(" ", "").replace("i", "j")
    if s.endswith("j") and (len(s) == 1 or s[-2] in "+-"):
        s = s[:-1] + "1j"
    try:
        return complex(s)
    except ValueError:
        raise ValueError(f"not a complex number: {text!r}") from None


def complex_list(text) -> list[complex]:
    if isinstance(text, list):
        return [parse_complex(x) for x in text]
    return [parse_complex(x) for x in str(text).split(",") if x.strip()]


def float_list(text) -> list[float]:
    if isinstance(text, list):
        return [float(x) for x in text]
    return [float(x) for x in str(text).split(",") if x.strip()]


def pair_list(text) -> list[tuple[complex, complex]]:
    if isinstance(text, list):
        return [(parse_complex(a), parse_complex(b)) for a, b in text]
    pairs = []
    for item in str(text).split(","):
        a, sep, b = item.partition(":")
        if not sep:
            raise ValueError(f"pair {item!r} must look like alpha:beta")
        pairs.append((parse_complex(a), parse_complex(b)))
    return pairs


def positive_int(text) -> int:
    value = int(text)
    if value < 1:
        raise ValueError(f"{text} is not a positive integer")
    return value


def nonneg_int(text) -> int:
    value = int(text)
    if value < 0:
        raise ValueError(f"{text} is negative")
    return value


# name: (converter, default, help); default None means required for stochastic runs
PARAMETERS = {
    "homodyne": {
        "alpha": (parse_complex, "1", "signal amplitude, e.g. 1, 2i or 1+i"),
        "beta": (parse_complex, "2", "local oscillator amplitude"),
        "phi_steps": (positive_int, 64, "number of equally spaced phases in [0, 2pi)"),
        "cutoff": (positive_int, None, "joint photon cutoff (default: chosen from the tail bound)"),
        "moments": (nonneg_int, 0, "also compare moments of order 1..MOMENTS (max 4)"),
    },
    "twirl-check": {
        "alphas": (complex_list, "0.5,1,2i,1+i", "amplitudes for the single-mode twirl identity"),
        "pairs": (pair_list, "1:2,1:4,0.5:3", "alpha:beta pairs for the collective-twirl fit"),
        "cutoff": (positive_int, 40, "cutoff for the single-mode identity"),
    },
    "localize": {
        "n": (positive_int, 20, "photons initially in each mode"),
        "k": (nonneg_int, 30, "number of detections"),
        "seeds": (positive_int, 500, "number of trajectories"),
        "seed": (int, None, "base seed (required)"),
        "points": (positive_int, 256, "phase grid size"),
        "min_visibility": (float, VISIBILITY_THRESHOLD, "asserted lower bound on final mean visibility"),
    },
    "theorem-check": {
        "modes": (positive_int, 4, "maximum number of modes in random specs"),
        "depth": (positive_int, 6, "maximum network depth in random specs"),
        "trials": (positive_int, 100, "number of random specs (or signals with --spec-file)"),
        "seed": (int, None, "base seed (required)"),
        "spec_file": (str, None, "JSON experiment spec; checks random signals against it"),
    },
    "moments": {
        "alpha": (parse_complex, "1", "signal amplitude"),
        "betas": (float_list, "2,4,8,16", "local oscillator amplitudes"),
        "order": (positive_int, 2, "moment order (1..4)"),
        "phi": (float, 0.0, "signal phase shift"),
    },
    "network": {
        "file": (str, None, "network JSON file to validate (required)"),
        "cutoff": (nonneg_int, 3, "cutoff for the unitarity check"),
    },
}
REQUIRED = {"localize": ("seed",), "theorem-check": ("seed",), "network": ("file",)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fockframes", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name, params in PARAMETERS.items():
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="JSON file of parameters; flags override it")
        p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or {DEFAULT_OUT})")
        for key, (_, default, text) in params.items():
            shown = "required" if key in REQUIRED.get(name, ()) else f"default: {default}"
            # keep raw strings so config values and flags go through the same converter
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None,
                           help=f"{text} ({shown})")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags, converting and validating every value."""
    params = PARAMETERS[args.experiment]
    raw = {k: v[1] for k, v in params.items()}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
        for key, value in data.items():
            k = key.replace("-", "_")
            if k in ("out", "experiment"):
                continue
            if k not in params:
                raise UsageError(f"unknown config key {key!r} for {args.experiment}")
            raw[k] = value
        if args.out is None and "out" in data:
            args.out = data["out"]
    for key in params:
        if getattr(args, key) is not None:
            raw[key] = getattr(args, key)
    config = {}
    for key, (convert, _, _) in params.items():
        if raw[key] is None:
            if key in REQUIRED.get(args.experiment, ()):
                raise UsageError(f"--{key.replace('_', '-')} is required for {args.experiment}")
            config[key] = None
            continue
        try:
            config[key] = convert(raw[key])
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for {key}: {exc}") from None
    return config


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return np.format_float_positional(float(value), precision=12, fractional=False, trim="-")
    if isinstance(value, complex):
        return f"{format_value(value.real)}{'+' if value.imag >= 0 else '-'}{format_value(abs(value.imag))}i"
    return "" if value is None else str(value)


def emit_csv(path, header: list[str], rows: list[dict]) -> None:
    """RFC 4180 CSV with a header row, CRLF line ends and 12 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(row.get(h)) for h in header])


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, complex):
        return format_value(value)
    if isinstance(value, (np.floating, float)):
        return float(format_value(value))
    if isinstance(value, (np.integer, np.bool_)):
        return value.item()
    return value


class Report:
    def __init__(self):
        self.tables: dict[str, tuple[list[str], list[dict]]] = {}
        self.assertions: list[dict] = []
        self.tail_masses: dict[str, float] = {}
        self.results: dict = {}

    def table(self, name: str, header: list[str], rows: list[dict]) -> None:
        self.tables[name] = (header, rows)

    def check(self, name: str, passed: bool, value, bound) -> None:
        self.assertions.append({"name": name, "passed": bool(passed), "value": value, "bound": bound})

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions)


def run_homodyne(cfg: dict, report: Report) -> None:
    setup = HomodyneSetup(cfg["alpha"], cfg["beta"], 0.0, cfg["cutoff"])
    if cfg["moments"] > 4:
        raise UsageError("moments must be at most 4")
    if cfg["moments"] and cfg["beta"] == 0:
        raise UsageError("moment comparison needs a non-zero beta")
    rows = homodyne_scan(cfg["alpha"], cfg["beta"], cfg["phi_steps"], setup.cutoff, cfg["moments"])
    header = ["phi", "factist_mean", "fictionist_mean", "abs_diff"]
    for k in range(1, cfg["moments"] + 1):
        header += [f"factist_m{k}", f"fictionist_m{k}", f"diff_m{k}"]
    report.table("homodyne", header, rows)
    report.tail_masses["signal_and_oscillator"] = coherent_product([cfg["alpha"], cfg["beta"]],
                                                                   setup.cutoff).tail_mass
    worst = max(r["abs_diff"] for r in rows)
    report.results["cutoff"] = setup.cutoff
    report.check("mean_equality", worst < 1e-8, worst, 1e-8)


def run_twirl_check(cfg: dict, report: Report) -> None:
    rows = []
    for a in cfg["alphas"]:
        coh = coherent_state(a, cfg["cutoff"])
        target = poisson_mixture(abs(a) ** 2, cfg["cutoff"])
        rho = coh.to_density()
        twirled = u1_twirl(rho, 0)
        rows.append({"check": "single_mode_twirl_is_poisson", "label": format_value(a),
                     "deviation": float(np.max(np.abs(twirled.matrix - target.matrix)))})
        rows.append({"check": "projection_matches_quadrature", "label": format_value(a),
                     "deviation": float(np.max(np.abs(twirled.matrix - u1_twirl_quadrature(rho, 0).matrix)))})
        report.tail_masses[f"coherent {format_value(a)}"] = coh.tail_mass
    rng = np.random.default_rng(0)
    worst_su2 = 0.0
    for _ in range(16):
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        v /= np.linalg.norm(v)
        worst_su2 = max(worst_su2, float(np.max(np.abs(su2_twirl_spin_half(np.outer(v, v.conj())) - np.eye(2) / 2))))
    rows.append({"check": "spin_half_rotation_average", "label": "16 pure states", "deviation": worst_su2})
    fits = []
    for a, b in cfg["pairs"]:
        fit = fit_collective_twirl(a, b)
        row = {"alpha": a, "beta": b, "T": fit.T, "phi": fit.phi, "ratio": fit.ratio,
               "max_abs_diff": fit.max_abs_diff, "matching_relation": fit.matching_relation}
        for name, res in fit.relation_residuals.items():
            row[f"residual {name}"] = res
        fits.append(row)
        rows.append({"check": "collective_twirl_is_split_mixture",
                     "label": f"{format_value(a)}:{format_value(b)}", "deviation": fit.max_abs_diff})
        report.tail_masses[f"product {format_value(a)}:{format_value(b)}"] = fit.tail_mass
    report.table("twirl_identities", ["check", "label", "deviation"], rows)
    fit_header = ["alpha", "beta", "T", "phi", "ratio", "max_abs_diff", "matching_relation"]
    if fits:
        fit_header += [h for h in fits[0] if h.startswith("residual")]
    report.table("twirl_fits", fit_header, fits)
    worst = max(r["deviation"] for r in rows)
    report.check("twirl_identities", worst < 1e-12, worst, 1e-12)


def run_localize(cfg: dict, report: Report) -> None:
    n, k = cfg["n"], cfg["k"]
    if k > 2 * n - 1:
        raise UsageError(f"k must be at most {2 * n - 1} for n = {n}")
    seeds = seed_sequence(cfg["seed"], cfg["seeds"])
    summary = localization_ensemble(n, k, seeds, cfg["points"])
    steps = range(k + 1)
    report.table("visibility", ["step", "mean_visibility"],
                 [{"step": s, "mean_visibility": summary.mean_visibility[s]} for s in steps])
    report.table("entropy", ["step", "mean_entropy", "mean_state_entropy"],
                 [{"step": s, "mean_entropy": summary.mean_entropy[s],
                   "mean_state_entropy": summary.mean_state_entropy[s]} for s in steps])
    report.table("peaks", ["trajectory", "seed", "first_outcome", "peak_phase"],
                 [{"trajectory": i, "seed": s, "first_outcome": f, "peak_phase": p}
                  for i, (s, f, p) in enumerate(zip(seeds, summary.first_outcomes, summary.peak_phases))])
    report.tail_masses["fock_input"] = 0.0
    if k == 0:
        return
    count = len(seeds)
    n_c = summary.first_outcomes.count("c")
    sigma = np.sqrt(count) / 2
    report.check("first_outcome_balanced", abs(n_c - count / 2) <= 3 * sigma, n_c, [count / 2 - 3 * sigma, count / 2 + 3 * sigma])
    final = float(summary.mean_visibility[-1])
    report.check("final_visibility", final > cfg["min_visibility"], final, cfg["min_visibility"])
    steps_up = float(np.max(np.diff(summary.mean_entropy)))
    report.check("entropy_non_increasing", steps_up <= 0, steps_up, 0.0)
    pvalue = peak_uniformity_pvalue(summary.peak_phases, k, cfg["seed"], points=cfg["points"])
    report.check("peak_phase_uniform", pvalue >= 0.01, pvalue, 0.01)


def run_theorem_check(cfg: dict, report: Report) -> None:
    if cfg["spec_file"]:
        try:
            spec = load_spec(cfg["spec_file"])
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"bad spec file: {exc}") from None
        seeds = np.random.SeedSequence(cfg["seed"]).spawn(cfg["trials"])
        rows = [{"trial": t, "modes": spec.num_modes, "elements": len(spec.network),
                 "losses": len(spec.losses),
                 "deviation": offdiag_sensitivity(spec, 1, int(s.generate_state(1)[0]))}
                for t, s in enumerate(seeds)]
        worst = max(r["deviation"] for r in rows)
        report.results["spec"] = spec.to_dict()
    else:
        out = theorem_check(cfg["modes"], cfg["depth"], cfg["trials"], cfg["seed"])
        rows, worst = out["rows"], out["max_deviation"]
    report.table("theorem", ["trial", "modes", "elements", "losses", "deviation"], rows)
    report.tail_masses["diagonal_probes"] = 0.0
    report.results["max_deviation"] = worst
    print(f"max deviation {format_value(worst)}")
    report.check("offdiagonal_insensitivity", worst < THEOREM_TOL, worst, THEOREM_TOL)


def run_moments(cfg: dict, report: Report) -> None:
    if not 1 <= cfg["order"] <= 4:
        raise UsageError("order must be in 1..4")
    if not cfg["betas"] or any(b == 0 for b in cfg["betas"]):
        raise UsageError("betas must be non-empty and non-zero")
    rows = []
    for b in cfg["betas"]:
        setup = HomodyneSetup(cfg["alpha"], b, cfg["phi"])
        mc = moment_compare(setup, cfg["order"])
        rows.append({"beta": b, "cutoff": setup.cutoff, "factist": mc.factist_moment,
                     "fictionist": mc.fictionist_moment, "difference": mc.difference})
        report.tail_masses[f"beta {format_value(b)}"] = coherent_product([cfg["alpha"], b], setup.cutoff).tail_mass
    report.table("moments", ["beta", "cutoff", "factist", "fictionist", "difference"], rows)
    mags = [abs(r["difference"]) for r in rows]
    report.check("difference_decreasing", all(x > y for x, y in zip(mags, mags[1:])), mags, "strictly decreasing")
    if len(rows) >= 2 and all(mags):
        slope = loglog_slope(cfg["betas"], mags)
        report.results["loglog_slope"] = slope
        report.check("loglog_slope", abs(slope - PRE_REGISTERED_SLOPE) <= 0.5, slope,
                     [PRE_REGISTERED_SLOPE - 0.5, PRE_REGISTERED_SLOPE + 0.5])


def run_network(cfg: dict, report: Report) -> None:
    try:
        network = load_network(cfg["file"])
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
        raise UsageError(f"invalid network: {exc}") from None
    report.results["network"] = network.to_dict()
    err = unitarity_error(network_matrix(network, cfg["cutoff"]))
    report.results["dimension"] = fock_basis(network.num_modes, cfg["cutoff"]).dim
    report.check("unitarity", err < 1e-9, err, 1e-9)
    print(canonical_json(network))


RUNNERS = {
    "homodyne": run_homodyne,
    "twirl-check": run_twirl_check,
    "localize": run_localize,
    "theorem-check": run_theorem_check,
    "moments": run_moments,
    "network": run_network,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = Report()
    try:
        RUNNERS[args.experiment](cfg, report)
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    for name, (header, rows) in report.tables.items():
        emit_csv(out / f"{name}.csv", header, rows)
    manifest = {
        "experiment": args.experiment,
        "version": __version__,
        "config": cfg,
        "tables": sorted(f"{name}.csv" for name in report.tables),
        "tail_masses": report.tail_masses,
        "results": report.results,
        "assertions": report.assertions,
        "passed": report.passed,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for a in report.assertions:
        print(f"{'PASS' if a['passed'] else 'FAIL'} {a['name']}: {format_value(a['value']) if not isinstance(a['value'], list) else a['value']}")
    return EXIT_OK if report.passed else EXIT_ASSERT


def main() -> None:
    sys.exit(run())
