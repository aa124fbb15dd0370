"""``ucr-lab`` command line: spectrum, bounds, simulate, verify, sweep.

Every job reads a JSON config, writes ``<job>.json`` (and CSV tables where
relevant) into ``--out`` atomically, and prints a one-line summary.

Exit codes: 0 ok, 2 config/schema error, 3 numeric failure, 4 a gated
lemma check failed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from importlib import resources
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np

from . import converse_lab as cl
from ._util import STREAM_FIXTURE, atomic_write, dumps, fmt, trial_rng
from .capacity import AuxiliaryChannel, SpectrumConfig, cr_bound, estimate_candidate_spectra, sup_thresholds
from .protocol import ProtocolConfig, run_protocol
from .source import JointSource, source_from_dict
from .spectrum import ChannelFamily, channel_from_dict, default_input_candidates, input_from_dict, thresholds_from_spectrum

SCHEMA_TAG = "ucr-lab/1"
EXIT_OK, EXIT_SCHEMA, EXIT_NUMERIC, EXIT_LEMMA = 0, 2, 3, 4
JOBS = ("spectrum", "bounds", "simulate", "verify", "sweep")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# schemas

_pmf = {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1}
_matrix = {"type": "array", "items": _pmf, "minItems": 1}
_eps = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
_source = {
    "type": "object",
    "properties": {"type": {"enum": ["explicit", "dsbs", "identical", "independent"]}},
    "required": [],
}
_channel = {
    "type": "object",
    "properties": {"type": {"enum": ["memoryless", "bsc", "noiseless", "mixed", "mixed_bsc", "custom"]}},
    "required": ["type"],
}
_input = {"type": "object", "properties": {"type": {"enum": ["iid", "uniform", "per_n"]}}}
_common = {
    "seed": {"type": "integer", "minimum": 0},
    "job": {"enum": list(JOBS)},
    "description": {"type": "string"},
}
_spectrum_props = {
    "channel": _channel,
    "inputs": {"type": "array", "items": _input, "minItems": 1},
    "blocklengths": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
    "trials": {"type": "integer", "minimum": 100},
    "band": {"type": "number", "minimum": 0},
    "limsup": {"enum": ["largest", "top2"]},
}
_bound_props = {
    "source": _source,
    "method": {"enum": ["grid", "ascent"]},
    "card_u": {"type": "integer", "minimum": 2},
    "step": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
}

SCHEMAS = {
    "spectrum": {
        "type": "object",
        "properties": {**_common, **_spectrum_props, "epsilon": {"oneOf": [_eps, {"type": "array", "items": _eps, "minItems": 1}]}},
        "required": ["seed", "channel", "blocklengths", "trials", "epsilon"],
        "additionalProperties": False,
    },
    "bounds": {
        "type": "object",
        "properties": {**_common, **_spectrum_props, **_bound_props, "epsilon": {"oneOf": [_eps, {"type": "array", "items": _eps, "minItems": 1}]}},
        "required": ["seed", "source", "channel", "blocklengths", "trials", "epsilon"],
        "additionalProperties": False,
    },
    "sweep": {
        "type": "object",
        "properties": {**_common, **_spectrum_props, **_bound_props, "epsilon_grid": {"type": "array", "items": _eps, "minItems": 1}},
        "required": ["seed", "source", "channel", "blocklengths", "trials", "epsilon_grid"],
        "additionalProperties": False,
    },
    "simulate": {
        "type": "object",
        "properties": {
            **_common,
            "source": _source,
            "aux": {"oneOf": [_matrix, {"type": "object"}]},
            "channel": _channel,
            "n": {"type": "integer", "minimum": 1},
            "trials": {"type": "integer", "minimum": 1},
            "mu": {"type": "number"},
            "delta": {"type": "number", "exclusiveMinimum": 0},
            "N1": {"type": "integer", "minimum": 1},
            "N2": {"type": "integer", "minimum": 1},
            "cap": {"type": "integer", "minimum": 1},
            "transmission": {"type": "object"},
            "targets": {"type": "object"},
            "event_log": {"type": "boolean"},
        },
        "required": ["seed", "source", "aux", "channel", "n", "trials"],
        "additionalProperties": False,
    },
    "verify": {
        "type": "object",
        "properties": {**_common, "fixtures_per_lemma": {"type": "integer", "minimum": 1}},
        "required": ["seed"],
        "additionalProperties": False,
    },
}


def load_config(job: str, path: str | None, seed_override: int | None) -> dict:
    if path is None:
        if job != "verify":
            raise ConfigError(f"{job} needs --config")
        cfg = json.loads(resources.files("ucr_lab").joinpath("fixtures/verify.json").read_text())
    else:
        try:
            cfg = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    try:
        jsonschema.validate(cfg, SCHEMAS[job])
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"schema: {exc.message} at {'/'.join(map(str, exc.absolute_path)) or '<root>'}") from exc
    if cfg.get("job", job) != job:
        raise ConfigError(f"config is for job {cfg['job']!r}, not {job!r}")
    return cfg


def _parse(fn, *args):
    """Run a constructor; ValueErrors become config errors."""
    try:
        return fn(*args)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _epsilons(cfg: dict, key: str = "epsilon") -> list[float]:
    e = cfg[key]
    return [float(x) for x in (e if isinstance(e, list) else [e])]


def _spectrum_setup(cfg: dict, threads: int):
    ch = _parse(channel_from_dict, cfg["channel"])
    inputs = None if "inputs" not in cfg else [_parse(input_from_dict, d) for d in cfg["inputs"]]
    scfg = SpectrumConfig(cfg["blocklengths"], cfg["trials"], cfg["seed"], cfg.get("band", 0.0), cfg.get("limsup", "largest"), threads)
    return ch, inputs, scfg


# ---------------------------------------------------------------------------
# jobs


def job_spectrum(cfg: dict, out: Path, threads: int) -> tuple[dict, str]:
    ch, inputs, scfg = _spectrum_setup(cfg, threads)
    spectra = estimate_candidate_spectra(inputs, ch, scfg)
    eps = _epsilons(cfg)
    n_top = max(scfg.blocklengths)
    per_input = []
    used = default_input_candidates(ch) if inputs is None else inputs
    for idx, (inp, est) in enumerate(zip(used, spectra)):
        atomic_write(out / f"spectrum_samples_{idx}.csv", est.to_csv())
        rows = []
        for e in eps:
            lo, hi = thresholds_from_spectrum(est, e, scfg.band, scfg.limsup)
            rows.append({"n": n_top, "epsilon": e, "l_hat": lo, "u_hat": hi})
        per_input.append(
            {
                "input": inp.to_dict(),
                "samples_csv": f"spectrum_samples_{idx}.csv",
                "moments": {str(n): {"mean": est.mean(n), "std": est.std(n)} for n in est.blocklengths},
                "thresholds": rows,
            }
        )
    summary = []
    for e in eps:
        lo, hi = sup_thresholds(spectra, e, scfg.band, scfg.limsup)
        summary.append({"n": n_top, "epsilon": e, "l_hat": lo, "u_hat": hi})
    result = {"inputs": per_input, "summary": summary, "band": scfg.band, "limsup": scfg.limsup, "trials": scfg.trials}
    line = "; ".join(f"eps={fmt(r['epsilon'])} l_hat={fmt(r['l_hat'])} u_hat={fmt(r['u_hat'])}" for r in summary)
    return result, line


def sweep_epsilon(
    src: JointSource,
    ch: ChannelFamily,
    inputs,
    eps_grid: Sequence[float],
    scfg: SpectrumConfig,
    method: str = "grid",
    card_u: int | None = None,
    step: float = 0.05,
) -> list[dict]:
    """Thresholds and both bounds along an ascending epsilon grid.

    Spectra are estimated once. With ``method="ascent"`` a maximizer found
    at a smaller budget stays feasible at larger ones, so it is carried
    forward whenever it beats the fresh search.
    """
    eps_grid = [float(e) for e in eps_grid]
    if any(b < a for a, b in zip(eps_grid, eps_grid[1:])):
        raise ConfigError("epsilon grid must be sorted ascending")
    spectra = estimate_candidate_spectra(inputs, ch, scfg)
    rows, best = [], {"lower": None, "upper": None}
    for e in eps_grid:
        l_hat, u_hat = sup_thresholds(spectra, e, scfg.band, scfg.limsup)
        row = {"epsilon": e, "l_hat": l_hat, "u_hat": u_hat}
        for key, budget in (("lower", l_hat), ("upper", u_hat)):
            res = cr_bound(src, budget, card_u, method, step, seed=scfg.seed)
            prev = best[key]
            if prev is not None and prev.value > res.value:
                res = prev
            best[key] = res
            row[f"{key}_bits"] = res.value
            row[f"{key}_argmax"] = res.argmax.pu_given_x.tolist()
        rows.append(row)
    return rows


def _bounds_rows(cfg: dict, threads: int, grid_key: str) -> list[dict]:
    ch, inputs, scfg = _spectrum_setup(cfg, threads)
    src = _parse(source_from_dict, cfg["source"])
    eps = _epsilons(cfg, grid_key)
    if grid_key == "epsilon":
        eps = sorted(eps)
    return sweep_epsilon(src, ch, inputs, eps, scfg, cfg.get("method", "grid"), cfg.get("card_u"), cfg.get("step", 0.05))


def job_bounds(cfg: dict, out: Path, threads: int) -> tuple[dict, str]:
    rows = _bounds_rows(cfg, threads, "epsilon")
    result = {"results": rows, "method": cfg.get("method", "grid"), "card_u": cfg.get("card_u"), "step": cfg.get("step", 0.05)}
    if not isinstance(cfg["epsilon"], list):
        result.update({k: rows[0][k] for k in ("epsilon", "lower_bits", "upper_bits")})
    line = "; ".join(f"eps={fmt(r['epsilon'])} lower={fmt(r['lower_bits'])} upper={fmt(r['upper_bits'])}" for r in rows)
    return result, line


def job_sweep(cfg: dict, out: Path, threads: int) -> tuple[dict, str]:
    rows = _bounds_rows(cfg, threads, "epsilon_grid")
    cols = ("epsilon", "l_hat", "u_hat", "lower_bits", "upper_bits")
    csv = ",".join(cols) + "\n" + "".join(",".join(fmt(r[c]) for c in cols) + "\n" for r in rows)
    atomic_write(out / "sweep.csv", csv)
    return {"rows": rows, "csv": "sweep.csv"}, f"{len(rows)} rows -> sweep.csv"


def _aux_from(desc) -> AuxiliaryChannel:
    if isinstance(desc, list):
        return AuxiliaryChannel(np.asarray(desc, dtype=float))
    kind = desc.get("type")
    if kind == "bsc":
        return AuxiliaryChannel.bsc(float(desc["a"]))
    if kind == "identity":
        return AuxiliaryChannel.identity(int(desc["alphabet"]))
    raise ValueError(f"unknown auxiliary type {kind!r}")


def job_simulate(cfg: dict, out: Path, threads: int) -> tuple[dict, str]:
    desc = dict(cfg)
    aux = _parse(_aux_from, desc.pop("aux"))
    desc["aux"] = aux.pu_given_x.tolist()
    pcfg = _parse(ProtocolConfig.from_dict, desc)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # surfaced in the result instead
        res = run_protocol(pcfg)
    result = res.to_dict()
    if pcfg.event_log:
        atomic_write(out / "simulate_events.csv", res.event_csv())
        result["events_csv"] = "simulate_events.csv"
    line = f"P[K!=L]={fmt(res.p_disagree)}+-{fmt(res.p_disagree_half_width)} |K|={res.key_size} gap={fmt(res.uniformity_gap)}"
    return result, line


def verify_suite(seed: int, per_lemma: int = 100) -> dict:
    """Run every converse check on random gated fixtures."""
    suites: dict = {}

    def record(name, idx, fn):
        s = suites.setdefault(name, {"fixtures": 0, "failures": 0, "max_exact_error": 0.0, "min_margin": math.inf})
        rng = trial_rng(seed, STREAM_FIXTURE, idx, s["fixtures"])
        ok, err, margin = fn(rng)
        s["fixtures"] += 1
        s["failures"] += 0 if ok else 1
        s["max_exact_error"] = max(s["max_exact_error"], err)
        s["min_margin"] = min(s["min_margin"], margin)

    def check(res):
        return res.passed, 0.0, res.rhs - res.lhs

    def lower(res):  # mass-type checks: lhs is the mass, rhs the bound
        return res.passed, 0.0, res.lhs - res.rhs

    def constants_fx(rng):
        k = cl.random_constants(rng, float(rng.uniform(0, 3)), float(rng.uniform(1e-4, 0.5)))
        err = abs(k.chebyshev_ratio - math.sqrt(k.lam) * (1 - math.sqrt(k.epsilon)))
        pred = (k.epsilon < k.kappa + k.beta < 1) if k.admissible else True
        return err <= 1e-12 and pred, err, 1e-12 - err

    def variance_fx(rng):
        f = cl.random_variance_fixture(rng)
        return check(cl.variance_bound_check(f["p_k"], f["n"], f["c"], f["beta"]))

    def l_fx(rng):
        f = cl.random_variance_fixture(rng)
        return lower(cl.set_L_mass(f["p_k"], f["n"], cl.random_constants(rng, f["c"], f["beta"])))

    def d_fx(rng):
        f = cl.random_D_fixture(rng)
        return lower(cl.set_D_mass(f["p_ky"], f["n"], f["consts"]))

    def measure_fx(rng):
        r = cl.divergence_identity(*cl.random_measure_fixture(rng))
        err = abs(r.lhs - r.rhs)
        return r.passed, err, 1e-9 - err

    def l3_fx(rng):
        f = cl.random_lemma3_fixture(rng)
        return check(cl.lemma3_check(f["p_xyz"], f["phi"], f["S"], f["consts"], f["n"]))

    def l4_fx(rng):
        f = cl.random_lemma4_fixture(rng)
        return check(cl.lemma4_check(f["p_xyz"], f["phi"], f["lam"], f["S"], f["consts"], f["rate_cap"], f["n"]))

    def claim_fx(rng):
        f = cl.random_claim1_fixture(rng)
        return check(cl.claim1_check(f["p_xyz"], f["phi"], f["lam"], f["psi"], f["S"], f["consts"], f["rate_cap"], f["n"]))

    def tele_fx(rng):
        a, b, c = cl.telescoping_identity(cl.random_telescoping_fixture(rng), 2)
        err = max(abs(a - b), abs(a - c))
        return err <= 1e-9, err, 1e-9 - err

    def single_fx(rng):
        joint, n = cl.random_single_letter_fixture(rng)
        try:
            h_k, n_iux, h_k_y, n_gap = cl.single_letterize(joint, n)
        except AssertionError:
            return False, math.inf, -math.inf
        err = abs(n_gap - h_k_y)
        return True, err, n_iux - h_k

    plan = [
        ("constants", constants_fx),
        ("variance_bound", variance_fx),
        ("set_L_mass", l_fx),
        ("set_D_mass", d_fx),
        ("change_of_measure", measure_fx),
        ("lemma3", l3_fx),
        ("lemma4", l4_fx),
        ("claim1", claim_fx),
        ("telescoping", tele_fx),
        ("single_letterize", single_fx),
    ]
    for idx, (name, fn) in enumerate(plan):
        for _ in range(per_lemma):
            record(name, idx, fn)
    failures = sum(s["failures"] for s in suites.values())
    return {"suites": suites, "failures": failures, "passed": failures == 0, "fixtures_per_lemma": per_lemma}


def job_verify(cfg: dict, out: Path, threads: int) -> tuple[dict, str]:
    result = verify_suite(cfg["seed"], cfg.get("fixtures_per_lemma", 100))
    line = f"{len(result['suites'])} suites, {result['failures']} failures"
    return result, line


JOB_FUNCS = {"spectrum": job_spectrum, "bounds": job_bounds, "simulate": job_simulate, "verify": job_verify, "sweep": job_sweep}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ucr-lab", description="Common-randomness numerical laboratory.")
    sub = p.add_subparsers(dest="job", required=True)
    for job in JOBS:
        sp = sub.add_parser(job)
        sp.add_argument("--config", help="JSON config file (verify defaults to the shipped fixture suite)")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--threads", type=int, default=1, help="worker threads for spectrum sampling")
    return p


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        cfg = load_config(args.job, args.config, args.seed)
        result, line = JOB_FUNCS[args.job](cfg, out, max(1, args.threads))
    except ConfigError as exc:
        print(f"ucr-lab {args.job}: config error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (ValueError, ArithmeticError, RuntimeError, AssertionError, cl.HypothesisError) as exc:
        print(f"ucr-lab {args.job}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    doc = {"schema": SCHEMA_TAG, "job": args.job, "seed": cfg["seed"], "config": cfg, **result}
    atomic_write(out / f"{args.job}.json", dumps(doc))
    print(f"{args.job}: {line}")
    if args.job == "verify" and not result["passed"]:
        return EXIT_LEMMA
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":  # pragma: no cover
    main()
