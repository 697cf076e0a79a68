"""Command-line front end: ``simulate``, ``fit``, ``predict``, ``validate`` and ``stats``.

Settings come from built-in defaults, then an optional JSON ``--config`` file,
then command-line flags. Every command writes the resolved settings to
``<out>/config.json``; passing that file back with ``--config`` repeats the
run. Exit codes: 0 success, 2 usage or configuration error, 3 algorithmic
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .benchmarks.campaign import (
    DEFAULT_DURATION,
    SYSTEMS,
    default_input_model,
    excitation_for,
    read_campaign,
    run_campaign,
    write_campaign,
)
from .benchmarks.presets import preset
from .narx import NarxDictionary, SelectionError
from .pce import PceFitError, fit_time_frozen
from .probspace import DomainError, InputModel
from .surrogate import (
    CoefficientFitError,
    NarxSettings,
    PceSettings,
    PcNarxModel,
    fit,
    mcs_statistics,
    validate,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FAILURE = 3

CONFIG_NAME = "config.json"

DEFAULTS = {
    "simulate": {
        "system": None, "n": 100, "seed": 0, "dt": None, "duration": DEFAULT_DURATION,
        "rtol": 1e-3, "workers": 1, "input_model": None, "out": None,
    },
    "fit": {
        "ed": None, "out": None, "mode": "pcnarx", "system": None, "dictionary": None,
        "threshold": None, "top_k": 5, "tolerance": 1e-3, "candidate_mode": None,
        "degree_selection": None, "weighting": None, "loo_correction": None,
        "p_max": 20, "q": 1.0, "r": 2, "patience": 2, "times": None,
    },
    "predict": {"model": None, "xi": None, "excitation": None, "system": None, "index": 0, "seed": 0, "out": None},
    "validate": {"model": None, "data": None, "channel": None, "out": None},
    "stats": {"model": None, "system": None, "n": 10000, "seed": 0, "out": None},
}
REQUIRED = {
    "simulate": ("system", "out"),
    "fit": ("ed", "out"),
    "predict": ("model", "xi", "out"),
    "validate": ("model", "data", "out"),
    "stats": ("model", "out"),
}


class UsageError(Exception):
    """Bad flags, configuration or input files."""


class AlgorithmError(Exception):
    """The computation itself failed."""


# -- helpers ---------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (list, tuple)):
        return " ".join(str(u) for u in v)
    return v


def write_csv(path, header, rows) -> None:
    """CSV with a header row; floats with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _out_dir(cfg) -> Path:
    d = Path(cfg["out"])
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {d}: {exc}") from exc
    return d


def _echo_config(command: str, cfg: dict, out: Path) -> None:
    (out / CONFIG_NAME).write_text(json.dumps({"command": command, **cfg}, indent=2, sort_keys=True))


def resolve_config(command: str, flags: dict, config_path=None) -> dict:
    cfg = dict(DEFAULTS[command])
    if config_path is not None:
        try:
            loaded = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError("config must be a JSON object")
        if loaded.pop("command", command) != command:
            raise UsageError(f"config was written for a different command than {command!r}")
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(loaded)
    cfg.update(flags)
    missing = [k for k in REQUIRED[command] if cfg.get(k) is None]
    if missing:
        raise UsageError(f"{command}: missing required setting(s) {missing}")
    return cfg


def _check_system(system):
    if system not in SYSTEMS:
        raise UsageError(f"unknown system {system!r}; expected one of {list(SYSTEMS)}")


def _load_model(path) -> PcNarxModel:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"model file {p} not found")
    try:
        return PcNarxModel.from_json(p)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{p} is not a PC-NARX model: {exc}") from exc


def _load_campaign(path):
    d = Path(path)
    try:
        camp = read_campaign(d)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from exc
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"unreadable campaign in {d}: {exc}") from exc
    if not camp.experiments:
        raise UsageError(f"campaign in {d} has no successful runs")
    return camp


def _load_dictionary(spec) -> NarxDictionary:
    if spec in SYSTEMS:
        return preset(spec).dictionary()
    p = Path(spec)
    if not p.is_file():
        raise UsageError(f"dictionary must be one of {list(SYSTEMS)} or a JSON file, got {spec!r}")
    try:
        return NarxDictionary.from_list(json.loads(p.read_text()))
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        raise UsageError(f"bad dictionary file {p}: {exc}") from exc


# -- commands --------------------------------------------------------------------

def cmd_simulate(cfg: dict) -> int:
    _check_system(cfg["system"])
    if not isinstance(cfg["n"], int) or cfg["n"] < 1:
        raise UsageError("n must be a positive integer")
    if cfg["dt"] is not None and not cfg["dt"] > 0:
        raise UsageError("dt must be positive")
    if not cfg["rtol"] > 0:
        raise UsageError("rtol must be positive")
    im = None
    if cfg["input_model"] is not None:
        try:
            im = InputModel.from_json(Path(cfg["input_model"]).read_text())
        except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
            raise UsageError(f"bad input model {cfg['input_model']}: {exc}") from exc
        if im.dim != default_input_model(cfg["system"]).dim:
            raise UsageError("input model dimension does not match the system")
    out = _out_dir(cfg)
    camp = run_campaign(
        cfg["system"], im, cfg["n"], cfg["dt"], cfg["duration"], cfg["seed"], cfg["rtol"], workers=cfg["workers"]
    )
    write_campaign(camp, out)
    _echo_config("simulate", cfg, out)
    print(f"simulated {len(camp.records)} runs ({camp.n_failed} failed) -> {out}")
    return EXIT_OK


def _fit_settings(cfg: dict, system: str | None):
    base = preset(system) if system is not None else None
    for key, value in (
        ("dictionary", system),
        ("threshold", base.narx.threshold if base else None),
        ("candidate_mode", base.narx.candidate_mode if base else "prefixes"),
        ("degree_selection", base.pce.degree_selection if base else "loo"),
        ("weighting", base.pce.weighting if base else "none"),
        ("loo_correction", base.pce.loo_correction if base else True),
    ):
        if cfg[key] is None:
            cfg[key] = value
    if cfg["dictionary"] is None:
        raise UsageError("no dictionary given and the campaign names no known system")
    if cfg["candidate_mode"] not in ("cut", "prefixes"):
        raise UsageError("candidate_mode must be 'cut' or 'prefixes'")
    if cfg["degree_selection"] not in ("loo", "ed_reconstruction"):
        raise UsageError("degree_selection must be 'loo' or 'ed_reconstruction'")
    if cfg["weighting"] not in ("none", "inverse_variance"):
        raise UsageError("weighting must be 'none' or 'inverse_variance'")
    if not (isinstance(cfg["p_max"], int) and cfg["p_max"] >= 1):
        raise UsageError("p_max must be a positive integer")
    if not 0 < cfg["q"] <= 1:
        raise UsageError("q must lie in (0, 1]")
    narx = NarxSettings(cfg["threshold"], cfg["top_k"], cfg["tolerance"], cfg["candidate_mode"])
    pce = PceSettings(
        tuple(range(1, cfg["p_max"] + 1)), cfg["q"], cfg["r"], cfg["degree_selection"],
        cfg["patience"], bool(cfg["loo_correction"]), cfg["weighting"],
    )
    return narx, pce


def _fit_time_frozen(cfg, camp, out: Path) -> int:
    exps = camp.experiments
    dt = exps[0].dt
    if len({e.T for e in exps}) != 1:
        raise UsageError("experiments must share one time grid")
    if cfg["times"] is None:
        instants = np.arange(exps[0].T)
    else:
        instants = np.array([int(round(float(t) / dt)) for t in cfg["times"]])
        if np.any(instants < 0) or np.any(instants >= exps[0].T):
            raise UsageError("requested times lie outside the simulated interval")
    X = np.array([e.xi for e in exps])
    Y = np.array([e.y for e in exps])
    try:
        tf = fit_time_frozen(
            X, Y, camp.input_model, exps[0].t, instants, tuple(range(1, cfg["p_max"] + 1)), cfg["q"], cfg["r"],
            patience=cfg["patience"], loo_correction=bool(cfg["loo_correction"]),
        )
    except PceFitError as exc:
        raise AlgorithmError(str(exc)) from exc
    tf.to_json(out / "time_frozen.json")
    write_csv(
        out / "instant_loo.csv",
        ["instant", "t", "loo", "relative_loo", "degree"],
        [(int(k), float(t), m.loo, m.relative_loo, m.degree) for k, t, m in zip(tf.instants, tf.times, tf.models)],
    )
    print(f"time-frozen PCEs at {len(tf.instants)} instants; max relative LOO {max(m.relative_loo for m in tf.models):.3e}")
    return EXIT_OK


def cmd_fit(cfg: dict) -> int:
    if cfg["mode"] not in ("pcnarx", "time-frozen"):
        raise UsageError("mode must be 'pcnarx' or 'time-frozen'")
    camp = _load_campaign(cfg["ed"])
    if camp.input_model is None:
        raise UsageError("campaign manifest lacks the input model")
    system = cfg["system"] or camp.settings.get("system")
    if system is not None:
        _check_system(system)
    cfg["system"] = system
    narx, pce = _fit_settings(cfg, system)
    out = _out_dir(cfg)
    _echo_config("fit", cfg, out)
    if cfg["mode"] == "time-frozen":
        return _fit_time_frozen(cfg, camp, out)

    dictionary = _load_dictionary(cfg["dictionary"])
    try:
        model = fit(camp.experiments, camp.input_model, dictionary, narx, pce)
    except SelectionError as exc:
        raise AlgorithmError(f"NARX structure selection failed\n{exc}") from exc
    except (CoefficientFitError, PceFitError) as exc:
        raise AlgorithmError(str(exc)) from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    model.info["system"] = system
    model.info["duration"] = camp.settings.get("duration")
    model.to_json(out / "model.json")

    ledger = model.info["candidate_ledger"]
    write_csv(
        out / "candidates.csv",
        ["candidate", "n_terms", "mean_error", "n_failed", "evaluated", "sources", "terms"],
        [(i, r["n_terms"], r["mean_error"], r["n_failed"], r["evaluated"], r["sources"], r["terms"])
         for i, r in enumerate(ledger)],
    )
    write_csv(
        out / "coefficients.csv",
        ["term", "loo", "relative_loo", "degree", "n_basis"],
        [(lab, m.loo, m.relative_loo, m.degree, len(m.coefficients))
         for lab, m in zip(model.structure.labels(), model.coefficient_pces)],
    )
    print(f"{len(ledger)} candidates; selected {len(model.structure)} terms: {', '.join(model.structure.labels())}")
    print(f"ED free-run mean error {np.mean(model.info['ed_errors']):.4e} (NARX only {model.info['phase1_mean_error']:.4e})")
    if not model.info["phase1_qualified"]:
        print(f"warning: no candidate reached mean error < {narx.tolerance:g}", file=sys.stderr)
    return EXIT_OK


def _read_excitation(path):
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"excitation file {p} not found")
    with open(p) as fh:
        header = fh.readline().strip().split(",")
    if "x" not in header:
        raise UsageError("excitation CSV needs a column named x")
    data = np.loadtxt(p, delimiter=",", skiprows=1, ndmin=2)
    cols = {h: data[:, i] for i, h in enumerate(header)}
    return cols["x"], cols.get("y")


def cmd_predict(cfg: dict) -> int:
    model = _load_model(cfg["model"])
    xi = np.asarray(cfg["xi"], dtype=float)
    if xi.shape != (model.input_model.dim,):
        raise UsageError(f"xi needs {model.input_model.dim} values, got {xi.size}")
    dt = model.info.get("dt")
    y0 = None
    if cfg["excitation"] is not None:
        x, y = _read_excitation(cfg["excitation"])
        if y is not None:
            y0 = y[: model.structure.max_lag]
    else:
        system = cfg["system"] or model.info.get("system")
        _check_system(system)
        duration = model.info.get("duration") or DEFAULT_DURATION
        x = excitation_for(system, dt, duration)(xi, cfg["index"], cfg["seed"])
    out = _out_dir(cfg)
    _echo_config("predict", cfg, out)
    try:
        y_hat = model.predict(xi, x, y0)
    except DomainError as exc:
        raise UsageError(str(exc)) from exc
    except RuntimeError as exc:
        raise AlgorithmError(str(exc)) from exc
    t = np.arange(x.size) * (dt or 1.0)
    write_csv(out / "prediction.csv", ["t", "x", "y"], zip(t, x, y_hat))
    print(f"predicted {x.size} samples -> {out / 'prediction.csv'}")
    return EXIT_OK


def cmd_validate(cfg: dict) -> int:
    model = _load_model(cfg["model"])
    camp = _load_campaign(cfg["data"])
    exps = camp.experiments
    grid = (model.info.get("n_samples"), model.info.get("dt"))
    if any((e.T, e.dt) != grid for e in exps):
        raise UsageError(f"validation grid differs from the model's (T, dt) = {grid}")
    if cfg["channel"] is not None and cfg["channel"] not in exps[0].extra:
        raise UsageError(f"channel {cfg['channel']!r} not in the validation data")
    if exps[0].xi.size != model.input_model.dim:
        raise UsageError("validation parameters do not match the model's input model")
    systems = {camp.settings.get("system"), model.info.get("system")} - {None}
    if len(systems) > 1:
        raise UsageError(f"validation data and model belong to different systems {sorted(systems)}")
    out = _out_dir(cfg)
    _echo_config("validate", cfg, out)
    try:
        rep = validate(model, exps, cfg["channel"])
    except DomainError as exc:
        raise UsageError(f"validation parameters outside the model's input model: {exc}") from exc
    write_csv(out / "errors.csv", ["run", "error"], zip(camp.ok_indices, rep.errors))
    s = rep.stable
    Y, P = rep.references[s], rep.predictions[s]
    t = np.arange(rep.references.shape[1]) * rep.dt
    if s.sum() >= 2:
        write_csv(
            out / "statistics.csv",
            ["t", "mean_reference", "mean_prediction", "std_reference", "std_prediction"],
            zip(t, Y.mean(0), P.mean(0), Y.std(0, ddof=1), P.std(0, ddof=1)),
        )
    runs = np.array(camp.ok_indices)[s]
    write_csv(
        out / "max_response.csv",
        ["run", "max_reference", "max_prediction"],
        zip(runs, np.abs(Y).max(1), np.abs(P).max(1)),
    )
    summary = rep.summary() if s.sum() >= 2 else {"n": rep.n, "mean_error": rep.mean_error, "n_unstable": rep.n_unstable}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    above = int(np.sum(rep.errors > 0.1))
    print(
        f"mean_error={rep.mean_error:.4e} finite_mean_error={rep.finite_mean_error:.4e} "
        f"runs_above_0.1={above}/{rep.n} unstable={rep.n_unstable}"
    )
    return EXIT_OK


def cmd_stats(cfg: dict) -> int:
    model = _load_model(cfg["model"])
    system = cfg["system"] or model.info.get("system")
    _check_system(system)
    if not isinstance(cfg["n"], int) or cfg["n"] < 100:
        raise UsageError("stats needs n >= 100")
    dt = model.info.get("dt")
    duration = model.info.get("duration") or DEFAULT_DURATION
    out = _out_dir(cfg)
    cfg["system"] = system
    _echo_config("stats", cfg, out)
    try:
        st = mcs_statistics(model, model.input_model, excitation_for(system, dt, duration), cfg["n"], cfg["seed"])
    except RuntimeError as exc:
        raise AlgorithmError(str(exc)) from exc
    st.to_csv(out, dt)
    (out / "summary.json").write_text(
        json.dumps({"n": cfg["n"], "n_unstable": st.n_unstable, "unstable_warning": st.warning}, indent=2)
    )
    print(f"{cfg['n']} surrogate runs, {st.n_unstable} unstable{' (warning)' if st.warning else ''} -> {out}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "validate": cmd_validate,
    "stats": cmd_stats,
}


# -- argument parsing --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcnarx", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    def add(name, help_):
        p = sub.add_parser(name, help=help_, argument_default=S)
        p.add_argument("--config", default=None, help="JSON file of settings; flags override it")
        p.add_argument("--out", help="output directory")
        return p

    p = add("simulate", "run a simulation campaign")
    p.add_argument("--system", choices=SYSTEMS)
    p.add_argument("--n", type=int, help="number of runs")
    p.add_argument("--seed", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--duration", type=float)
    p.add_argument("--rtol", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--input-model", dest="input_model", help="JSON input model replacing the default")

    p = add("fit", "fit a PC-NARX model or time-frozen PCEs to a campaign")
    p.add_argument("--ed", help="campaign directory")
    p.add_argument("--mode", choices=("pcnarx", "time-frozen"))
    p.add_argument("--system", choices=SYSTEMS, help="preset to take defaults from (default: the campaign's)")
    p.add_argument("--dictionary", help="system name or JSON term list")
    p.add_argument("--threshold", type=float, help="max|y| above which experiments feed candidate search")
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--candidate-mode", dest="candidate_mode", choices=("cut", "prefixes"))
    p.add_argument("--degree-selection", dest="degree_selection", choices=("loo", "ed_reconstruction"))
    p.add_argument("--weighting", choices=("none", "inverse_variance"))
    p.add_argument("--loo-correction", dest="loo_correction", action=argparse.BooleanOptionalAction)
    p.add_argument("--p-max", dest="p_max", type=int)
    p.add_argument("--q", type=float)
    p.add_argument("--r", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--times", type=float, nargs="+", help="time-frozen mode: instants (s) to fit")

    p = add("predict", "predict one trajectory")
    p.add_argument("--model")
    p.add_argument("--xi", type=float, nargs="+")
    p.add_argument("--excitation", help="CSV with an x column (and optionally y for initial values)")
    p.add_argument("--system", choices=SYSTEMS)
    p.add_argument("--index", type=int, help="run index of a synthesized excitation")
    p.add_argument("--seed", type=int)

    p = add("validate", "compare a model with a validation campaign")
    p.add_argument("--model")
    p.add_argument("--data", help="validation campaign directory")
    p.add_argument("--channel", help="extra channel compared after integrating predictions")

    p = add("stats", "Monte Carlo statistics of the surrogate")
    p.add_argument("--model")
    p.add_argument("--system", choices=SYSTEMS)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        cfg = resolve_config(args.command, flags, args.config)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AlgorithmError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
