"""Simulation campaigns: input models of the benchmarks, designs and batch solves.

Seed splitting: the design of a campaign with seed ``s`` is drawn from
``SeedSequence(s, spawn_key=(0,))`` and the excitation noise of run ``i`` from
``SeedSequence(s, spawn_key=(1, i))``. Run ``i`` is therefore a function of
``(design[i], s, i)`` only, whatever the campaign size.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..narx import Experiment, read_experiment, write_experiment
from ..probspace import InputModel, Marginal, sample_lhs
from .ground_motion import (
    FilterValidityError,
    GroundMotionParams,
    ParameterInfeasibleError,
    synthesize_ground_motion,
)
from .integrator import StiffnessError, integrate_rk45
from .systems import BOUCWEN, DUFFING, QUARTER_CAR, boucwen_params, duffing_params

SYSTEMS = ("quarter_car", "duffing", "boucwen")
DEFAULT_DT = {"quarter_car": 0.01, "duffing": 0.005, "boucwen": 0.005}
DEFAULT_DURATION = 30.0
MANIFEST = "manifest.json"

GM_NAMES = ("I_a", "D_5_95", "t_mid", "f_mid", "f_prime", "zeta_f")
GM_CORRELATION = np.array(
    [
        [1.0, -0.36, 0.01, -0.15, 0.13, -0.01],
        [-0.36, 1.0, 0.67, -0.13, -0.16, -0.2],
        [0.01, 0.67, 1.0, -0.28, -0.2, -0.22],
        [-0.15, -0.13, -0.28, 1.0, -0.2, 0.28],
        [0.13, -0.16, -0.2, -0.2, 1.0, -0.01],
        [-0.01, -0.2, -0.22, 0.28, -0.01, 1.0],
    ]
)


def ground_motion_marginals() -> list:
    # frequencies in Hz, converted to rad/s when the motion is synthesized
    return [
        Marginal.lognormal(0.0468, 0.164),
        Marginal.beta(17.3, 9.31, 5.0, 45.0),
        Marginal.beta(12.4, 7.44, 0.5, 40.0),
        Marginal.gamma(5.87, 3.11),
        Marginal.two_sided_exponential(-0.089, 0.185, -2.0, 0.5),
        Marginal.beta(0.213, 0.143, 0.02, 1.0),
    ]


def _with_ground_motion(head: list, head_names: tuple) -> InputModel:
    k = len(head)
    R = np.eye(k + 6)
    R[k:, k:] = GM_CORRELATION
    return InputModel(tuple(head + ground_motion_marginals()), R, head_names + GM_NAMES)


def quarter_car_input_model() -> InputModel:
    marginals = [
        Marginal.gaussian(2000.0, 200.0),
        Marginal.gaussian(2000.0, 200.0),
        Marginal.gaussian(20.0, 2.0),
        Marginal.gaussian(40.0, 4.0),
        Marginal.gaussian(600.0, 60.0),
        Marginal.uniform(0.09, 0.11),
        Marginal.uniform(1.8 * math.pi, 2.2 * math.pi),
    ]
    return InputModel(tuple(marginals), None, ("k_s", "k_u", "m_s", "m_u", "c", "A", "omega"))


def duffing_input_model() -> InputModel:
    return _with_ground_motion([Marginal.uniform(90.0, 110.0)], ("epsilon",))


def boucwen_input_model() -> InputModel:
    return _with_ground_motion(
        [Marginal.uniform(5.373, 6.567), Marginal.uniform(45.0, 55.0)], ("omega", "alpha")
    )


def default_input_model(system: str) -> InputModel:
    _check_system(system)
    return {
        "quarter_car": quarter_car_input_model,
        "duffing": duffing_input_model,
        "boucwen": boucwen_input_model,
    }[system]()


def _check_system(system: str):
    if system not in SYSTEMS:
        raise ValueError(f"unknown system {system!r}; expected one of {SYSTEMS}")


def design_seed(seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(0,))


def run_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(1, index))


def ground_motion_from_xi(gm_xi) -> GroundMotionParams:
    return GroundMotionParams.from_hz(*[float(v) for v in gm_xi])


def excitation_for(system: str, dt=None, duration=DEFAULT_DURATION):
    """Callable ``(xi, index, seed) -> x`` producing the excitation of a run."""
    _check_system(system)
    dt = DEFAULT_DT[system] if dt is None else dt
    t = np.arange(int(round(duration / dt)) + 1) * dt
    if system == "quarter_car":
        return lambda xi, index, seed: xi[5] * np.sin(xi[6] * t)
    head = 1 if system == "duffing" else 2

    def ground_motion(xi, index, seed):
        return synthesize_ground_motion(ground_motion_from_xi(xi[head:]), dt, duration, run_seed(seed, index))

    return ground_motion


def simulate_run(system: str, xi, index: int, seed: int, dt=None, duration=DEFAULT_DURATION, rtol=1e-3) -> Experiment:
    """Solve one benchmark run; raises on infeasible parameters or solver failure."""
    _check_system(system)
    dt = DEFAULT_DT[system] if dt is None else dt
    xi = np.asarray(xi, dtype=float)
    x = excitation_for(system, dt, duration)(xi, index, seed)
    if system == "quarter_car":
        traj = integrate_rk45(QUARTER_CAR, xi, np.zeros(4), dt, duration, rtol=rtol)
        return Experiment(xi, x, traj.states[:, 0], dt)
    if system == "duffing":
        traj = integrate_rk45(DUFFING, duffing_params(xi[0]), np.zeros(2), dt, duration, x, rtol=rtol)
        return Experiment(xi, x, traj.states[:, 0], dt, {"v": traj.states[:, 1]})
    traj = integrate_rk45(BOUCWEN, boucwen_params(xi[0], xi[1]), np.zeros(3), dt, duration, x, rtol=rtol)
    return Experiment(xi, x, traj.states[:, 1], dt, {"displacement": traj.states[:, 0]})


@dataclass
class RunRecord:
    index: int
    status: str = "ok"
    message: str = ""
    experiment: Experiment | None = None


@dataclass
class Campaign:
    system: str
    design: np.ndarray
    records: list
    settings: dict = field(default_factory=dict)
    input_model: InputModel | None = None

    @property
    def experiments(self) -> list:
        return [r.experiment for r in self.records if r.status == "ok"]

    @property
    def ok_indices(self) -> list:
        return [r.index for r in self.records if r.status == "ok"]

    @property
    def n_failed(self) -> int:
        return sum(r.status != "ok" for r in self.records)


def _run_one(args) -> RunRecord:
    system, xi, index, seed, dt, duration, rtol = args
    try:
        exp = simulate_run(system, xi, index, seed, dt, duration, rtol)
    except (StiffnessError, ParameterInfeasibleError, FilterValidityError) as exc:
        return RunRecord(index, "failed", f"{type(exc).__name__}: {exc}")
    if not np.all(np.isfinite(exp.y)):
        return RunRecord(index, "failed", "non-finite response")
    return RunRecord(index, "ok", "", exp)


def run_campaign(
    system: str,
    input_model: InputModel | None = None,
    n: int = 100,
    dt: float | None = None,
    duration: float = DEFAULT_DURATION,
    seed: int = 0,
    rtol: float = 1e-3,
    design=None,
    workers: int = 1,
) -> Campaign:
    """LHS design, excitation synthesis and RK45 solves for ``n`` runs.

    A run that fails (infeasible ground-motion parameters, step underflow) is
    recorded with its message and the campaign continues.
    """
    _check_system(system)
    if n < 1:
        raise ValueError("campaign size must be at least 1")
    im = default_input_model(system) if input_model is None else input_model
    dt = DEFAULT_DT[system] if dt is None else float(dt)
    X = sample_lhs(im, n, design_seed(seed)) if design is None else np.atleast_2d(np.asarray(design, float))
    jobs = [(system, X[i], i, seed, dt, duration, rtol) for i in range(X.shape[0])]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            records = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        records = [_run_one(j) for j in jobs]
    settings = {"system": system, "n": int(X.shape[0]), "dt": dt, "duration": duration, "seed": seed, "rtol": rtol}
    return Campaign(system, X, records, settings, im)


def write_campaign(campaign: Campaign, directory) -> Path:
    """One CSV per successful run plus ``manifest.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    runs = []
    for r in campaign.records:
        entry = {"index": r.index, "status": r.status, "message": r.message, "xi": campaign.design[r.index].tolist()}
        if r.experiment is not None:
            name = f"run_{r.index:05d}.csv"
            write_experiment(r.experiment, d / name)
            entry["file"] = name
            entry["sha256"] = hashlib.sha256((d / name).read_bytes()).hexdigest()
        runs.append(entry)
    manifest = {
        "settings": campaign.settings,
        "input_model": campaign.input_model.to_dict() if campaign.input_model else None,
        "seed_rule": "design: SeedSequence(seed, spawn_key=(0,)); run i: SeedSequence(seed, spawn_key=(1, i))",
        "n_failed": campaign.n_failed,
        "runs": runs,
    }
    (d / MANIFEST).write_text(json.dumps(manifest, indent=2))
    return d / MANIFEST


def read_campaign(directory) -> Campaign:
    d = Path(directory)
    path = d / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"no {MANIFEST} in {d}")
    m = json.loads(path.read_text())
    s = m["settings"]
    records = []
    for r in m["runs"]:
        exp = read_experiment(d / r["file"], xi=r["xi"], dt=s["dt"]) if r["status"] == "ok" else None
        records.append(RunRecord(r["index"], r["status"], r["message"], exp))
    design = np.array([r["xi"] for r in m["runs"]], dtype=float)
    im = InputModel.from_dict(m["input_model"]) if m.get("input_model") else None
    return Campaign(s["system"], design, records, s, im)
