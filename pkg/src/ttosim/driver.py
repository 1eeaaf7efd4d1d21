"""Batch quench driver: config parsing, the time loop, measurement
schedule, records/manifest/checkpoint output, parameter sweeps, and the
exact-oracle crosscheck harness.

Output layout per run (all under the run's output directory):

* ``records.csv``   - one header line, then one row per measurement:
  ``t, Z_1..Z_n, J_1..J_{n-1}, S_L, S_R, S, I_LR, N_L, trace, max_chi, K,
  cum_trunc`` with 17 significant digits.
* ``manifest.json`` - config echo, versions, wall time, peak dimensions,
  cumulative truncation, spin-current arrival time; written once before
  the first step and finalized after the last.
* ``checkpoint_*.ttoc`` - driver checkpoints (tree state + step counter +
  RNG state); written at closed Trotter steps only.
"""

from __future__ import annotations

import configparser
import json
import struct
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .channels import LindbladSpec
from .evolution import HamiltonianSpec, TrotterStepper
from .models import XXZParams, boundary_drive, initial_state, xxz_hamiltonian
from .observables import MeasurementRecord, entanglement_of_formation, measure
from .oracle import build_liouvillian, dense_observables, exact_trajectory
from .recordsio import (format_row, read_records, record_row, records_header,
                        write_records)
from .tree import (TTOState, from_product_state, pad_to_caps, state_from_bytes,
                   state_to_bytes)

_DRV_MAGIC = b"TTODRVR1"
_ALL_OBSERVABLES = ("z", "current", "entropies", "negativity", "eof")
_DEFAULT_MEASURE = ("z", "current", "entropies", "negativity")
_SWEEP_AXES = {"gamma": "rate", "delta": "anisotropy", "sites": "n_sites",
               "chi_max": "chi_max", "kraus_max": "kraus_max", "dt": "dt"}
# RunConfig fields a resume may override; everything else is physical.
_RESUME_OVERRIDES = {"t_max", "measure_every", "measure_set", "output_dir",
                     "checkpoint_every"}


@dataclass
class RunConfig:
    n_sites: int
    chi_max: int
    kraus_max: int
    coupling: float = 1.0
    anisotropy: float = 0.5
    rate: float = 1.0
    drive: float = 1.0
    initial: str = "Z-"
    dt: float = 0.025
    t_max: float = 10.0
    cutoff: float = 0.0
    merge_unitaries: bool = True
    measure_every: int = 4
    measure_set: tuple[str, ...] = _DEFAULT_MEASURE
    seed: int = 0
    oracle_crosscheck: bool = False
    output_dir: str = "run"
    checkpoint_every: int = 0     # extra checkpoints every N steps (0 = final only)

    def validate(self) -> None:
        if self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.t_max < 0:
            raise ValueError(f"t_max must be >= 0, got {self.t_max}")
        if self.chi_max < 1 or self.kraus_max < 1:
            raise ValueError("caps must be >= 1")
        if self.measure_every < 1:
            raise ValueError("measure_every must be >= 1")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")
        unknown = set(self.measure_set) - set(_ALL_OBSERVABLES)
        if unknown:
            raise ValueError(f"unknown observables {sorted(unknown)}")
        if self.oracle_crosscheck and self.n_sites > 6:
            raise ValueError("oracle_crosscheck needs 6 sites or fewer")
        XXZParams(self.n_sites, self.coupling, self.anisotropy,
                  self.rate, self.drive)


_INI_SCHEMA = {
    "model": {"sites": int, "coupling": float, "anisotropy": float,
              "rate": float, "drive": float, "initial_state": str},
    "evolution": {"dt": float, "t_max": float, "merge_unitaries": bool},
    "caps": {"chi_max": int, "kraus_max": int, "cutoff": float},
    "measure": {"every": int, "set": str, "seed": int,
                "oracle_crosscheck": bool},
    "output": {"directory": str, "checkpoint_every": int},
}
_INI_FIELD = {("model", "sites"): "n_sites",
              ("model", "initial_state"): "initial",
              ("measure", "every"): "measure_every",
              ("measure", "set"): "measure_set",
              ("output", "directory"): "output_dir"}


def load_config(path) -> RunConfig:
    """Parse a key = value config file with sections; unknown keys error."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    values: dict = {}
    for section in parser.sections():
        if section not in _INI_SCHEMA:
            raise ValueError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _INI_SCHEMA[section]:
                raise ValueError(f"unknown config key {key!r} in [{section}]")
            typ = _INI_SCHEMA[section][key]
            if typ is bool:
                val = parser.getboolean(section, key)
            elif typ is int:
                val = parser.getint(section, key)
            elif typ is float:
                val = parser.getfloat(section, key)
            else:
                val = raw.strip()
            field_name = _INI_FIELD.get((section, key), key)
            values[field_name] = val
    if "measure_set" in values:
        values["measure_set"] = tuple(
            s.strip() for s in values["measure_set"].split(",") if s.strip())
    missing = {"n_sites", "chi_max", "kraus_max"} - set(values)
    if missing:
        raise ValueError(f"config is missing required keys: {sorted(missing)}")
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# Driver checkpoints (tree blob + step counter + RNG state)
# ---------------------------------------------------------------------------


def save_driver_checkpoint(path, state: TTOState, step: int, t: float,
                           cfg: RunConfig, rng: np.random.Generator) -> None:
    meta = {"config": asdict(cfg), "rng_state": rng.bit_generator.state,
            "format_version": 1}
    meta_blob = json.dumps(meta, sort_keys=True).encode()
    tto_blob = state_to_bytes(state)
    with open(path, "wb") as fh:
        fh.write(_DRV_MAGIC)
        fh.write(struct.pack("<IQd", 1, step, t))
        fh.write(struct.pack("<I", len(meta_blob)))
        fh.write(meta_blob)
        fh.write(tto_blob)


def load_driver_checkpoint(path) -> tuple[TTOState, int, float, RunConfig, dict]:
    buf = Path(path).read_bytes()
    if buf[:8] != _DRV_MAGIC:
        raise ValueError(f"{path} is not a driver checkpoint")
    version, step, t = struct.unpack_from("<IQd", buf, 8)
    if version != 1:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 8 + struct.calcsize("<IQd")
    (meta_len,) = struct.unpack_from("<I", buf, off)
    off += 4
    meta = json.loads(buf[off:off + meta_len].decode())
    state = state_from_bytes(buf[off + meta_len:])
    cfg_dict = dict(meta["config"])
    cfg_dict["measure_set"] = tuple(cfg_dict["measure_set"])
    cfg = RunConfig(**cfg_dict)
    return state, step, t, cfg, meta["rng_state"]


# ---------------------------------------------------------------------------
# Quench runs
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    records: list[MeasurementRecord]
    manifest: dict
    output_dir: Path
    records_path: Path
    checkpoint_path: Path | None = None


def _build_model(cfg: RunConfig):
    p = XXZParams(cfg.n_sites, cfg.coupling, cfg.anisotropy, cfg.rate,
                  cfg.drive)
    ham = xxz_hamiltonian(p)
    lind = boundary_drive(p)
    vecs = initial_state(cfg.initial, cfg.n_sites)
    return ham, lind, vecs


def _arrival_time(times: np.ndarray, center_current: np.ndarray) -> float | None:
    """First time the center-bond current exceeds 1% of its overall maximum."""
    peak = np.max(np.abs(center_current)) if center_current.size else 0.0
    if peak <= 0:
        return None
    idx = np.nonzero(np.abs(center_current) > 0.01 * peak)[0]
    return float(times[idx[0]]) if idx.size else None


def _measure_full(state, t, cfg, rng) -> tuple[MeasurementRecord, float | None]:
    want = set(cfg.measure_set) - {"eof"}
    rec = measure(state, t, observables=want)
    rec.validate(tol=1e-9)
    eof = None
    if "eof" in cfg.measure_set:
        if state.kraus_dim <= 64:
            eof, _ = entanglement_of_formation(
                state, seed=int(rng.integers(2**31)))
        else:
            eof = float("nan")
    return rec, eof


class _RunWriter:
    def __init__(self, out_dir: Path, cfg: RunConfig, resume_from: float | None = None):
        self.out_dir = out_dir
        out_dir.mkdir(parents=True, exist_ok=True)
        self.records_path = out_dir / "records.csv"
        self.manifest_path = out_dir / "manifest.json"
        self.cfg = cfg
        self.t0 = time.time()
        self.manifest = {
            "package": "ttosim",
            "version": __version__,
            "config": asdict(cfg),
            "status": "running",
            "resumed_from_t": resume_from,
            "started_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        }
        self._write_manifest()
        self.rec_fh = open(self.records_path, "a")
        if self.records_path.stat().st_size == 0:
            self.rec_fh.write(",".join(records_header(cfg.n_sites)) + "\n")
            self.rec_fh.flush()
        self.eof_series: list = []

    def _write_manifest(self) -> None:
        self.manifest_path.write_text(json.dumps(self.manifest, indent=2,
                                                 sort_keys=True))

    def write(self, rec: MeasurementRecord, eof=None) -> None:
        self.rec_fh.write(format_row(record_row(rec)) + "\n")
        self.rec_fh.flush()
        if eof is not None:
            self.eof_series.append([rec.t, eof])

    def finalize(self, records, diag_summary: dict, status="done") -> dict:
        times = np.array([r.t for r in records])
        center = np.array([r.current[(self.cfg.n_sites - 1) // 2]
                           if r.current.size else np.nan for r in records])
        self.manifest.update(diag_summary)
        self.manifest.update({
            "status": status,
            "wall_time_s": time.time() - self.t0,
            "finished_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "n_records": len(records),
            "current_arrival_time": _arrival_time(times, center),
        })
        if self.eof_series:
            self.manifest["eof_series"] = self.eof_series
        self._write_manifest()
        self.rec_fh.close()
        return self.manifest


def run_quench(cfg: RunConfig, output_dir=None) -> RunResult:
    """Quench from the configured product state: connect the baths at t = 0
    and Trotter-step to ``t_max``, measuring every ``measure_every`` steps."""
    cfg.validate()
    out_dir = Path(output_dir if output_dir is not None else cfg.output_dir)
    ham, lind, vecs = _build_model(cfg)
    state = from_product_state(vecs)
    pad_to_caps(state, cfg.chi_max, cfg.kraus_max)
    rng = np.random.default_rng(cfg.seed)
    writer = _RunWriter(out_dir, cfg)
    return _run_loop(cfg, state, ham, lind, rng, writer, start_step=0)


def _run_loop(cfg: RunConfig, state: TTOState, ham: HamiltonianSpec,
              lind: LindbladSpec, rng, writer: _RunWriter,
              start_step: int) -> RunResult:
    n_steps = int(round(cfg.t_max / cfg.dt))
    stepper = TrotterStepper(ham, lind, cfg.dt, cfg.chi_max, cfg.kraus_max,
                             cfg.cutoff, merge_unitaries=cfg.merge_unitaries)
    records: list[MeasurementRecord] = []
    peak_chi = state.max_link_dim
    peak_k = state.kraus_dim
    max_drift = 0.0
    total_trunc = 0.0
    ckpt_path = None

    oracle = None
    oracle_stream = None
    oracle_dev = []
    if cfg.oracle_crosscheck:
        oracle = build_liouvillian(ham, lind)

    def crosscheck(rec: MeasurementRecord, rho_ref: np.ndarray) -> None:
        ref = dense_observables(rho_ref, t=rec.t)
        devs = {
            "z": float(np.max(np.abs(rec.z - ref.z))),
            "current": float(np.max(np.abs(rec.current - ref.current)))
            if rec.current.size else 0.0,
            "S_L": abs(rec.s_left - ref.s_left),
            "S_R": abs(rec.s_right - ref.s_right),
            "S": abs(rec.s_total - ref.s_total),
            "I_LR": abs(rec.mutual_information - ref.mutual_information),
            "N_L": abs(rec.log_negativity - ref.log_negativity),
        }
        oracle_dev.append({"t": rec.t, **devs,
                           "max": max(devs.values())})

    if start_step == 0:
        rec, eof = _measure_full(state, 0.0, cfg, rng)
        records.append(rec)
        writer.write(rec, eof)
        if oracle is not None:
            crosscheck(rec, state.to_dense())

    measure_steps = [s for s in range(start_step + 1, n_steps + 1)
                     if s % cfg.measure_every == 0 or s == n_steps]
    if oracle is not None:
        rho0 = state.to_dense()
        oracle_stream = exact_trajectory(
            oracle, rho0, [s * cfg.dt - start_step * cfg.dt
                           for s in measure_steps])

    try:
        for step in range(start_step + 1, n_steps + 1):
            measuring = step % cfg.measure_every == 0 or step == n_steps
            ckpt_due = (cfg.checkpoint_every > 0
                        and step % cfg.checkpoint_every == 0)
            diag = stepper.step(state, close=measuring or ckpt_due
                                or step == n_steps)
            total_trunc += diag.step_truncation
            peak_chi = max(peak_chi, diag.max_chi)
            peak_k = max(peak_k, diag.kraus_dim)
            max_drift = max(max_drift, abs(diag.trace_drift))
            t = step * cfg.dt
            if measuring:
                rec, eof = _measure_full(state, t, cfg, rng)
                records.append(rec)
                writer.write(rec, eof)
                if oracle is not None:
                    _, rho_ref = next(oracle_stream)
                    crosscheck(rec, rho_ref)
            if ckpt_due or step == n_steps:
                ckpt_path = writer.out_dir / f"checkpoint_{step:08d}.ttoc"
                save_driver_checkpoint(ckpt_path, state, step, t, cfg, rng)
    except Exception as exc:
        writer.finalize(records, {"error": repr(exc)}, status="failed")
        raise

    summary = {
        "peak_chi": int(peak_chi),
        "peak_kraus": int(peak_k),
        "cumulative_truncation": float(state.cumulative_truncation),
        "max_trace_drift": float(max_drift),
        "total_step_truncation": float(total_trunc),
    }
    if n_steps == 0 and start_step == 0:
        ckpt_path = writer.out_dir / "checkpoint_00000000.ttoc"
        save_driver_checkpoint(ckpt_path, state, 0, 0.0, cfg, rng)
    if oracle_dev:
        summary["oracle_crosscheck"] = {
            "max_deviation": max(d["max"] for d in oracle_dev),
            "per_time": oracle_dev,
        }
        (writer.out_dir / "crosscheck.json").write_text(
            json.dumps(summary["oracle_crosscheck"], indent=2))
    manifest = writer.finalize(records, summary)
    return RunResult(records=records, manifest=manifest,
                     output_dir=writer.out_dir,
                     records_path=writer.records_path,
                     checkpoint_path=ckpt_path)


def resume(checkpoint_path, output_dir, t_max: float | None = None,
           measure_every: int | None = None) -> RunResult:
    """Continue a checkpointed trajectory; only the measurement schedule,
    the final time, and the output location may change."""
    state, step, t, cfg, rng_state = load_driver_checkpoint(checkpoint_path)
    overrides = {}
    if t_max is not None:
        overrides["t_max"] = t_max
    if measure_every is not None:
        overrides["measure_every"] = measure_every
    bad = set(overrides) - _RESUME_OVERRIDES
    if bad:
        raise ValueError(f"cannot override physical parameters {sorted(bad)}")
    cfg = replace(cfg, output_dir=str(output_dir), **overrides)
    cfg.validate()
    if int(round(cfg.t_max / cfg.dt)) < step:
        raise ValueError(f"checkpoint is already past t_max={cfg.t_max}")
    rng = np.random.default_rng()
    rng.bit_generator.state = rng_state
    ham, lind, _ = _build_model(cfg)
    writer = _RunWriter(Path(output_dir), cfg, resume_from=t)
    return _run_loop(cfg, state, ham, lind, rng, writer, start_step=step)


# ---------------------------------------------------------------------------
# Sweeps and crosschecks
# ---------------------------------------------------------------------------


def _summary_from_result(res: RunResult) -> dict:
    rec = res.records[-1]
    mid = (rec.z.size - 1) // 2
    return {"t_final": rec.t,
            "N_L": rec.log_negativity,
            "I_LR": rec.mutual_information,
            "J_center": float(rec.current[mid]) if rec.current.size else None}


def _sweep_one(task) -> dict:
    axis, cast, run_cfg = task
    try:
        res = run_quench(run_cfg)
        return {"axis": axis, "value": cast, "status": "ok",
                **_summary_from_result(res)}
    except Exception as exc:  # noqa: BLE001 - sweep must survive failures
        return {"axis": axis, "value": cast, "status": "failed",
                "error": repr(exc)}


def sweep(cfg: RunConfig, axis: str, values, output_dir, workers: int = 1) -> dict:
    """One independent run per axis value plus a summary table.

    Runs fan out over ``workers`` processes when asked; individual failures
    are recorded and do not stop the sweep.
    """
    if axis not in _SWEEP_AXES:
        raise ValueError(f"sweep axis must be one of {sorted(_SWEEP_AXES)}")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    fieldname = _SWEEP_AXES[axis]
    tasks = []
    for value in values:
        cast = int(value) if fieldname in ("n_sites", "chi_max", "kraus_max") \
            else float(value)
        sub = out / f"{axis}={value}"
        run_cfg = replace(cfg, **{fieldname: cast}, output_dir=str(sub))
        tasks.append((axis, cast, run_cfg))
    if workers > 1:
        import concurrent.futures
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_one, tasks))
    else:
        rows = [_sweep_one(t) for t in tasks]
    summary_path = out / "sweep_summary.json"
    summary = {"axis": axis, "runs": rows}
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True))
    _write_sweep_csv(out / "sweep_summary.csv", rows)
    return summary


def _write_sweep_csv(path, rows) -> None:
    with open(path, "w") as fh:
        fh.write("value,status,t_final,N_L,I_LR,J_center\n")
        for r in rows:
            if r["status"] == "ok":
                fh.write(format_row([r["value"]]) + f",ok,"
                         + format_row([r["t_final"], r["N_L"], r["I_LR"],
                                       r["J_center"]]) + "\n")
            else:
                fh.write(format_row([r["value"]]) + ",failed,,,,\n")


def crosscheck(cfg: RunConfig, output_dir=None) -> RunResult:
    """Run with exact-oracle co-propagation enabled and report deviations."""
    cfg = replace(cfg, oracle_crosscheck=True)
    return run_quench(cfg, output_dir=output_dir)
