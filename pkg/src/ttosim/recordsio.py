"""The records file format shared by simulation runs and oracle exports:
a CSV with a fixed header and 17-significant-digit floats."""

from __future__ import annotations

import numpy as np

from .observables import MeasurementRecord


def records_header(n_sites: int) -> list[str]:
    cols = ["t"]
    cols += [f"Z_{j}" for j in range(1, n_sites + 1)]
    cols += [f"J_{j}" for j in range(1, n_sites)]
    cols += ["S_L", "S_R", "S", "I_LR", "N_L", "trace", "max_chi", "K",
             "cum_trunc"]
    return cols


def record_row(rec: MeasurementRecord) -> list:
    vals = [rec.t, *rec.z, *rec.current, rec.s_left, rec.s_right, rec.s_total,
            rec.mutual_information, rec.log_negativity, rec.trace]
    return vals + [rec.max_chi, rec.kraus_dim, rec.cumulative_truncation]


def format_row(values) -> str:
    out = []
    for v in values:
        if isinstance(v, (int, np.integer)):
            out.append(str(int(v)))
        else:
            out.append(f"{float(v):.17g}")
    return ",".join(out)


def write_records(path, records: list[MeasurementRecord], n_sites: int) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(records_header(n_sites)) + "\n")
        for rec in records:
            fh.write(format_row(record_row(rec)) + "\n")


def read_records(path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size and data.shape[1] != len(header):
        raise ValueError(f"records file {path} does not match its header")
    return header, data
