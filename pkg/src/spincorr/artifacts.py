"""Reproducible output files: CSV tables, JSON sidecars, run manifests.

Floats are written as their shortest round-trip decimal (Python repr), and
all row orders are deterministic, so identical configs and seeds produce
bit-identical artifacts.
"""

from __future__ import annotations

import csv
import json
import platform
import time
from pathlib import Path

import numpy as np


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def write_json(path: Path, doc: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def trajectory_rows(states) -> list[tuple]:
    rows = []
    for state in states:
        for ch in state.layout.channels:
            vals = state.values[state.layout.block(ch)]
            for idx, v in enumerate(vals):
                rows.append((state.tau, ch, idx, v))
    return rows


def write_trajectory(out_dir: Path, name: str, states, scenario_params: dict,
                     lattice) -> list[Path]:
    out_dir = Path(out_dir)
    csv_path = write_csv(out_dir / f"{name}.csv",
                         ["tau", "channel", "pair_or_site_index", "value"],
                         trajectory_rows(states))
    layout = states[0].layout
    sidecar = {
        "scenario": layout.scenario,
        "parameters": scenario_params,
        "mode": layout.mode,
        "channels": list(layout.channels),
        "lattice": json.loads(lattice.to_json()),
    }
    json_path = write_json(out_dir / f"{name}.json", sidecar)
    return [csv_path, json_path]


def write_spectrum(out_dir: Path, name: str, eigenvalues) -> Path:
    rows = [(i, ev.real, ev.imag) for i, ev in enumerate(np.asarray(eigenvalues))]
    return write_csv(Path(out_dir) / f"{name}.csv", ["index", "re", "im"], rows)


def write_gap_series(out_dir: Path, name: str, series) -> Path:
    rows = [(e.geometry, e.bc, e.L, e.nsites, e.gap) for e in series.entries]
    return write_csv(Path(out_dir) / f"{name}.csv",
                     ["geometry", "bc", "L", "N", "gap"], rows)


def write_scaling_fit(out_dir: Path, name: str, fits: dict) -> Path:
    doc = {
        model: {
            "model": f.model,
            "z": f.exponent,
            "amplitude": f.amplitude,
            "residual": f.residual,
            "window": list(f.window),
        }
        for model, f in fits.items()
    }
    return write_json(Path(out_dir) / f"{name}.json", doc)


def write_phase_diagram(out_dir: Path, name: str, points) -> Path:
    rows = [(p.gamma_over_kappa, p.T_over_h, p.n_thermal, p.condensate) for p in points]
    return write_csv(Path(out_dir) / f"{name}.csv",
                     ["gamma_over_kappa", "T_over_h", "n_T", "condensate"], rows)


class ManifestWriter:
    """Collects artifact paths and writes the run manifest."""

    def __init__(self, out_dir: Path, config: dict):
        self.out_dir = Path(out_dir)
        self.config = config
        self.artifacts: list[str] = []
        self._t0 = time.monotonic()

    def add(self, *paths):
        for p in paths:
            self.artifacts.append(str(Path(p).relative_to(self.out_dir)))

    def write(self) -> Path:
        import scipy

        from . import __version__

        doc = {
            "config": self.config,
            "artifacts": sorted(self.artifacts),
            "versions": {
                "spincorr": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
            },
            "float_format": "shortest-round-trip-decimal",
            "wall_time_s": time.monotonic() - self._t0,
        }
        return write_json(self.out_dir / "manifest.json", doc)
