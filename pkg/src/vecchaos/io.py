"""JSON storage for measures, kernels and limit experiments.

A measure file lists every cell, both signs included, so a file whose
negative cells disagree with the positive ones loads fine and is caught by
:func:`vecchaos.spectral.validate` rather than silently repaired.
"""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from .chaos import SimpleKernel
from .errors import VecChaosError
from .grid import RegularSystem
from .limits import LimitExperiment
from .spectral import MatrixSpectralMeasure


def _pairs(a: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in a]


def measure_to_dict(G: MatrixSpectralMeasure) -> dict:
    k = G.system.signed_index
    return {
        "dim_field": G.dim_field,
        "grid": G.system.to_dict(),
        "cells": [{"k": int(k[p]), "mass": _pairs(G.masses[p])} for p in range(G.system.n_cells)],
    }


def measure_from_dict(data: dict) -> MatrixSpectralMeasure:
    try:
        d = int(data["dim_field"])
        system = RegularSystem.from_dict(data["grid"])
        cells = data["cells"]
    except (KeyError, TypeError, ValueError) as exc:
        raise VecChaosError(f"malformed measure record: {exc}") from exc
    masses = np.full((system.n_cells, d, d), np.nan, dtype=complex)
    for cell in cells:
        p = system.position(int(cell["k"]))
        m = np.asarray(cell["mass"], dtype=float)
        if m.shape != (d, d, 2):
            raise VecChaosError(f"cell k={cell['k']} needs a {d}x{d} matrix of (re, im) pairs")
        # set parts separately: re + 1j*im would turn an imaginary -0.0 into 0.0
        masses[p].real = m[..., 0]
        masses[p].imag = m[..., 1]
    missing = np.flatnonzero(np.isnan(masses.real).any(axis=(1, 2)))
    if missing.size:
        k = int(system.signed_index[missing[0]])
        raise VecChaosError(f"measure file has no mass for cell k={k}")
    return MatrixSpectralMeasure.from_full(system, masses)


def kernel_to_dict(f: SimpleKernel) -> dict:
    return {
        "n": f.order,
        "colours": list(f.colours),
        "grid": f.system.to_dict(),
        "nonzero": [[list(t), v.real, v.imag] for t, v in f.nonzero_entries()],
    }


def kernel_from_dict(data: dict, system: RegularSystem | None = None) -> SimpleKernel:
    if system is None:
        system = RegularSystem.from_dict(data["grid"])
    elif "grid" in data and RegularSystem.from_dict(data["grid"]) != system:
        raise VecChaosError("kernel file and measure file use different grids")
    n = int(data["n"])
    colours = tuple(int(c) for c in data["colours"])
    if len(colours) != n:
        raise VecChaosError(f"kernel of order {n} lists {len(colours)} colours")
    vals = np.zeros((system.n_cells,) * n, dtype=complex)
    for t, re, im in data["nonzero"]:
        if len(t) != n:
            raise VecChaosError(f"index tuple {t} does not have {n} entries")
        vals[tuple(system.position(int(k)) for k in t)] = complex(re, im)
    return SimpleKernel(system, colours, vals)


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise VecChaosError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise VecChaosError(f"{path} is not valid JSON: {exc.msg} at line {exc.lineno}") from exc


def dumps(obj) -> str:
    """Canonical JSON text: sorted keys, fixed float repr, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def load_measure(path) -> MatrixSpectralMeasure:
    return measure_from_dict(read_json(path))


def save_measure(path, G: MatrixSpectralMeasure) -> None:
    write_json(path, measure_to_dict(G))


def load_kernel(path, system: RegularSystem | None = None) -> SimpleKernel:
    return kernel_from_dict(read_json(path), system)


def save_kernel(path, f: SimpleKernel) -> None:
    write_json(path, kernel_to_dict(f))


def load_experiment(path) -> LimitExperiment:
    data = read_json(path)
    try:
        return LimitExperiment.from_dict(data)
    except (KeyError, TypeError) as exc:
        raise VecChaosError(f"malformed experiment config: {exc}") from exc


def data_path(name: str) -> Path:
    """Path of a file shipped in the package's ``data`` directory."""
    return Path(str(resources.files("vecchaos").joinpath("data", name)))
