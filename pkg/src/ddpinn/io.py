"""Checkpoints (JSON) and CSV reports.

Floats are written with ``repr``, the shortest string that parses back to
the same 64-bit value, so checkpoints and CSVs round-trip bitwise.
"""
from __future__ import annotations

import csv
import json
import os
import platform
from pathlib import Path

import numpy as np

from . import ansatz
from .diffcore import MlpParameters
from .models import DdPinnModel, PincModel
from .sample import SamplingBox

FORMAT_VERSION = 1


def model_to_dict(model) -> dict:
    net = model.net
    d = {
        "arch": model.arch,
        "f": model.f,
        "box": model.box.to_dict(),
        "layer_sizes": list(net.layer_sizes),
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }
    if model.arch == "ddpinn":
        d["ansatz"] = {"n_g": model.n_g, "damped": model.damped, "order": model.order,
                       "base_function": model.phi.name}
    return d


def model_from_dict(d: dict):
    net = MlpParameters(list(d["layer_sizes"]),
                        [np.array(w, dtype=float) for w in d["weights"]],
                        [np.array(b, dtype=float) for b in d["biases"]])
    box = SamplingBox.from_dict(d["box"])
    if d["arch"] == "pinc":
        return PincModel(net, box, float(d["f"]))
    if d["arch"] != "ddpinn":
        raise ValueError(f"unknown architecture {d['arch']!r} in checkpoint")
    a = d["ansatz"]
    return DdPinnModel(net, box, float(d["f"]), n_g=a["n_g"], damped=a["damped"], order=a["order"],
                       phi=ansatz.base_function(a["base_function"]))


def save_checkpoint(path, model, run_config: dict | None = None, summary: dict | None = None):
    doc = {"format_version": FORMAT_VERSION, "config": run_config or {},
           "model": model_to_dict(model), "summary": summary or {}}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_checkpoint(path):
    """Return (model, document)."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {doc.get('format_version')!r}")
    return model_from_dict(doc["model"]), doc


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            values = [row[k] for k in header] if isinstance(row, dict) else row
            w.writerow([_fmt(v) for v in values])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = [[float(v) if v != "" else np.nan for v in row] for row in r]
    return header, np.array(data, dtype=float).reshape(-1, len(header))


def write_trajectory(path, traj, state_names, input_names, pred=None):
    """Columns t, states, [predicted states], inputs."""
    header = ["t", *state_names]
    cols = [traj.times[:, None], traj.states]
    if pred is not None:
        header += [f"{n}_hat" for n in state_names]
        cols.append(pred)
    header += list(input_names)
    cols.append(traj.inputs)
    write_csv(path, header, np.hstack(cols).tolist())


def manifest(cfg, seed: int, box: SamplingBox, extra: dict | None = None) -> dict:
    import numpy
    from . import __version__
    return {
        "config_sha256": cfg.digest(),
        "preset": cfg.preset,
        "seed": seed,
        "config": cfg.to_dict(),
        "box": box.to_dict(),
        "versions": {"ddpinn": __version__, "numpy": numpy.__version__,
                     "python": platform.python_version()},
        **(extra or {}),
    }


def write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def default_out_dir() -> Path:
    return Path(os.environ.get("DDPINN_OUT_DIR", "runs"))
