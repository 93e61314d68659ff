"""Result files: ``rounds.csv``, ``summary.json`` and ``config_echo.yaml``.

rounds.csv columns, in order::

    t, scheme, latency_s, n_participants, global_loss, bound, cum_time_s,
    then for every device n = 0..N-1:
    d{n}_selected, d{n}_channel, d{n}_tau, d{n}_p, d{n}_gain, d{n}_time_s, d{n}_energy_j, d{n}_aou

``global_loss`` is F after the round's aggregation and ``bound`` the bound on
its gap to the optimum. Per-device allocation fields are empty unless the
device uploaded in that round. Floats use the shortest round-trip decimal form.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import yaml

HEAD_COLUMNS = ["t", "scheme", "latency_s", "n_participants", "global_loss", "bound", "cum_time_s"]
DEVICE_FIELDS = ["selected", "channel", "tau", "p", "gain", "time_s", "energy_j", "aou"]


def csv_header(num_devices: int) -> list[str]:
    return HEAD_COLUMNS + [f"d{n}_{f}" for n in range(num_devices) for f in DEVICE_FIELDS]


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def round_rows(summary):
    n = summary.config.system.num_devices
    cum = 0.0
    for rec in summary.records:
        cum += rec.latency
        row = [rec.t, rec.scheme, rec.latency, rec.n_participants, rec.global_loss, rec.bound, cum]
        selected = set(rec.selected)
        for dev in range(n):
            a = rec.allocations.get(dev)
            row.append(dev in selected)
            if a is None:
                row.extend([None] * 6)
            else:
                row.extend([a.channel, a.tau, a.p, a.gain, a.time, a.energy])
            row.append(rec.aou[dev])
        yield [fmt(v) for v in row]


def _json_float(x):
    return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x


def summary_dict(summary) -> dict:
    c = summary.constants
    recs = summary.records
    cum, cum_series = 0.0, []
    for r in recs:
        cum += r.latency
        cum_series.append(cum)
    return {
        "seed": summary.seed,
        "scheme": summary.config.scheme.name,
        "rounds": len(recs),
        "convergence_time_s": summary.cumulative_time,
        "initial_loss": summary.initial_loss,
        "final_loss": summary.final_loss,
        "learning_rate": summary.learning_rate,
        "constants": {
            "L": c.L, "mu": c.mu, "F_star": c.F_star, "rho": _json_float(c.rho),
            "w_star": [float(x) for x in c.w_star],
        },
        "devices": {"beta": list(summary.betas), "distance_m": list(summary.distances)},
        "series": {
            "latency_s": [r.latency for r in recs],
            "cum_time_s": cum_series,
            "global_loss": [r.global_loss for r in recs],
            "n_participants": [r.n_participants for r in recs],
            "replaced": [r.replaced_count for r in recs],
            "bound": [_json_float(r.bound) for r in recs],
        },
        "config": summary.config.echo(),
    }


def emit_outputs(summary, out_dir) -> dict:
    """Write all result files; returns their paths by name."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "rounds": out / "rounds.csv",
            "summary": out / "summary.json",
            "config_echo": out / "config_echo.yaml",
        }
        with open(paths["rounds"], "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(csv_header(summary.config.system.num_devices))
            writer.writerows(round_rows(summary))
        paths["summary"].write_text(json.dumps(summary_dict(summary), indent=2) + "\n")
        paths["config_echo"].write_text(yaml.safe_dump(summary.config.echo(), sort_keys=False))
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc}") from exc
    return paths
