"""Empirical statistics: local-statistic quadratic forms and spectral growth curves."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, fields

import numpy as np

from .model import ObservationModel
from .recovery import build_g
from .sampler import sample_null, sample_planted
from .spectral import build_centered_operator, top_eigenpair
from .stability import build_L, spectral_radius


@dataclass
class StatRecord:
    model: str
    n: int
    s: int
    seed: str
    quantity: str
    value: float
    reference: float
    ratio: float

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]


def local_statistic(instance, colors, model: ObservationModel, s: int) -> float:
    """``<g, A^(s) g>_H / ||g||_H^2`` for the one-hot color vector ``g``."""
    if s < 1:
        raise ValueError("s must be at least 1")
    op = build_centered_operator(model, instance)
    g = build_g(instance, colors, model)
    if op.is_zero:
        return 0.0
    return op.hip.inner(g, op.apply(g, s)) / op.hip.inner(g, g)


def local_statistic_curve(instance, colors, model: ObservationModel, s_values) -> dict:
    """``{s: local_statistic}`` for several ``s`` from a single pass of walk powers."""
    s_values = sorted(set(int(s) for s in s_values))
    op = build_centered_operator(model, instance)
    g = build_g(instance, colors, model)
    if op.is_zero:
        return {s: 0.0 for s in s_values}
    ys = op.powers(g, s_values[-1])
    gg = op.hip.inner(g, g)
    return {s: op.hip.inner(g, ys[s - 1].reshape(-1)) / gg for s in s_values}


def spectral_growth_curve(model: ObservationModel, n: int, s_max: int, trials: int, rng=0,
                          planted: bool = False, s_min: int = 1, **eig_kw) -> list:
    """One record per (trial, s) holding ``|lambda|_max(A^(s))^(1/s)``.

    Trial ``k`` uses the ``k``-th child of the root seed ``rng`` (an integer),
    recorded as ``"<root>/<k>"``; the reference is ``sqrt(lambda_L)``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    lam = spectral_radius(build_L(model))
    ref = float(np.sqrt(lam))
    kind = "planted" if planted else "null"
    out = []
    for k, child in enumerate(np.random.SeedSequence(rng).spawn(trials)):
        gen = np.random.default_rng(child)
        inst = sample_planted(model, n, gen)[0] if planted else sample_null(model, n, gen)
        op = build_centered_operator(model, inst)
        for s in range(s_min, s_max + 1):
            res = top_eigenpair(op, s, rng=gen, **eig_kw)
            rate = abs(res.value) ** (1.0 / s)
            out.append(StatRecord(model.name, n, s, f"{rng}/{k}", f"growth_{kind}", rate, ref,
                                  rate / ref if ref > 0 else float("nan")))
    return out


def median_by_s(records) -> dict:
    by = {}
    for r in records:
        by.setdefault(r.s, []).append(r.value)
    return {s: float(np.median(v)) for s, v in sorted(by.items())}


def records_to_csv(records, header_comment: str | None = None) -> str:
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    w = csv.DictWriter(buf, fieldnames=StatRecord.columns(), lineterminator="\n")
    w.writeheader()
    for r in records:
        row = asdict(r)
        row["value"] = repr(float(row["value"]))
        row["reference"] = repr(float(row["reference"]))
        row["ratio"] = repr(float(row["ratio"]))
        w.writerow(row)
    return buf.getvalue()
