"""Simulator-replay evaluation of generated data.

Generated input features are fed back through the delay oracle and the
oracle's outputs become the reference for a per-output-feature MAPE; marginal
distribution proximity to fresh real data is quantified with two-sample KS
statistics. Nonphysical or out-of-range generated rows are reported, never
silently dropped.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset
from .diffusion import DiffusionModel, sample
from .exceptions import (
    EmptySampleError,
    IoFailure,
    LengthMismatchError,
    SchemaMismatchError,
    UntrainedModelError,
    ZeroReferenceError,
)
from .simulator import GateTopology, ProcessNominals, PvtSample, generate_dataset, replay_delays

HISTOGRAM_BINS = 30


def mape(reference, generated) -> float:
    """Mean absolute percentage error, 100 * mean(|gen - ref| / |ref|)."""
    ref = np.asarray(reference, dtype=np.float64)
    gen = np.asarray(generated, dtype=np.float64)
    if ref.shape != gen.shape or ref.size == 0:
        raise LengthMismatchError(f"need equal nonzero lengths, got {ref.shape} vs {gen.shape}")
    if np.any(ref == 0.0):
        raise ZeroReferenceError("reference contains zero; MAPE undefined")
    return float(100.0 * np.mean(np.abs(gen - ref) / np.abs(ref)))


def ks_statistic(sample_a, sample_b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic: sup |ECDF_a - ECDF_b|."""
    a = np.sort(np.asarray(sample_a, dtype=np.float64))
    b = np.sort(np.asarray(sample_b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise EmptySampleError("both samples must be nonempty")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


@dataclass
class EvalReport:
    """Replay scores for one generated dataset."""

    circuit: str
    n_rows: int
    mape_pct: dict[str, float]               # per output feature
    ks: dict[str, float]                     # per feature vs the real reference
    out_of_range_rows: int                   # inputs outside sampler bounds
    nonphysical_rows: int                    # any generated delay <= 0
    oracle_refused_rows: int                 # non-conducting device on replay
    config: dict = field(default_factory=dict)

    def to_json(self, path) -> None:
        try:
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(asdict(self), fh, sort_keys=True, indent=2)
        except OSError as exc:
            raise IoFailure(f"cannot write report {path}: {exc}") from exc


def evaluate_dataset(generated: Dataset, topology: GateTopology,
                     reference: Dataset | None = None,
                     nominals: ProcessNominals | None = None,
                     config_echo: dict | None = None) -> EvalReport:
    """Score a dataset by oracle replay; optionally add per-feature KS
    against a reference dataset of the same schema.

    Rows whose inputs fall outside the sampler's PVT bounds are still scored
    (and counted); rows the oracle refuses are excluded from the MAPE means
    and counted separately.
    """
    schema = generated.schema
    if topology.circuit != schema.circuit:
        raise SchemaMismatchError(
            f"topology is for {topology.circuit.value}, dataset is {schema.circuit.value}"
        )
    if reference is not None and reference.schema.circuit != schema.circuit:
        raise SchemaMismatchError("reference dataset schema does not match")

    inputs = generated.inputs()
    outputs = generated.outputs()
    oracle_out, refused = replay_delays(inputs, topology, nominals)
    scored = np.setdiff1d(np.arange(generated.n_rows), np.array(refused, dtype=int))

    mape_pct = {}
    for j, name in enumerate(schema.output_names):
        mape_pct[name] = mape(oracle_out[scored, j], outputs[scored, j]) if scored.size else float("nan")

    out_of_range = sum(
        0 if PvtSample.from_row(inputs[i]).in_range() else 1 for i in range(generated.n_rows)
    )
    nonphysical = int(np.sum(np.any(outputs <= 0.0, axis=1)))

    ks = {}
    if reference is not None:
        for j, name in enumerate(schema.feature_names):
            ks[name] = ks_statistic(reference.values[:, j], generated.values[:, j])

    return EvalReport(
        circuit=schema.circuit.value,
        n_rows=generated.n_rows,
        mape_pct=mape_pct,
        ks=ks,
        out_of_range_rows=int(out_of_range),
        nonphysical_rows=nonphysical,
        oracle_refused_rows=len(refused),
        config=config_echo or {},
    )


def evaluate(model: DiffusionModel, topology: GateTopology, n: int, seed: int,
             sampler: str = "paper",
             nominals: ProcessNominals | None = None) -> EvalReport:
    """Generate n rows from the model and replay them through the oracle.

    The KS reference is a fresh n-row real dataset drawn with a substream of
    the given seed.
    """
    if not model.trained:
        raise UntrainedModelError("model has not been trained")
    if topology.circuit != model.circuit:
        raise SchemaMismatchError(
            f"topology is for {topology.circuit.value}, model is {model.circuit.value}"
        )
    generated = sample(model, n, seed, sampler=sampler)
    ref_seed = int(np.random.SeedSequence(entropy=seed, spawn_key=(1,)).generate_state(1)[0])
    reference = generate_dataset(model.circuit, n, ref_seed, nominals)
    echo = {
        "sample_seed": seed,
        "reference_seed": ref_seed,
        "sampler": sampler,
        "learning_rate": model.config.learning_rate,
        "epochs_run": model.history.epochs_run,
        "train_seed": model.config.seed,
    }
    return evaluate_dataset(generated, topology, reference, nominals, config_echo=echo)


def export_histograms(real: Dataset, generated: Dataset, bins: int, path) -> None:
    """Aligned per-feature histogram table (CSV) for external plotting.

    Bins span the pooled min/max of each feature; columns are feature,
    bin_left, bin_right, real_count, generated_count.
    """
    if real.schema.feature_names != generated.schema.feature_names:
        raise SchemaMismatchError("datasets must share a schema")
    if bins < 2:
        raise SchemaMismatchError(f"bins must be >= 2, got {bins}")
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("feature,bin_left,bin_right,real_count,generated_count\n")
            for j, name in enumerate(real.schema.feature_names):
                pooled = np.concatenate([real.values[:, j], generated.values[:, j]])
                lo, hi = float(pooled.min()), float(pooled.max())
                if lo == hi:  # degenerate span: one centered bin range
                    lo, hi = lo - 0.5, hi + 0.5
                edges = np.linspace(lo, hi, bins + 1)
                rc, _ = np.histogram(real.values[:, j], bins=edges)
                gc, _ = np.histogram(generated.values[:, j], bins=edges)
                for k in range(bins):
                    fh.write(f"{name},{edges[k]!r},{edges[k + 1]!r},{rc[k]},{gc[k]}\n")
    except OSError as exc:
        raise IoFailure(f"cannot write histograms {path}: {exc}") from exc
