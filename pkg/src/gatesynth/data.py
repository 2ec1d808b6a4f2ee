"""Circuit dataset schemas, tabular containers, standardization and CSV I/O.

Twelve digital-cell datasets are supported. Every dataset shares the same
15 input features (supply voltage, temperature, load capacitance, and six
process parameters for each of NMOS/PMOS); the output features are the
rise/fall propagation delays of the observed nodes, giving total feature
counts of 17, 19 or 21 depending on the circuit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    ConstantColumnError,
    HeaderMismatchError,
    IoFailure,
    NonNumericCellError,
    SchemaMismatchError,
    TooFewRowsError,
)


class Circuit(enum.Enum):
    """The twelve digital cells with delay datasets."""

    NOT_GATE = "not"
    NAND2 = "nand2"
    AND2 = "and2"
    NOR2 = "nor2"
    OR2 = "or2"
    XOR2 = "xor2"
    ANDOR3 = "andor3"
    FULL_ADDER = "fulladder"
    MUX2 = "mux21"
    NAND3 = "nand3"
    AND3 = "and3"
    NOR3 = "nor3"

    @classmethod
    def from_name(cls, name: str) -> "Circuit":
        try:
            return cls(name.lower())
        except ValueError:
            valid = ", ".join(c.value for c in cls)
            raise SchemaMismatchError(f"unknown circuit {name!r}; expected one of: {valid}")


# Observed output nodes per circuit: 1 node for the inverter, 2 for two-input
# gates, 3 for the three-input circuits (delay_lh/delay_hl per node).
_NODE_COUNT = {
    Circuit.NOT_GATE: 1,
    Circuit.NAND2: 2,
    Circuit.AND2: 2,
    Circuit.NOR2: 2,
    Circuit.OR2: 2,
    Circuit.XOR2: 2,
    Circuit.ANDOR3: 3,
    Circuit.FULL_ADDER: 3,
    Circuit.MUX2: 3,
    Circuit.NAND3: 3,
    Circuit.AND3: 3,
    Circuit.NOR3: 3,
}

_NODE_LABELS = ("a", "b", "c")


class FeatureRole(enum.Enum):
    INPUT = "input"
    OUTPUT = "output"


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    role: FeatureRole
    unit: str


# The 15 input features, in fixed column order: three globals followed by the
# six process parameters per device (NMOS then PMOS).
_DEVICE_PARAMS = (
    ("length", "m"),
    ("width", "m"),
    ("tox_eff", "m"),
    ("tox_nom", "m"),
    ("xj", "m"),
    ("ndep", "cm^-3"),
)


def _input_features() -> tuple[FeatureSpec, ...]:
    feats = [
        FeatureSpec("vdd", FeatureRole.INPUT, "V"),
        FeatureSpec("temp", FeatureRole.INPUT, "degC"),
        FeatureSpec("cload", FeatureRole.INPUT, "F"),
    ]
    for device in ("nmos", "pmos"):
        for pname, unit in _DEVICE_PARAMS:
            feats.append(FeatureSpec(f"{device}_{pname}", FeatureRole.INPUT, unit))
    return tuple(feats)


@dataclass(frozen=True)
class DatasetSchema:
    """Ordered, role-tagged feature columns for one circuit (inputs first)."""

    circuit: Circuit
    features: tuple[FeatureSpec, ...]

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaMismatchError(f"duplicate feature names in schema for {self.circuit}")

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def input_indices(self) -> tuple[int, ...]:
        return tuple(i for i, f in enumerate(self.features) if f.role is FeatureRole.INPUT)

    @property
    def output_indices(self) -> tuple[int, ...]:
        return tuple(i for i, f in enumerate(self.features) if f.role is FeatureRole.OUTPUT)

    @property
    def input_names(self) -> tuple[str, ...]:
        return tuple(self.features[i].name for i in self.input_indices)

    @property
    def output_names(self) -> tuple[str, ...]:
        return tuple(self.features[i].name for i in self.output_indices)


def schema_for(circuit: Circuit) -> DatasetSchema:
    """Return the fixed schema for one of the twelve circuits.

    Inputs are always the same 15 features; outputs are delay_lh/delay_hl per
    observed node, so totals are 17 (NOT), 19 (two-input) or 21 (three-input).
    """
    feats = list(_input_features())
    for node in _NODE_LABELS[: _NODE_COUNT[circuit]]:
        feats.append(FeatureSpec(f"delay_lh_{node}", FeatureRole.OUTPUT, "s"))
        feats.append(FeatureSpec(f"delay_hl_{node}", FeatureRole.OUTPUT, "s"))
    return DatasetSchema(circuit=circuit, features=tuple(feats))


def _schema_by_header(header: tuple[str, ...]) -> DatasetSchema:
    for circuit in Circuit:
        schema = schema_for(circuit)
        if schema.feature_names == header:
            return schema
    raise HeaderMismatchError(f"CSV header {header} does not match any known circuit schema")


class Dataset:
    """A schema plus a row-major value matrix; immutable after construction."""

    def __init__(self, schema: DatasetSchema, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != schema.n_features:
            raise SchemaMismatchError(
                f"value matrix shape {values.shape} does not match "
                f"{schema.n_features}-feature schema for {schema.circuit.value}"
            )
        if values.size and not np.all(np.isfinite(values)):
            raise SchemaMismatchError("dataset contains non-finite values")
        values = values.copy()
        values.flags.writeable = False
        self.schema = schema
        self.values = values

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def inputs(self) -> np.ndarray:
        return self.values[:, list(self.schema.input_indices)]

    def outputs(self) -> np.ndarray:
        return self.values[:, list(self.schema.output_indices)]

    def column(self, name: str) -> np.ndarray:
        try:
            idx = self.schema.feature_names.index(name)
        except ValueError:
            raise SchemaMismatchError(f"no feature named {name!r} in schema")
        return self.values[:, idx]


@dataclass(frozen=True)
class NormStats:
    """Per-feature mean and population std fitted on a reference dataset."""

    feature_names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray


def fit_normalizer(dataset: Dataset) -> NormStats:
    """Fit per-feature mean and population standard deviation.

    Raises ConstantColumnError for any zero-variance column and
    TooFewRowsError below two rows.
    """
    if dataset.n_rows < 2:
        raise TooFewRowsError(f"need >= 2 rows to fit a normalizer, got {dataset.n_rows}")
    mean = dataset.values.mean(axis=0)
    std = dataset.values.std(axis=0)  # population std (ddof=0)
    for j, s in enumerate(std):
        if s <= 0.0:
            raise ConstantColumnError(dataset.schema.feature_names[j])
    return NormStats(feature_names=dataset.schema.feature_names, mean=mean, std=std)


def _check_stats(dataset: Dataset, stats: NormStats) -> None:
    if stats.feature_names != dataset.schema.feature_names:
        raise SchemaMismatchError("normalizer stats were fitted on a different schema")


def normalize(dataset: Dataset, stats: NormStats) -> Dataset:
    """z = (x - mean) / std, elementwise per feature."""
    _check_stats(dataset, stats)
    return Dataset(dataset.schema, (dataset.values - stats.mean) / stats.std)


def denormalize(dataset: Dataset, stats: NormStats) -> Dataset:
    """Inverse of normalize: x = z * std + mean."""
    _check_stats(dataset, stats)
    return Dataset(dataset.schema, dataset.values * stats.std + stats.mean)


def save_csv(dataset: Dataset, path) -> None:
    """Write the dataset as UTF-8 CSV: one header row, then shortest
    round-trip decimal floats (<= 17 significant digits, lossless)."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(dataset.schema.feature_names) + "\n")
            for row in dataset.values:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_csv(path) -> Dataset:
    """Load a CSV written by save_csv; the header must match a known schema
    exactly (order-sensitive)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise HeaderMismatchError(f"{path}: empty file")
    header = tuple(lines[0].split(","))
    schema = _schema_by_header(header)
    rows = []
    for i, line in enumerate(lines[1:]):
        if not line:
            continue
        cells = line.split(",")
        if len(cells) != schema.n_features:
            raise HeaderMismatchError(
                f"{path}: row {i} has {len(cells)} cells, expected {schema.n_features}"
            )
        parsed = []
        for j, cell in enumerate(cells):
            try:
                parsed.append(float(cell))
            except ValueError:
                raise NonNumericCellError(i, j, cell)
        rows.append(parsed)
    values = np.array(rows, dtype=np.float64) if rows else np.empty((0, schema.n_features))
    return Dataset(schema, values)


def train_test_split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seed-pinned shuffle split into (train, test) datasets."""
    if not 0.0 < test_fraction < 1.0:
        raise SchemaMismatchError(f"test_fraction must be in (0,1), got {test_fraction}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    perm = rng.permutation(dataset.n_rows)
    n_test = max(1, int(round(dataset.n_rows * test_fraction)))
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return (
        Dataset(dataset.schema, dataset.values[train_idx]),
        Dataset(dataset.schema, dataset.values[test_idx]),
    )
