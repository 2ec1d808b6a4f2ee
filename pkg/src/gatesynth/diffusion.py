"""Diffusion machinery: variance schedule, forward noising, denoiser training
and sample generation.

The forward chain is x_t = sqrt(1-beta_t) x_{t-1} + sqrt(beta_t) eps. The
denoiser learns the per-step noise eps from (x_t, t/T), and generation runs
the deterministic inversion x_{t-1} = (x_t - sqrt(beta_t) eps_hat) /
sqrt(1-beta_t). Because the network is trained on per-step noise, that
inversion equals the usual posterior mean, so the standard ancestral sampler
is the same update plus posterior noise; both modes are provided and
selected by flag.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .data import Circuit, Dataset, NormStats, denormalize, fit_normalizer, normalize, schema_for
from .exceptions import (
    InvalidRangeError,
    IoFailure,
    NonFiniteLossError,
    SchemaMismatchError,
    StepOutOfRangeError,
    TooFewRowsError,
    UntrainedModelError,
)

CHECKPOINT_FORMAT = 1

# Symmetric encoder-decoder widths per hidden-layer count.
DEFAULT_WIDTHS = {
    4: (64, 32, 32, 64),
    5: (64, 32, 16, 32, 64),
    6: (64, 32, 16, 16, 32, 64),
}

SAMPLER_MODES = ("paper", "ancestral")


@dataclass(frozen=True)
class NoiseSchedule:
    """beta_t, alpha_t = 1-beta_t and their cumulative product for t = 1..T.

    Arrays are 0-indexed internally; use beta_at/alpha_bar_at for 1-based
    step access.
    """

    beta: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.ndim != 1 or beta.size < 2:
            raise InvalidRangeError("schedule needs at least 2 steps")
        if np.any(beta <= 0.0) or np.any(beta >= 1.0):
            raise InvalidRangeError("every beta_t must lie in (0, 1)")
        if np.any(np.diff(beta) < 0.0):
            raise InvalidRangeError("beta must be nondecreasing")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha", 1.0 - beta)
        object.__setattr__(self, "alpha_bar", np.cumprod(1.0 - beta))

    @property
    def n_steps(self) -> int:
        return self.beta.size

    def beta_at(self, t: int) -> float:
        self._check_step(t)
        return float(self.beta[t - 1])

    def alpha_bar_at(self, t: int) -> float:
        """Cumulative product through step t; t = 0 gives 1 (no noising)."""
        if t == 0:
            return 1.0
        self._check_step(t)
        return float(self.alpha_bar[t - 1])

    def _check_step(self, t: int) -> None:
        if not 1 <= t <= self.n_steps:
            raise StepOutOfRangeError(f"step {t} outside [1, {self.n_steps}]")


def linear_schedule(n_steps: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Variance ramp beta_t = beta_start + (t-1)(beta_end-beta_start)/(T-1)."""
    if n_steps < 2:
        raise InvalidRangeError(f"n_steps must be >= 2, got {n_steps}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise InvalidRangeError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    return NoiseSchedule(np.linspace(beta_start, beta_end, n_steps))


def forward_step(x_prev: np.ndarray, beta_t: float, eps: np.ndarray) -> np.ndarray:
    """One noising step: sqrt(1-beta_t) x_{t-1} + sqrt(beta_t) eps."""
    if not 0.0 < beta_t < 1.0:
        raise InvalidRangeError(f"beta_t must be in (0,1), got {beta_t}")
    return np.sqrt(1.0 - beta_t) * np.asarray(x_prev) + np.sqrt(beta_t) * np.asarray(eps)


def reverse_formula(x_t: np.ndarray, beta_t: float, eps: np.ndarray) -> np.ndarray:
    """Algebraic inverse of forward_step given the step noise:
    (x_t - sqrt(beta_t) eps) / sqrt(1-beta_t)."""
    if not 0.0 < beta_t < 1.0:
        raise InvalidRangeError(f"beta_t must be in (0,1), got {beta_t}")
    return (np.asarray(x_t) - np.sqrt(beta_t) * np.asarray(eps)) / np.sqrt(1.0 - beta_t)


def forward_jump(x0: np.ndarray, t: int, schedule: NoiseSchedule, eps: np.ndarray) -> np.ndarray:
    """Closed-form composition of t forward steps:
    sqrt(abar_t) x0 + sqrt(1-abar_t) eps."""
    abar = schedule.alpha_bar_at(t)  # raises StepOutOfRange for bad t
    if t == 0:
        return np.asarray(x0, dtype=np.float64).copy()
    return np.sqrt(abar) * np.asarray(x0) + np.sqrt(1.0 - abar) * np.asarray(eps)


@dataclass
class DenoiserConfig:
    """Architecture and training hyperparameters for the denoiser.

    hidden_layers=None picks 5 layers for datasets up to 19 features and 6
    for 21; widths=None uses the symmetric defaults for that count.
    """

    hidden_layers: int | None = None
    widths: tuple[int, ...] | None = None
    leaky_slope: float = 0.2
    time_conditioning: str = "channel"  # scalar t/T appended as an input column
    learning_rate: float = 5e-4
    batch_size: int = 64
    max_epochs: int = 3000
    patience: int = 50
    val_fraction: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        if self.hidden_layers is not None and self.hidden_layers not in DEFAULT_WIDTHS:
            raise InvalidRangeError(f"hidden_layers must be one of {sorted(DEFAULT_WIDTHS)}")
        if self.widths is not None:
            if list(self.widths) != list(reversed(self.widths)):
                raise InvalidRangeError("widths must be symmetric (encoder-decoder)")
            if self.hidden_layers is not None and len(self.widths) != self.hidden_layers:
                raise InvalidRangeError("widths length must equal hidden_layers")
        if not 0.0 < self.leaky_slope < 1.0:
            raise InvalidRangeError("leaky_slope must be in (0,1)")
        if self.time_conditioning != "channel":
            raise InvalidRangeError(f"unknown time conditioning {self.time_conditioning!r}")
        if self.learning_rate <= 0.0:
            raise InvalidRangeError("learning_rate must be positive")
        if self.batch_size < 2:
            raise InvalidRangeError("batch_size must be >= 2")
        if self.max_epochs < 1:
            raise InvalidRangeError("max_epochs must be >= 1")
        if not 0.0 <= self.val_fraction < 0.5:
            raise InvalidRangeError("val_fraction must be in [0, 0.5)")

    def resolve_architecture(self, n_features: int) -> tuple[int, tuple[int, ...]]:
        layers = self.hidden_layers
        if layers is None:
            layers = 6 if n_features >= 21 else 5
        widths = self.widths if self.widths is not None else DEFAULT_WIDTHS[layers]
        return layers, tuple(widths)


@dataclass
class TrainingHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0


@dataclass
class DiffusionModel:
    """A trained (or not yet trained) denoiser bound to one circuit schema."""

    circuit: Circuit
    schedule: NoiseSchedule
    network: nn.Network
    norm_stats: NormStats | None
    config: DenoiserConfig
    trained: bool = False
    history: TrainingHistory = field(default_factory=TrainingHistory)

    @property
    def n_features(self) -> int:
        return self.network.n_out

    def predict_noise(self, x_t: np.ndarray, t: int) -> np.ndarray:
        """Denoiser output for normalized rows x_t at step t (infer mode)."""
        if not self.trained:
            raise UntrainedModelError("model has not been trained")
        t_col = np.full((x_t.shape[0], 1), t / self.schedule.n_steps)
        raw = self.network.forward(np.hstack([x_t, t_col]), train=False)
        return _step_noise_scale(self.schedule, t) * raw


def _step_noise_scale(schedule: NoiseSchedule, t: int) -> float:
    """Fixed output scaling of the denoiser head.

    The step noise carries only a sqrt(beta_t / (1 - abar_t)) share of the
    noisy signal, so the network regresses at unit scale and this factor maps
    its output onto the step-noise prediction the reverse update consumes.
    """
    return float(np.sqrt(schedule.beta_at(t) / (1.0 - schedule.alpha_bar_at(t))))


def _build_training_pairs(x0: np.ndarray, t_vec: np.ndarray, schedule: NoiseSchedule,
                          rng: np.random.Generator):
    """Row-wise noisy inputs and regression targets for per-row steps t.

    Each row jumps to x_{t-1} in closed form (x0 itself when t = 1, since
    abar_0 = 1 zeroes the jump noise) and then takes one explicit forward
    step with fresh noise. The raw network head regresses on the realized
    cumulative noise (x_t - sqrt(abar_t) x0) / sqrt(1 - abar_t): that is the
    conditional mean of the step noise given the pair, divided by the fixed
    head scale, so it has the same minimizer as regressing on the step noise
    itself but without the unlearnable orthogonal component drowning the
    gradient signal. Returns (x_t, raw-head target, t column).
    """
    abar_prev = np.where(t_vec > 1, schedule.alpha_bar[t_vec - 2], 1.0)[:, None]
    x_prev = np.sqrt(abar_prev) * x0 + np.sqrt(1.0 - abar_prev) * rng.standard_normal(x0.shape)
    beta = schedule.beta[t_vec - 1][:, None]
    x_t = np.sqrt(1.0 - beta) * x_prev + np.sqrt(beta) * rng.standard_normal(x0.shape)
    abar = schedule.alpha_bar[t_vec - 1][:, None]
    target = (x_t - np.sqrt(abar) * x0) / np.sqrt(1.0 - abar)
    return x_t, target, (t_vec / schedule.n_steps)[:, None]


def train(dataset: Dataset, config: DenoiserConfig | None = None,
          schedule: NoiseSchedule | None = None) -> DiffusionModel:
    """Fit the denoiser on one circuit dataset.

    Standardizes the data, then minimizes MSE between predicted and true
    step-noise: every row draws a uniform step t, jumps x0 to x_{t-1} in
    closed form and applies one forward step with fresh noise, which the
    network must predict from (x_t, t/T). Steps are per row rather than per
    batch: a batch-constant time channel would be cancelled exactly by batch
    normalization and the time conditioning could never train. Stops on a
    validation-loss plateau (patience epochs) or at max_epochs, keeping the
    best-validation parameters.
    """
    config = config or DenoiserConfig()
    config.validate()
    schedule = schedule or linear_schedule(1000, 0.001, 0.02)
    if dataset.n_rows < config.batch_size:
        raise TooFewRowsError(
            f"dataset has {dataset.n_rows} rows; need at least batch_size={config.batch_size}"
        )

    stats = fit_normalizer(dataset)
    z = normalize(dataset, stats).values
    n_rows, n_features = z.shape
    _, widths = config.resolve_architecture(n_features)

    seed_root = np.random.SeedSequence(config.seed)
    init_rng, order_rng, noise_rng, val_rng = (
        np.random.default_rng(s) for s in seed_root.spawn(4)
    )
    network = nn.build_mlp(n_features + 1, widths, n_features, config.leaky_slope, init_rng)
    optimizer = nn.Adam(network.parameters(), lr=config.learning_rate)

    # Held-out rows with frozen (t, noise) draws so the early-stopping signal
    # is deterministic across epochs.
    n_val = int(round(config.val_fraction * n_rows))
    order = val_rng.permutation(n_rows)
    val_rows, train_rows = z[order[:n_val]], z[order[n_val:]]
    val_pack = None
    if n_val > 0:
        reps = 4
        x0 = np.repeat(val_rows, reps, axis=0)
        ts = val_rng.integers(1, schedule.n_steps + 1, size=x0.shape[0])
        val_pack = _build_training_pairs(x0, ts, schedule, val_rng)

    history = TrainingHistory()
    best_val = np.inf
    best_state = network.snapshot()
    t_total = schedule.n_steps

    for epoch in range(config.max_epochs):
        perm = order_rng.permutation(train_rows.shape[0])
        epoch_losses = []
        for start in range(0, train_rows.shape[0], config.batch_size):
            batch = train_rows[perm[start:start + config.batch_size]]
            if batch.shape[0] < 2:
                continue  # batch norm cannot use a single row
            t_vec = noise_rng.integers(1, t_total + 1, size=batch.shape[0])
            x_t, target, t_col = _build_training_pairs(batch, t_vec, schedule, noise_rng)
            raw = network.forward(np.hstack([x_t, t_col]), train=True)
            loss, grad = nn.mse_loss(raw, target)
            if not np.isfinite(loss):
                raise NonFiniteLossError(
                    f"loss diverged at epoch {epoch}; try a lower learning rate"
                )
            network.backward(grad)
            optimizer.step(network.parameters(), network.gradients())
            epoch_losses.append(loss)
        history.train_loss.append(float(np.mean(epoch_losses)))
        history.epochs_run = epoch + 1

        if val_pack is not None:
            vx, vtarget, vt_col = val_pack
            vpred = network.forward(np.hstack([vx, vt_col]), train=False)
            vloss, _ = nn.mse_loss(vpred, vtarget)
            history.val_loss.append(vloss)
            if vloss < best_val:
                best_val = vloss
                best_state = network.snapshot()
                history.best_epoch = epoch
            elif epoch - history.best_epoch >= config.patience:
                break

    if val_pack is not None:
        network.restore(best_state)

    return DiffusionModel(
        circuit=dataset.schema.circuit,
        schedule=schedule,
        network=network,
        norm_stats=stats,
        config=config,
        trained=True,
        history=history,
    )


def reverse_step(x_t: np.ndarray, t: int, model: DiffusionModel) -> np.ndarray:
    """Deterministic inversion using the model's predicted step noise."""
    if not model.trained:
        raise UntrainedModelError("model has not been trained")
    eps_hat = model.predict_noise(x_t, t)
    return reverse_formula(x_t, model.schedule.beta_at(t), eps_hat)


def sample(model: DiffusionModel, n: int, seed: int, sampler: str = "paper") -> Dataset:
    """Generate n rows: start from standard normal, run the reverse chain
    for t = T..1, denormalize into the circuit schema.

    sampler="paper" is the pure deterministic inversion; "ancestral" adds
    the posterior noise term after each inversion (standard DDPM step).
    """
    if not model.trained:
        raise UntrainedModelError("model has not been trained")
    if sampler not in SAMPLER_MODES:
        raise InvalidRangeError(f"sampler must be one of {SAMPLER_MODES}, got {sampler!r}")
    if n < 1:
        raise InvalidRangeError(f"n must be >= 1, got {n}")
    sched = model.schedule
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    x = rng.standard_normal((n, model.n_features))
    for t in range(sched.n_steps, 0, -1):
        eps_hat = model.predict_noise(x, t)
        x = reverse_formula(x, sched.beta_at(t), eps_hat)
        if sampler == "ancestral" and t > 1:
            beta_t = sched.beta_at(t)
            var = (1.0 - sched.alpha_bar_at(t - 1)) / (1.0 - sched.alpha_bar_at(t)) * beta_t
            x = x + np.sqrt(var) * rng.standard_normal(x.shape)
    if not np.all(np.isfinite(x)):
        raise NonFiniteLossError("reverse chain diverged to non-finite values")
    z = Dataset(schema_for(model.circuit), x)
    return denormalize(z, model.norm_stats)


# -- checkpointing -------------------------------------------------------------

def save_checkpoint(model: DiffusionModel, path) -> None:
    """Versioned JSON checkpoint; floats are written shortest-round-trip."""
    sched = model.schedule
    payload = {
        "format": CHECKPOINT_FORMAT,
        "circuit": model.circuit.value,
        "trained": model.trained,
        "schedule": {
            "n_steps": sched.n_steps,
            "beta": [float(b) for b in sched.beta],
        },
        "config": {
            "hidden_layers": model.config.hidden_layers,
            "widths": list(model.config.widths) if model.config.widths else None,
            "resolved_widths": [layer.n_out for layer in model.network.layers[:-1]
                                if isinstance(layer, nn.DenseLayer)],
            "leaky_slope": model.config.leaky_slope,
            "time_conditioning": model.config.time_conditioning,
            "learning_rate": model.config.learning_rate,
            "batch_size": model.config.batch_size,
            "max_epochs": model.config.max_epochs,
            "patience": model.config.patience,
            "val_fraction": model.config.val_fraction,
            "seed": model.config.seed,
        },
        "norm_stats": None if model.norm_stats is None else {
            "feature_names": list(model.norm_stats.feature_names),
            "mean": [float(v) for v in model.norm_stats.mean],
            "std": [float(v) for v in model.norm_stats.std],
        },
        "network": nn.network_state(model.network),
        "history": {
            "epochs_run": model.history.epochs_run,
            "best_epoch": model.history.best_epoch,
            "final_train_loss": model.history.train_loss[-1] if model.history.train_loss else None,
            "final_val_loss": model.history.val_loss[-1] if model.history.val_loss else None,
        },
    }
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True)
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path) -> DiffusionModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IoFailure(f"checkpoint {path} is not valid JSON: {exc}") from exc
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise IoFailure(f"unsupported checkpoint format {payload.get('format')!r}")
    cfg = payload["config"]
    config = DenoiserConfig(
        hidden_layers=cfg["hidden_layers"],
        widths=tuple(cfg["widths"]) if cfg["widths"] else None,
        leaky_slope=cfg["leaky_slope"],
        time_conditioning=cfg["time_conditioning"],
        learning_rate=cfg["learning_rate"],
        batch_size=cfg["batch_size"],
        max_epochs=cfg["max_epochs"],
        patience=cfg["patience"],
        val_fraction=cfg["val_fraction"],
        seed=cfg["seed"],
    )
    stats = None
    if payload["norm_stats"] is not None:
        ns = payload["norm_stats"]
        stats = NormStats(
            feature_names=tuple(ns["feature_names"]),
            mean=np.array(ns["mean"]),
            std=np.array(ns["std"]),
        )
    history = TrainingHistory(
        best_epoch=payload["history"]["best_epoch"],
        epochs_run=payload["history"]["epochs_run"],
    )
    return DiffusionModel(
        circuit=Circuit.from_name(payload["circuit"]),
        schedule=NoiseSchedule(np.array(payload["schedule"]["beta"])),
        network=nn.network_from_state(payload["network"]),
        norm_stats=stats,
        config=config,
        trained=payload["trained"],
        history=history,
    )
