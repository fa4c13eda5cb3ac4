"""Adversarial training with graph-aligned localized critics.

One generator faces a set of critics, each restricted to the columns of
one node family of a known directed acyclic graph.  Every minibatch
takes one simultaneous ascent step on all critics and one descent step
on the generator; the weighted family objective is the single quantity
both sides optimize.  Three critic layouts are supported: a single
monolithic critic on the full joint, graph-informed families of a given
ancestor depth, and size-matched misaligned families that avoid the
true parents (a control for whether alignment itself matters).

Categorical data flows through a dummy encoding; the generator emits
logits per variable block and training relaxes them with the
Gumbel-softmax, while all evaluation decodes hard samples by the
Gumbel-max trick (argmax over noise-perturbed logits), which draws from
the exact categorical law of the logits.  Runs are deterministic given
the config: all randomness comes from dedicated counter-based streams.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .bayesnet import DiscreteBayesNet, SampleBatch, dummy_encode
from .diagnostics import auc, avg_loglik_truth, energy_distance
from .errors import NonFiniteObjective, ShapeMismatch
from .graph import Dag, FamilySpec, ancestor_families, misaligned_families
from .objectives import ObjectiveForm, graph_informed_objective
from .rng import STREAM_GUMBEL, STREAM_INIT, STREAM_LATENT, STREAM_SHUFFLE, philox

__all__ = [
    "TrainConfig",
    "GanState",
    "RunHistory",
    "build_families",
    "generator_sample",
    "init_gan",
    "train_step",
    "train",
    "history_columns",
]

_MODES = ("monolithic", "graph_informed", "misaligned")
_STOP_METRICS = (None, "avg_loglik", "energy_distance")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one adversarial run.

    ``mode`` picks the critic layout; ``depth`` is the ancestor radius
    of the graph-informed families (1 = child-parent) and
    ``misalign_seed`` the draw of the misaligned control.  Early
    stopping watches a validation metric: ``avg_loglik`` stops after
    ``patience`` epochs without a ``min_delta`` improvement and restores
    the best checkpoint, while ``energy_distance`` with a
    ``stop_threshold`` stops once the metric stays below the threshold
    for ``patience`` consecutive epochs.  ``strict_reuse`` makes the
    generator step reuse the critic step's fake minibatch instead of
    drawing a fresh one.
    """

    mode: str = "graph_informed"
    depth: int = 1
    misalign_seed: int = 0
    objective: ObjectiveForm = ObjectiveForm.DV_KL
    batch_size: int = 256
    max_epochs: int = 60
    lr_disc: float = 1e-3
    lr_gen: float = 3e-3
    gumbel_temperature: float = 0.5
    spectral_norm: bool = False
    lipschitz_scale: float = 1.0
    early_stop_metric: str | None = None
    patience: int = 20
    min_delta: float = 1e-3
    stop_threshold: float | None = None
    seed: int = 0
    split: float = 0.9
    strict_reuse: bool = False
    latent_dim: int = 16
    gen_widths: tuple = (32, 32)
    gen_activation: str = "swish"
    critic_widths: tuple = (16, 16)

    def __post_init__(self):
        object.__setattr__(self, "gen_widths", tuple(int(w) for w in self.gen_widths))
        object.__setattr__(self, "critic_widths", tuple(int(w) for w in self.critic_widths))
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}")
        if self.early_stop_metric not in _STOP_METRICS:
            raise ValueError(f"early_stop_metric must be one of {_STOP_METRICS}")
        if self.lr_disc <= 0 or self.lr_gen <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if not 0.0 < self.split < 1.0:
            raise ValueError("train fraction must lie strictly between 0 and 1")
        if not self.gumbel_temperature > 0.0:
            raise ValueError("gumbel temperature must be positive")
        if self.depth < 0:
            raise ValueError("depth must be nonnegative")


@dataclass
class GanState:
    """Everything mutable about a run: networks, optimizers, streams.

    ``family_columns[i]`` are the (encoded) data columns critic ``i``
    may see; all slicing happens inside the weighted objective, which is
    the single choke point between critics and data.  ``encoding`` is
    ``None`` for continuous data.
    """

    config: TrainConfig
    generator: nn.Mlp
    gen_adam: nn.AdamState
    critics: list
    critic_adams: list
    families: FamilySpec
    family_columns: list
    encoding: object | None
    cardinalities: tuple | None
    latent_rng: object
    shuffle_rng: object
    gumbel_seq: int = 0
    epoch: int = 0
    step_count: int = 0
    best_metric: float | None = None
    best_params: object | None = None


@dataclass
class RunHistory:
    """Per-epoch diagnostic records of one run.

    Each record is a dict with the keys of :func:`history_columns`;
    train rows carry the epoch-mean objective (other diagnostics NaN),
    validation rows carry the full metric set.  ``seconds`` holds wall
    clock per epoch and is reported separately from the deterministic
    columns.  An aborted run keeps its partial records and the flag.
    """

    critic_count: int
    records: list = field(default_factory=list)
    aborted: bool = False
    abort_reason: str = ""

    @property
    def epochs(self) -> int:
        return max((r["epoch"] for r in self.records), default=-1) + 1


def history_columns(critic_count: int) -> list:
    """Column order of history records (seconds last, nondeterministic)."""
    cols = ["epoch", "split", "objective", "energy_distance", "avg_loglik"]
    cols += [f"auc_{i}" for i in range(critic_count)]
    return cols + ["seconds"]


def build_families(config: TrainConfig, dag: Dag) -> FamilySpec:
    """Critic families for a config: one full-joint family (monolithic),
    ancestor families of the config depth (graph-informed), or the
    seeded size-matched control (misaligned)."""
    if config.mode == "monolithic":
        return FamilySpec.uniform([tuple(range(dag.node_count))])
    if config.mode == "graph_informed":
        return ancestor_families(dag, config.depth)
    return misaligned_families(dag, config.misalign_seed)


def _gen_spec(config: TrainConfig, output_dim: int) -> nn.MlpSpec:
    return nn.MlpSpec(
        input_dim=config.latent_dim,
        hidden_widths=config.gen_widths,
        output_dim=output_dim,
        hidden_activation=config.gen_activation,
        init_seed=0,
    )


def _critic_spec(config: TrainConfig, input_dim: int) -> nn.MlpSpec:
    return nn.MlpSpec(
        input_dim=input_dim,
        hidden_widths=config.critic_widths,
        output_dim=1,
        hidden_activation="leaky_relu",
        leaky_slope=0.2,
        spectral_norm=config.spectral_norm,
        scale=config.lipschitz_scale,
        init_seed=0,
    )


def init_gan(config: TrainConfig, dag: Dag, *, cardinalities=None, families=None) -> GanState:
    """Fresh networks, optimizers, and random streams for one run.

    ``cardinalities`` switches to the categorical pipeline (the
    generator emits one logit block per variable and critics act on
    dummy-encoded columns).  ``families`` overrides the layout built
    from the config mode — used, e.g., to drop deterministic roots.
    """
    fams = build_families(config, dag) if families is None else families
    if cardinalities is not None:
        cards = tuple(int(k) for k in cardinalities)
        probe = SampleBatch(np.zeros((1, dag.node_count)), tuple(range(dag.node_count)))
        _, encoding = dummy_encode(probe, cards)
        data_dim = encoding.total_dim
        columns = [encoding.family_columns(fam) for fam in fams.families]
    else:
        cards, encoding = None, None
        data_dim = dag.node_count
        columns = [np.asarray(fam, dtype=np.int64) for fam in fams.families]
    seed_rng = philox(config.seed, STREAM_INIT)
    net_seeds = seed_rng.integers(0, 2**62, size=len(fams.families) + 1)
    generator = nn.init_mlp(replace(_gen_spec(config, data_dim), init_seed=int(net_seeds[0])))
    gen_adam = nn.init_adam(nn.parameters(generator), lr=config.lr_gen)
    critics, critic_adams = [], []
    for i, cols in enumerate(columns):
        critic = nn.init_mlp(replace(_critic_spec(config, len(cols)), init_seed=int(net_seeds[i + 1])))
        critics.append(critic)
        critic_adams.append(nn.init_adam(nn.parameters(critic), lr=config.lr_disc))
    return GanState(
        config=config,
        generator=generator,
        gen_adam=gen_adam,
        critics=critics,
        critic_adams=critic_adams,
        families=fams,
        family_columns=columns,
        encoding=encoding,
        cardinalities=cards,
        latent_rng=philox(config.seed, STREAM_LATENT),
        shuffle_rng=philox(config.seed, STREAM_SHUFFLE),
    )


def generator_sample(gen: nn.Mlp, count: int, seed: int, *, encoding=None, temperature=0.5, hard=False) -> SampleBatch:
    """Seeded batch from a generator.

    Continuous generators return their outputs directly.  Categorical
    generators (``encoding`` given) perturb each logit block with Gumbel
    noise: ``hard=False`` returns the temperature-relaxed rows on the
    encoded columns, ``hard=True`` the argmax decode — an exact draw
    from the categorical law of the logits.  The same seed reproduces
    the same batch.
    """
    latent = philox(seed, STREAM_LATENT).standard_normal((count, gen.spec.input_dim))
    logits, _ = forward_eval(gen, latent)
    if encoding is None:
        return SampleBatch(logits, tuple(range(logits.shape[1])))
    noise = philox(seed, STREAM_GUMBEL).gumbel(size=logits.shape)
    if hard:
        n_vars = len(encoding.blocks)
        codes = np.zeros((count, n_vars))
        for v in range(n_vars):
            sl = encoding.block_slice(v)
            codes[:, v] = np.argmax(logits[:, sl] + noise[:, sl], axis=1)
        return SampleBatch(codes, tuple(range(n_vars)))
    relaxed = np.empty_like(logits)
    for v in range(len(encoding.blocks)):
        sl = encoding.block_slice(v)
        relaxed[:, sl] = nn.gumbel_softmax(logits[:, sl], temperature, 0, noise=noise[:, sl])
    return SampleBatch(relaxed, tuple(range(logits.shape[1])))


def forward_eval(mlp: nn.Mlp, batch):
    """Forward pass that leaves the spectral power-iteration state alone."""
    return nn.forward(mlp, batch, power_iterations=0, update_state=False)


def _forward_train(mlp: nn.Mlp, batch):
    return nn.forward(mlp, batch, power_iterations=1, update_state=True)


def _relax_blocks(state: GanState, logits, noise):
    cfg = state.config
    relaxed = np.empty_like(logits)
    for v in range(len(state.encoding.blocks)):
        sl = state.encoding.block_slice(v)
        relaxed[:, sl] = nn.gumbel_softmax(logits[:, sl], cfg.gumbel_temperature, 0, noise=noise[:, sl])
    return relaxed


def _relax_backward(state: GanState, relaxed, grad):
    cfg = state.config
    out = np.empty_like(grad)
    for v in range(len(state.encoding.blocks)):
        sl = state.encoding.block_slice(v)
        out[:, sl] = nn.gumbel_softmax_backward(relaxed[:, sl], cfg.gumbel_temperature, grad[:, sl])
    return out


def _fake_batch(state: GanState):
    """Generator forward on fresh latent noise, relaxed when categorical.

    Returns ``(fake_rows, generator_cache, relaxed_rows_or_None)``.
    """
    cfg = state.config
    z = state.latent_rng.standard_normal((cfg.batch_size, cfg.latent_dim))
    logits, cache = forward_eval(state.generator, z)
    if state.encoding is None:
        return logits, cache, None
    noise = philox(cfg.seed + state.gumbel_seq, STREAM_GUMBEL).gumbel(size=logits.shape)
    state.gumbel_seq += 1
    relaxed = _relax_blocks(state, logits, noise)
    return relaxed, cache, relaxed


def _ascend_critics(state: GanState, objective):
    for i, critic in enumerate(state.critics):
        real_grads, _ = nn.backward(critic, objective.real_caches[i], objective.real_grads[i])
        fake_grads, _ = nn.backward(critic, objective.fake_caches[i], objective.fake_grads[i])
        total = [-(a + b) for a, b in zip(real_grads, fake_grads)]
        params = nn.adam_step(state.critic_adams[i], nn.parameters(critic), total)
        nn.set_parameters(critic, params)


def _descend_generator(state: GanState, objective, fake, gen_cache, relaxed):
    grad_fake = np.zeros_like(fake)
    for i, critic in enumerate(state.critics):
        _, input_grad = nn.backward(critic, objective.fake_caches[i], objective.fake_grads[i])
        grad_fake[:, state.family_columns[i]] += input_grad
    if relaxed is not None:
        grad_fake = _relax_backward(state, relaxed, grad_fake)
    gen_grads, _ = nn.backward(state.generator, gen_cache, grad_fake)
    params = nn.adam_step(state.gen_adam, nn.parameters(state.generator), gen_grads)
    nn.set_parameters(state.generator, params)


def _one_step(state: GanState, config: TrainConfig, real) -> float:
    """Critic ascent then generator descent; returns the objective value
    seen by the generator step."""
    fake, gen_cache, relaxed = _fake_batch(state)
    objective = graph_informed_objective(
        config.objective, state.critics, real, fake,
        state.family_columns, state.families.weights, _forward_train,
    )
    if not np.isfinite(objective.value):
        raise NonFiniteObjective(f"critic objective {objective.value} at step {state.step_count}")
    _ascend_critics(state, objective)

    if not config.strict_reuse:
        fake, gen_cache, relaxed = _fake_batch(state)
    objective = graph_informed_objective(
        config.objective, state.critics, real, fake,
        state.family_columns, state.families.weights, forward_eval,
    )
    if not np.isfinite(objective.value):
        raise NonFiniteObjective(f"generator objective {objective.value} at step {state.step_count}")
    _descend_generator(state, objective, fake, gen_cache, relaxed)
    state.step_count += 1
    return objective.value


def train_step(state: GanState, config: TrainConfig, real_batch) -> GanState:
    """One critic ascent and one generator descent on a real minibatch.

    The critic step scores the real rows against a fresh fake batch and
    takes one simultaneous Adam ascent step on every critic; the
    generator step then descends through the updated critics on another
    fresh fake batch (or the same one under ``strict_reuse``).  A
    non-finite objective raises ``NonFiniteObjective``.
    """
    _one_step(state, config, np.asarray(real_batch, dtype=np.float64))
    return state


def _snapshot(state: GanState):
    gen = [p.copy() for p in nn.parameters(state.generator)]
    critics = [[p.copy() for p in nn.parameters(c)] for c in state.critics]
    power = None
    if state.config.spectral_norm:
        power = [([u.copy() for u in c.u], [v.copy() for v in c.v]) for c in state.critics]
    return gen, critics, power


def _restore(state: GanState, snapshot):
    gen, critics, power = snapshot
    nn.set_parameters(state.generator, [p.copy() for p in gen])
    for critic, params in zip(state.critics, critics):
        nn.set_parameters(critic, [p.copy() for p in params])
    if power is not None:
        for critic, (us, vs) in zip(state.critics, power):
            critic.u = [u.copy() for u in us]
            critic.v = [v.copy() for v in vs]


def _epoch_diagnostics(state: GanState, val_encoded, net, epoch_seed):
    """Validation metrics on hard-decoded generator samples."""
    cfg = state.config
    count = val_encoded.shape[0]
    if state.encoding is None:
        fake_rows = generator_sample(state.generator, count, epoch_seed).data
        fake_for_loglik = None
    else:
        hard = generator_sample(
            state.generator, count, epoch_seed,
            encoding=state.encoding, hard=True,
        )
        fake_rows = dummy_encode(hard, state.cardinalities)[0].data
        fake_for_loglik = hard
    objective = graph_informed_objective(
        cfg.objective, state.critics, val_encoded, fake_rows,
        state.family_columns, state.families.weights, forward_eval,
    )
    metrics = {
        "objective": objective.value,
        "energy_distance": energy_distance(val_encoded, fake_rows),
        "avg_loglik": float("nan"),
    }
    if net is not None and fake_for_loglik is not None:
        metrics["avg_loglik"] = avg_loglik_truth(fake_for_loglik, net)
    for i, critic in enumerate(state.critics):
        cols = state.family_columns[i]
        real_scores, _ = forward_eval(critic, val_encoded[:, cols])
        fake_scores, _ = forward_eval(critic, fake_rows[:, cols])
        metrics[f"auc_{i}"] = auc(real_scores.ravel(), fake_scores.ravel())
    return metrics


def _watched(config: TrainConfig, metrics):
    if config.early_stop_metric is None:
        return None
    value = metrics[config.early_stop_metric]
    # store as "higher is better" so one comparison covers both metrics
    return value if config.early_stop_metric == "avg_loglik" else -value


def train(config: TrainConfig, data: SampleBatch, dag: Dag, *, net=None, families=None):
    """Full training run: epochs of minibatches plus per-epoch validation.

    ``data`` holds decoded categorical codes when ``net`` is a discrete
    network (the run then encodes them once) and raw continuous rows
    otherwise.  The rows are split train/validation by prefix at the
    config ratio, each epoch shuffles the training rows and consumes
    full minibatches, and every epoch appends one train record (mean
    minibatch objective) and one validation record (objective, energy
    distance, truth log-likelihood for discrete runs, per-critic AUC) to
    the history.  Early stopping follows the config; when it watches
    ``avg_loglik`` the best checkpoint is restored afterwards.  A
    non-finite objective stops the run and flags the partial history
    instead of raising.
    """
    discrete = isinstance(net, DiscreteBayesNet)
    state = init_gan(
        config, dag,
        cardinalities=net.cardinalities if discrete else None,
        families=families,
    )
    if discrete:
        encoded = dummy_encode(data, net.cardinalities)[0].data
    else:
        encoded = data.data
    n_train = int(round(config.split * encoded.shape[0]))
    if n_train < config.batch_size or n_train >= encoded.shape[0]:
        raise ShapeMismatch("too few rows for this split and batch size")
    train_rows, val_rows = encoded[:n_train], encoded[n_train:]

    history = RunHistory(critic_count=len(state.critics))
    best_snapshot = None
    stall, streak = 0, 0
    for epoch in range(config.max_epochs):
        started = time.perf_counter()
        order = state.shuffle_rng.permutation(n_train)
        epoch_values = []
        try:
            for start in range(0, n_train - config.batch_size + 1, config.batch_size):
                batch = train_rows[order[start : start + config.batch_size]]
                epoch_values.append(_one_step(state, config, batch))
        except NonFiniteObjective as err:
            history.aborted = True
            history.abort_reason = str(err)
            break
        state.epoch = epoch + 1
        metrics = _epoch_diagnostics(state, val_rows, net if discrete else None, config.seed + 7_000_003 + epoch)
        seconds = time.perf_counter() - started
        train_record = {"epoch": epoch, "split": "train", "objective": float(np.mean(epoch_values)), "energy_distance": float("nan"), "avg_loglik": float("nan"), "seconds": seconds}
        for i in range(len(state.critics)):
            train_record[f"auc_{i}"] = float("nan")
        history.records.append(train_record)
        val_record = {"epoch": epoch, "split": "val", "seconds": seconds}
        val_record.update(metrics)
        history.records.append(val_record)

        watched = _watched(config, metrics)
        if watched is not None:
            if state.best_metric is None or watched > state.best_metric + config.min_delta:
                state.best_metric = watched
                best_snapshot = _snapshot(state)
                stall = 0
            else:
                stall += 1
            if config.early_stop_metric == "energy_distance" and config.stop_threshold is not None:
                streak = streak + 1 if metrics["energy_distance"] < config.stop_threshold else 0
                if streak >= config.patience:
                    break
            elif stall >= config.patience:
                break
    if config.early_stop_metric == "avg_loglik" and best_snapshot is not None:
        _restore(state, best_snapshot)
        state.best_params = best_snapshot
    return state, history
