"""Adversarial training of the depth generator against a 2D pose discriminator.

One iteration draws a minibatch of normalized 2D poses, predicts depths,
rotates every pose by its own random angle about the vertical axis and
projects it back to 2D.  The discriminator separates real from projected
poses; the generator is pushed to make projections look real.  Updates are
gated on the discriminator's minibatch accuracy to keep the game balanced.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import geometry as geo
from . import nets
from .errors import ConfigError, DataError, TrainingError

log = logging.getLogger(__name__)

NON_SATURATING = "non_saturating"
MINIMAX = "minimax"


@dataclass
class TrainConfig:
    batch_size: int = 16
    epochs: int = 50
    # the per-layer gain of init_std 0.14 at width 1024 is about 3; larger rates
    # let the discriminator run away early
    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    init_std: float = 0.14
    hidden: int = 1024
    leaky_slope: float = 0.2
    skip: bool = True
    d_acc_upper: float = 0.9
    d_acc_lower: float = 0.1
    angle_loss_enabled: bool = True
    generator_loss: str = NON_SATURATING
    seed: int = 0
    checkpoint_every: int = 0  # epochs; 0 writes only the final checkpoint

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not 0.0 <= self.d_acc_lower < self.d_acc_upper <= 1.0:
            raise ConfigError(
                f"need 0 <= d_acc_lower < d_acc_upper <= 1, got {self.d_acc_lower}, {self.d_acc_upper}"
            )
        if self.generator_loss not in (NON_SATURATING, MINIMAX):
            raise ConfigError(f"generator_loss must be {NON_SATURATING!r} or {MINIMAX!r}")
        if not 0.0 <= self.leaky_slope < 1.0:
            raise ConfigError(f"leaky_slope must lie in [0, 1), got {self.leaky_slope}")
        if self.hidden < 1 or not self.init_std > 0 or not self.learning_rate > 0:
            raise ConfigError("hidden, init_std and learning_rate must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown training options: {', '.join(sorted(unknown))}")
        return cls(**data)


@dataclass
class TrainState:
    g_params: nets.MlpParams
    d_params: nets.MlpParams
    g_adam: list
    d_adam: list
    rng: np.random.Generator
    epoch: int = 0
    iteration: int = 0
    last_accuracy: float = float("nan")
    history: list = field(default_factory=list)


def _adam_states(params, config):
    return [
        ad.AdamState.for_param(p, config.learning_rate, config.beta1, config.beta2, config.adam_epsilon)
        for p in params.parameters()
    ]


def init_state(config, schema):
    """Fresh networks and optimizer state, all drawn from ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    kw = dict(hidden=config.hidden, init_std=config.init_std, leaky_slope=config.leaky_slope, skip=config.skip)
    g = nets.init_generator(rng, schema.num_joints, **kw)
    d = nets.init_discriminator(rng, schema.num_joints, **kw)
    return TrainState(g, d, _adam_states(g, config), _adam_states(d, config), rng)


# ---------------------------------------------------------------------------
# losses and accuracy


def _values(x):
    return x.values if isinstance(x, ad.Node) else np.asarray(x, dtype=np.float64)


def discriminator_accuracy(real_logits, fake_logits):
    """Fraction of correct real/fake calls at logit threshold 0 (ties count wrong)."""
    real, fake = _values(real_logits).ravel(), _values(fake_logits).ravel()
    if real.size == 0 or fake.size == 0:
        raise ValueError("accuracy needs at least one real and one fake logit")
    correct = np.count_nonzero(real > 0) + np.count_nonzero(fake < 0)
    return correct / (real.size + fake.size)


def discriminator_loss(real_logits, fake_logits):
    """``-E[log D(real)] - E[log(1 - D(fake))]`` in logit space."""
    return ad.sigmoid_bce_with_logits(real_logits, 1) + ad.sigmoid_bce_with_logits(fake_logits, 0)


def generator_loss(fake_logits, poses, depths, schema, config):
    """Adversarial term plus (optionally) the mean orientation hinge.

    Args:
        fake_logits: Node ``(B, 1)``, discriminator logits of projected poses.
        poses: Node ``(B, 2N)``, the generator's 2D inputs.
        depths: Node ``(B, N)``, the generator's predicted depths.

    Returns:
        ``(total, angle)`` where ``angle`` is None when the angle loss is off.
    """
    if config.generator_loss == NON_SATURATING:
        adv = ad.sigmoid_bce_with_logits(fake_logits, 1)
    else:
        # literal E[log(1 - D(fake))]
        adv = -ad.sigmoid_bce_with_logits(fake_logits, 0)
    if not config.angle_loss_enabled:
        return adv, None
    angle = ad.mean(geo.angle_loss_nodes(poses, depths, schema))
    return adv + angle, angle


# ---------------------------------------------------------------------------
# one iteration


def _check_finite(name, value, state):
    if not math.isfinite(value):
        raise TrainingError(
            f"non-finite {name} at iteration {state.iteration}",
            {"iteration": state.iteration, "epoch": state.epoch, name: value},
        )


def train_step(state, real_batch, schema, config):
    """Run one gated update on a ``(B, 2N)`` batch of normalized poses.

    Mutates and returns ``state``.  Parameters are left untouched if a
    non-finite loss or gradient shows up.
    """
    real_batch = np.asarray(real_batch, dtype=np.float64)
    b = real_batch.shape[0]
    if real_batch.shape[1] != 2 * schema.num_joints:
        raise DataError(f"batch width {real_batch.shape[1]} != 2 * {schema.num_joints} joints")

    thetas = geo.sample_theta(state.rng, (b, 1))
    real = ad.constant(real_batch)
    depths = nets.generator_forward(state.g_params, real)
    fake = geo.rotate_project_nodes(real, depths, ad.constant(thetas))

    # discriminator branch sees fakes as constants
    logits = nets.discriminator_forward(state.d_params, ad.concat_rows([real, fake.detach()]))
    real_logits, fake_logits = ad.slice_rows(logits, 0, b), ad.slice_rows(logits, b, 2 * b)
    d_loss = discriminator_loss(real_logits, fake_logits)
    acc = discriminator_accuracy(real_logits, fake_logits)

    # generator branch sees the discriminator as a constant
    g_fake_logits = nets.discriminator_forward(state.d_params.detached(), fake)
    g_loss, angle = generator_loss(g_fake_logits, real, depths, schema, config)

    _check_finite("d_loss", d_loss.item(), state)
    _check_finite("g_loss", g_loss.item(), state)

    update_d = acc <= config.d_acc_upper
    update_g = acc >= config.d_acc_lower
    d_list, g_list = state.d_params.parameters(), state.g_params.parameters()
    if update_d:
        ad.zero_grad(d_list)
        ad.backward(d_loss)
    if update_g:
        ad.zero_grad(g_list)
        ad.backward(g_loss)
    for flag, net, params in ((update_d, "D", state.d_params), (update_g, "G", state.g_params)):
        if flag:
            for name, p in params.named_parameters():
                ad.check_finite_grad(p, f"{net}.{name}")
    if update_d:
        for (name, p), opt in zip(state.d_params.named_parameters(), state.d_adam):
            ad.adam_step(p, opt, f"D.{name}")
    if update_g:
        for (name, p), opt in zip(state.g_params.named_parameters(), state.g_adam):
            ad.adam_step(p, opt, f"G.{name}")

    degenerate = 0
    if schema.has_orientation:
        z = depths.values
        pose3d = np.concatenate([real_batch.reshape(b, -1, 2), z[:, :, None]], axis=2)
        degenerate = int(np.count_nonzero(geo.orientation_degenerate(pose3d, schema)))

    state.iteration += 1
    state.last_accuracy = acc
    state.history.append(
        {
            "iteration": state.iteration,
            "epoch": state.epoch,
            "g_loss": g_loss.item(),
            "d_loss": d_loss.item(),
            "angle_loss": angle.item() if angle is not None else 0.0,
            "d_accuracy": acc,
            "d_updated": bool(update_d),
            "g_updated": bool(update_g),
            "degenerate_orientation": degenerate,
        }
    )
    return state


# ---------------------------------------------------------------------------
# full loop


def steps_per_epoch(num_poses, batch_size):
    return num_poses // batch_size


def train(config, dataset, schema, state=None, checkpoint_dir=None, log_path=None, progress=None):
    """Train for ``config.epochs`` epochs (continuing ``state`` if given).

    Each epoch visits a seeded permutation of the poses in full batches; the
    remainder is dropped.  Checkpoints go to ``checkpoint_dir`` every
    ``config.checkpoint_every`` epochs and after the last epoch; one JSON
    record per iteration is appended to ``log_path``.

    Returns the final :class:`TrainState` (networks, optimizer state, history).
    """
    from .checkpoint import save_checkpoint

    if dataset.unit != geo.NORMALIZED:
        raise DataError(f"training needs normalized poses, dataset unit is {dataset.unit!r}")
    if dataset.schema.digest() != schema.digest():
        raise DataError(f"dataset schema {dataset.schema.name!r} does not match {schema.name!r}")
    if config.angle_loss_enabled:
        schema.require_orientation()
    flat = geo.flatten_poses(dataset.poses)
    m = flat.shape[0]
    if m == 0:
        raise DataError("dataset is empty")
    per_epoch = steps_per_epoch(m, config.batch_size)
    if per_epoch == 0:
        raise DataError(f"dataset of {m} poses is smaller than one batch of {config.batch_size}")

    if state is None:
        state = init_state(config, schema)
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    log_file = open(log_path, "a", encoding="utf-8") if log_path is not None else None
    try:
        while state.epoch < config.epochs:
            perm = state.rng.permutation(m)
            for k in range(per_epoch):
                idx = perm[k * config.batch_size : (k + 1) * config.batch_size]
                train_step(state, flat[idx], schema, config)
                if log_file is not None:
                    log_file.write(json.dumps(state.history[-1]) + "\n")
            state.epoch += 1
            if log_file is not None:
                log_file.flush()
            if progress is not None:
                progress(state)
            recent = state.history[-per_epoch:]
            log.info(
                "epoch %d/%d  g_loss %.4f  d_loss %.4f  d_acc %.3f",
                state.epoch,
                config.epochs,
                np.mean([h["g_loss"] for h in recent]),
                np.mean([h["d_loss"] for h in recent]),
                np.mean([h["d_accuracy"] for h in recent]),
            )
            if ckpt_dir is not None:
                last = state.epoch == config.epochs
                if last or (config.checkpoint_every and state.epoch % config.checkpoint_every == 0):
                    save_checkpoint(ckpt_dir / f"epoch{state.epoch:04d}.ckpt", state, config, schema)
                    save_checkpoint(ckpt_dir / "latest.ckpt", state, config, schema)
    finally:
        if log_file is not None:
            log_file.close()
    return state


def predict_depths(g_params, poses, batch_size=1024):
    """Generator depths for ``(M, N, 2)`` normalized poses, as ``(M, N)``."""
    poses = np.asarray(poses, dtype=np.float64)
    if len(poses) == 0:
        return np.zeros((0, poses.shape[1]))
    flat = geo.flatten_poses(poses)
    frozen_g = g_params.detached()
    out = [nets.generator_forward(frozen_g, flat[i : i + batch_size]).values for i in range(0, len(flat), batch_size)]
    return np.concatenate(out, axis=0)
