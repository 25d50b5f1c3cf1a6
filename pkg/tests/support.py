"""Shared builders for tests: tiny configs and hand-wired networks."""

import numpy as np

from poselift import autodiff as ad
from poselift import nets, training
from poselift.dataio import SynthConfig, synth_dataset

GATE_COLUMN = 2  # x coordinate of joint 1 in the flattened layout
GATE_THRESHOLD = 1.0 - 1e-9


def tiny_config(**kw):
    base = dict(hidden=8, epochs=2, batch_size=16, learning_rate=1e-3, seed=0)
    base.update(kw)
    return training.TrainConfig(**base)


def tiny_synth(num_train=160, num_test=32, seed=0):
    return synth_dataset(SynthConfig(num_train=num_train, num_test=num_test, seed=seed))


def _mlp(layers, hidden):
    return nets.MlpParams([(ad.parameter(w), ad.parameter(b)) for w, b in layers], hidden)


def threshold_discriminator(num_joints, weight, offset=0.0, hidden=4):
    """D with logit = weight * (x[GATE_COLUMN] - GATE_THRESHOLD) + offset.

    Layer 1 copies the gated coordinate (+100, so it stays on the positive
    branch) into unit 0; the middle layers are zero and the skip passes the
    copy through; layer 4 removes the +100 and applies the threshold.
    """
    n2 = 2 * num_joints
    w1 = np.zeros((n2, hidden))
    w1[GATE_COLUMN, 0] = 1.0
    b1 = np.zeros((1, hidden))
    b1[0, 0] = 100.0
    zero_h = (np.zeros((hidden, hidden)), np.zeros((1, hidden)))
    w4 = np.zeros((hidden, 1))
    w4[0, 0] = weight
    b4 = np.array([[-(100.0 + GATE_THRESHOLD) * weight + offset]])
    return _mlp([(w1, b1), zero_h, zero_h, (w4, b4)], hidden)


def zero_generator(num_joints, hidden=4):
    n2 = 2 * num_joints
    return _mlp(
        [
            (np.zeros((n2, hidden)), np.zeros((1, hidden))),
            (np.zeros((hidden, hidden)), np.zeros((1, hidden))),
            (np.zeros((hidden, hidden)), np.zeros((1, hidden))),
            (np.zeros((hidden, num_joints)), np.zeros((1, num_joints))),
        ],
        hidden,
    )


def gating_batch(num_joints, batch=10, wrong=1, seed=0):
    """Real batch whose gated coordinate is +1 except for ``wrong`` rows at -1."""
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, 0.1, size=(batch, 2 * num_joints))
    x[:, GATE_COLUMN] = 1.0
    x[:wrong, GATE_COLUMN] = -1.0
    return x


def gating_state(schema, d_params, config):
    state = training.init_state(config, schema)
    state.g_params = zero_generator(schema.num_joints)
    state.d_params = d_params
    state.g_adam = training._adam_states(state.g_params, config)
    state.d_adam = training._adam_states(state.d_params, config)
    return state


def snapshot(params):
    return [p.values.copy() for p in params.parameters()]


def same(before, params):
    return all(np.array_equal(a, p.values) for a, p in zip(before, params.parameters()))
