"""Finite-difference checks for the autodiff engine and the training losses.

Each case builds a scalar loss from fresh parameter leaves.  The analytic
gradient from :func:`poselift.autodiff.backward` is compared with central
differences; a case passes when

    ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-8) < tol.

Op functions are looked up on the ``autodiff`` module at call time, so a
monkeypatched op is what gets checked.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import geometry as geo
from . import nets, training
from .dataio import SynthConfig, synth_dataset, synth_schema

STEP = 1e-5
TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    rel_error: float
    passed: bool


def numeric_grad(loss_fn, leaves, h=STEP):
    """Central-difference gradients of ``loss_fn()`` w.r.t. every leaf entry."""
    grads = []
    for leaf in leaves:
        g = np.zeros_like(leaf.values)
        flat, gflat = leaf.values.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn().item()
            flat[i] = orig - h
            down = loss_fn().item()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def relative_error(analytic, numeric):
    a = np.concatenate([x.ravel() for x in analytic])
    n = np.concatenate([x.ravel() for x in numeric])
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), 1e-8))


def check(name, loss_fn, leaves, h=STEP, tol=TOLERANCE):
    ad.zero_grad(leaves)
    ad.backward(loss_fn())
    analytic = [leaf.grad.copy() for leaf in leaves]
    err = relative_error(analytic, numeric_grad(loss_fn, leaves, h))
    return CheckResult(name, err, err < tol)


def _away_from_zero(rng, shape, margin=0.1):
    # keeps kinked ops (relu, leaky relu, maximum, sqrt) clear of their kinks
    u = rng.normal(size=shape)
    return np.sign(u) * (margin + np.abs(u))


def _weighted(rng, shape):
    # random projection so that every output entry influences the loss
    w = ad.constant(rng.normal(size=shape))
    return lambda out: ad.mean(ad.mul(out, w))


def _op_cases(rng):
    """``(name, build(leaves) -> Node, leaf arrays)`` for every primitive op."""
    a = _away_from_zero(rng, (3, 4))
    b = _away_from_zero(rng, (3, 4))
    m = rng.normal(size=(4, 5))
    bias = rng.normal(size=(1, 4))
    pos = np.abs(a) + 0.5
    col = rng.normal(size=(3, 1))
    logits = np.array([[-3.0], [-0.4], [0.2], [2.5], [40.0]])
    return [
        ("matmul", lambda x, y: ad.matmul(x, y), [a, m]),
        ("add_bias", lambda x, y: ad.add_bias(x, y), [a, bias]),
        ("leaky_relu", lambda x: ad.leaky_relu(x, 0.2), [a]),
        ("relu", lambda x: ad.relu(x), [a]),
        ("residual_add", lambda x, y: ad.residual_add(x, y), [a, b]),
        ("add", lambda x, y: ad.add(x, y), [a, col]),
        ("sub", lambda x, y: ad.sub(x, y), [a, bias]),
        ("mul", lambda x, y: ad.mul(x, y), [a, col]),
        ("div", lambda x, y: ad.div(x, y), [a, pos]),
        ("neg", lambda x: ad.neg(x), [a]),
        ("sin", lambda x: ad.sin(x), [a]),
        ("cos", lambda x: ad.cos(x), [a]),
        ("sqrt", lambda x: ad.sqrt(x), [pos]),
        ("maximum", lambda x: ad.maximum(x, 0.05), [a]),
        ("take_cols", lambda x: ad.take_cols(x, [3, 0, 0, 2]), [a]),
        ("concat_rows", lambda x, y: ad.concat_rows([x, y]), [a, b]),
        ("slice_rows", lambda x: ad.slice_rows(x, 1, 3), [a]),
        ("sum_cols", lambda x: ad.sum_cols(x), [a]),
        ("mean", lambda x: ad.mean(x), [a]),
        ("bce_logits_real", lambda x: ad.sigmoid_bce_with_logits(x, 1), [logits]),
        ("bce_logits_fake", lambda x: ad.sigmoid_bce_with_logits(x, 0), [logits]),
    ]


def op_checks(seed=0, h=STEP, tol=TOLERANCE):
    rng = np.random.default_rng(seed)
    results = []
    for name, build, arrays in _op_cases(rng):
        leaves = [ad.parameter(arr.copy()) for arr in arrays]
        probe = build(*leaves)
        project = _weighted(rng, probe.shape)
        results.append(check(name, lambda project=project, build=build, leaves=leaves: project(build(*leaves)), leaves, h, tol))
    return results


def _random_poses(rng, b):
    train, _ = synth_dataset(SynthConfig(num_train=b, num_test=1, seed=int(rng.integers(2**31))))
    return geo.flatten_poses(train.poses)


def composite_checks(seed=0, h=STEP, tol=TOLERANCE, hidden=6, batch=4):
    """Generator loss (projection + discriminator + angle hinge) and D loss."""
    rng = np.random.default_rng(seed)
    schema = synth_schema()
    poses = ad.constant(_random_poses(rng, batch))
    thetas = ad.constant(geo.sample_theta(rng, (batch, 1)))
    kw = dict(hidden=hidden, init_std=0.3)
    g = nets.init_generator(rng, schema.num_joints, **kw)
    d = nets.init_discriminator(rng, schema.num_joints, **kw)
    results = []
    for loss_kind in (training.NON_SATURATING, training.MINIMAX):
        config = training.TrainConfig(hidden=hidden, generator_loss=loss_kind, angle_loss_enabled=True)

        def g_loss(config=config):
            depths = nets.generator_forward(g, poses)
            # push depths away from the symmetric solution so the hinge is active
            depths = ad.mul(depths, 3.0)
            fake = geo.rotate_project_nodes(poses, depths, thetas)
            logits = nets.discriminator_forward(d.detached(), fake)
            return training.generator_loss(logits, poses, depths, schema, config)[0]

        results.append(check(f"generator_loss[{loss_kind}]", g_loss, g.parameters(), h, tol))

    def d_loss():
        depths = nets.generator_forward(g.detached(), poses)
        fake = geo.rotate_project_nodes(poses, depths, thetas)
        logits = nets.discriminator_forward(d, ad.concat_rows([poses, fake]))
        return training.discriminator_loss(ad.slice_rows(logits, 0, batch), ad.slice_rows(logits, batch, 2 * batch))

    results.append(check("discriminator_loss", d_loss, d.parameters(), h, tol))

    def angle_only():
        depths = nets.generator_forward(g, poses)
        return ad.mean(geo.angle_loss_nodes(poses, ad.mul(depths, 3.0), schema))

    results.append(check("angle_loss", angle_only, g.parameters(), h, tol))

    depth_leaf = ad.parameter(rng.normal(size=(batch, schema.num_joints)))
    project = _weighted(rng, (batch, 2 * schema.num_joints))
    results.append(
        check(
            "rotate_project",
            lambda: project(geo.rotate_project_nodes(poses, depth_leaf, thetas)),
            [depth_leaf],
            h,
            tol,
        )
    )
    return results


def run_all(seed=0, h=STEP, tol=TOLERANCE):
    return op_checks(seed, h, tol) + composite_checks(seed, h, tol)


def format_results(results):
    lines = [f"{'PASS' if r.passed else 'FAIL'}  {r.name:<32s} rel_err={r.rel_error:.3e}" for r in results]
    failed = sum(not r.passed for r in results)
    lines.append(f"{len(results) - failed}/{len(results)} checks passed")
    return "\n".join(lines)
