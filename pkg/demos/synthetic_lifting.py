"""Train the lifter on the synthetic skeleton and look at what it learned.

By default this is a quick run (a narrower network, fewer poses) that ends
in a few minutes.  Pass ``--full`` for the default configuration used by
the acceptance suite; that takes around 20 minutes on one core.

Outputs land in ``--out``: checkpoints, the training log, an evaluation
report and an SVG turntable of a few test predictions.
"""

import argparse
import logging

from poselift import dataio, export, training
from poselift.checkpoint import load_checkpoint
from poselift.experiment import predict_dataset, synthetic_experiment

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--out", default="synthetic_run")
parser.add_argument("--full", action="store_true")
parser.add_argument("--no-angle-loss", action="store_true")
args = parser.parse_args()
logging.basicConfig(level=logging.INFO, format="%(message)s")

if args.full:
    synth = dataio.SynthConfig(num_train=10_000, num_test=1_000)
    train = training.TrainConfig(epochs=20, angle_loss_enabled=not args.no_angle_loss)
else:
    synth = dataio.SynthConfig(num_train=3_000, num_test=500)
    train = training.TrainConfig(hidden=256, epochs=8, angle_loss_enabled=not args.no_angle_loss)

result = synthetic_experiment(args.out, synth, train)
print(result.report.format_table())
print(f"error / zero-depth error = {result.ratio:.3f}")
print(f"fraction of mirrored predictions = {result.inverted_fraction:.3f}")

# a turntable of the first few test predictions
state, _, _ = load_checkpoint(result.checkpoint)
_, test = dataio.synth_dataset(synth)
pred = predict_dataset(state.g_params, test)
export.export(pred, f"{args.out}/turntable.svg", "svg", rotate_every=45, max_poses=4)
print(f"wrote {args.out}/turntable.svg")
