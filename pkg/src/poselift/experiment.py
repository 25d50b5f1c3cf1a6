"""The synthetic end-to-end run: synthesize, train, predict, evaluate.

Used by the acceptance suite and the demo scripts.  Everything lands in one
output directory so two runs can be compared byte for byte.
"""

import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataio
from . import evaluation as ev
from . import geometry as geo
from . import training

log = logging.getLogger(__name__)


@dataclass
class ExperimentResult:
    report: ev.EvalReport
    baseline: float
    inverted_fraction: float
    seconds: float
    out_dir: Path

    @property
    def ratio(self):
        return self.report.mean / self.baseline

    @property
    def checkpoint(self):
        return self.out_dir / "latest.ckpt"

    @property
    def report_path(self):
        return self.out_dir / "report.jsonl"


def predict_dataset(g_params, dataset):
    """3D prediction dataset for a normalized 2D dataset (input xy kept as is)."""
    z = training.predict_depths(g_params, dataset.poses)
    return dataio.PoseDataset(
        dataset.schema,
        np.concatenate([dataset.poses, z[..., None]], axis=2),
        geo.NORMALIZED,
        "prediction",
        ids=list(dataset.ids),
        centers=dataset.centers,
        scales=dataset.scales,
        actions=dataset.actions,
    )


def synthetic_experiment(out_dir, synth=None, train=None, mode=ev.SCALE_ALIGN):
    """Run the oracle experiment and write checkpoints, log and report to ``out_dir``.

    ``synth`` is a :class:`~poselift.dataio.SynthConfig`, ``train`` a
    :class:`~poselift.training.TrainConfig`.  By default: 10,000 training and
    1,000 test poses, 20 epochs, everything else at its default.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    synth = synth or dataio.SynthConfig(num_train=10_000, num_test=1_000)
    train = train or training.TrainConfig(epochs=20)
    start = time.perf_counter()
    train_set, test_set = dataio.synth_dataset(synth)
    state = training.train(
        train, train_set, train_set.schema, checkpoint_dir=out_dir, log_path=out_dir / "train_log.jsonl"
    )
    pred = predict_dataset(state.g_params, test_set)
    gt = dataio.gt3d_dataset(test_set)
    report = ev.evaluate(pred, gt, mode)
    report.write_jsonl(out_dir / "report.jsonl")
    seconds = time.perf_counter() - start
    result = ExperimentResult(
        report=report,
        baseline=report.extras["zero_depth_mean"],
        inverted_fraction=report.extras["inverted_fraction"],
        seconds=seconds,
        out_dir=out_dir,
    )
    log.info(
        "synthetic run: mpjpe %.4f  zero-depth %.4f  ratio %.3f  inverted %.3f  (%.0f s)",
        report.mean,
        result.baseline,
        result.ratio,
        result.inverted_fraction,
        seconds,
    )
    return result
