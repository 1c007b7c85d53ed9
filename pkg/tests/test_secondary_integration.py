"""Primary-side checks against the built external trainer adapter.

These tests exercise the real adapter in trainer/ through the same client
and conformance suite used against the reference adapter. They skip when the
adapter has not been built (`npm run build` in trainer/), so the primary
suite stands alone without the secondary component.
"""

import shutil
from pathlib import Path

import pytest

from smalldata import exttrainer, heightfield as hf, sweep
from smalldata.learner import TrainConfig

ADAPTER_MAIN = Path(__file__).parent.parent / "trainer" / "dist" / "src" / "main.js"
NODE = shutil.which("node")

pytestmark = pytest.mark.skipif(
    NODE is None or not ADAPTER_MAIN.exists(),
    reason="external trainer adapter not built (run `npm run build` in trainer/)")


@pytest.fixture(scope="module")
def adapter_command():
    return [NODE, str(ADAPTER_MAIN)]


@pytest.fixture(scope="module")
def trainer_data(tmp_path_factory):
    cfg = hf.SynthesisConfig(seed=31)
    patches, manifest = hf.synthesize_dataset(
        cfg, {label: 40 for label in hf.LABELS})
    plan = sweep.ExperimentPlan(trainer_specs=(sweep.TrainerSpec("builtin"),))
    data = sweep.prepare(patches, manifest, plan)
    out = tmp_path_factory.mktemp("adapter_data")
    return data, sweep.write_trainer_data(data, data.split.train, out)


def test_adapter_passes_conformance_suite(adapter_command, trainer_data):
    _, manifest_path = trainer_data
    failures = exttrainer.run_protocol_checks(
        adapter_command, manifest_path,
        checkpoint="microsoft/resnet-18", timeout=60)
    assert failures == []


def test_adapter_trains_through_the_client(adapter_command, trainer_data):
    _, manifest_path = trainer_data
    handle = exttrainer.ExternalTrainer(adapter_command, manifest_path,
                                        checkpoint="facebook/deit-tiny-patch16-224",
                                        timeout=60)
    try:
        handle.init(TrainConfig(learning_rate=0.5, batch_size=16, seed=5))
        assert handle.manifest["size_mb"] == 23
        before = handle.train(0)
        after = handle.train(60)
        assert after > before  # the fixture task is learnable
        report = handle.evaluate_test()
        f1s = [report.per_class[l].f1 for l in report.per_class]
        assert report.macro_f1 == pytest.approx(sum(f1s) / 3, abs=1e-9)
    finally:
        handle.shutdown()


def test_sweep_drives_the_adapter_end_to_end(adapter_command, trainer_data, tmp_path):
    data, _ = trainer_data
    import shlex
    command = " ".join(shlex.quote(part) for part in adapter_command)
    plan = sweep.ExperimentPlan(
        trainer_specs=(sweep.TrainerSpec(
            name="resnet-18", kind="external", command=command,
            checkpoint="microsoft/resnet-18"),),
        ladder_sizes=(8, 16), seeds=(0,), fine_tune_epochs=40,
    )
    tuned = {"resnet-18": TrainConfig(learning_rate=0.5, batch_size=16, seed=1)}
    report = sweep.run_sweep(plan, data, tuned, rundir=tmp_path, workers=2)
    assert report.failures == ()
    assert len(report.records) == 2
    assert (tmp_path / "report.csv").exists()
    for record in report.records:
        assert 0.0 <= record.report.macro_f1 <= 1.0
