"""Shared fixtures for the acceptance battery.

The trained-network fixtures are expensive (minutes); they are session
scoped and only built when an acceptance test requests them. Seeds and
budgets are pinned to the committed pilot calibration.
"""

from types import SimpleNamespace

import pytest

# pinned by pilot runs: corpus seed, per-kind training budgets
CORPUS_SEED = 42
NEUTRAL_CORPUS_SEED = 43
TRAIN_SEED = 1000
NEUTRAL_TRAIN_SEED = 1001
BUDGETS = {
    "fg": (1400, 450),
    "bg": (2400, 750),
    "orig": (1400, 450),
}
BATCH = 32
RATIO_THRESHOLDS = [0.5, 0.62, 0.74, 0.86, 0.98]


def _build_lab(root, synth_config, kinds, train_seed):
    from fgbg.datasets import build_variants, load_annotated
    from fgbg.loading import load_dataset
    from fgbg.nn.network import eval_size_for
    from fgbg.nn.optim import OptimConfig
    from fgbg.synth import write_corpus
    from fgbg.training import TrainConfig, load_train_split, train

    manifests = write_corpus(synth_config, CORPUS_SEED if synth_config.background_informative else NEUTRAL_CORPUS_SEED, root)
    build_variants(
        [manifests["train"], manifests["test"]], root, kinds=("fg", "bg", "hybrid")
    )
    size = eval_size_for(64)
    results = {}
    for kind in kinds:
        iters, decay = BUDGETS[kind]
        config = TrainConfig(
            kind=kind,
            iterations=iters,
            batch_size=BATCH,
            optim=OptimConfig(decay_every=decay),
            seed=train_seed,
        )
        dataset = load_train_split(root / kind / "train" / "manifest.jsonl", config)
        results[kind] = train(config, dataset)
    testsets = {
        k: load_dataset(root / k / "test" / "manifest.jsonl", image_size=size)
        for k in ("fg", "bg", "orig")
    }
    annotated = load_annotated(root / "orig" / "test" / "manifest.jsonl")
    return SimpleNamespace(
        root=root,
        synth=synth_config,
        results=results,
        nets={k: r.network for k, r in results.items()},
        testsets=testsets,
        annotated=annotated,
    )


@pytest.fixture(scope="session")
def predictive_lab(tmp_path_factory):
    """Full corpus + fg/bg/orig networks in the background-predictive regime."""
    from fgbg.synth import SynthConfig

    root = tmp_path_factory.mktemp("lab-predictive")
    return _build_lab(root, SynthConfig(), ("fg", "bg", "orig"), TRAIN_SEED)


@pytest.fixture(scope="session")
def neutral_lab(tmp_path_factory):
    """Background-neutral regime: texture family independent of category."""
    from fgbg.synth import SynthConfig

    root = tmp_path_factory.mktemp("lab-neutral")
    return _build_lab(
        root,
        SynthConfig(background_informative=False),
        ("bg",),
        NEUTRAL_TRAIN_SEED,
    )


@pytest.fixture(scope="session")
def predictive_scores(predictive_lab):
    """Ten-patch score matrices for the (net, testset) pairs the battery uses."""
    from fgbg.evaluation import predict_scores

    pairs = [("fg", "fg"), ("fg", "bg"), ("bg", "bg"), ("bg", "fg"), ("orig", "orig")]
    return {
        (nk, sk): predict_scores(predictive_lab.nets[nk], predictive_lab.testsets[sk])
        for nk, sk in pairs
    }
