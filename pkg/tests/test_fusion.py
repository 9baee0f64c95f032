"""Late fusion: weighted score sums, guided/unguided equivalences, tuning."""

import numpy as np
import pytest

from fgbg.datasets import AnnotatedSample
from fgbg.errors import ConfigError, DataError, NoBoxesError
from fgbg.evaluation import topk_accuracy
from fgbg.fusion import (
    FusionMember,
    FusionSpec,
    fuse_scores,
    guided_fuse,
    guided_member_scores,
    tune_weights,
    unguided_fuse,
)
from fgbg.geometry import Box
from fgbg.nn import LayerSpec, Network
from fgbg.proposals import ScoredBox


def make_net(categories=4, input_size=16, seed=0):
    specs = [
        LayerSpec(kind="conv", out_channels=4, kernel=3, pad=1),
        LayerSpec(kind="relu"),
        LayerSpec(kind="maxpool", kernel=2),
        LayerSpec(kind="fc", features=categories),
    ]
    net = Network(specs, input_size=input_size, in_channels=3, dtype=np.float32)
    net.init_params(seed)
    return net


def make_samples(n=4, size=40, seed=5):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        img = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
        out.append(
            AnnotatedSample(
                image=img,
                boxes=[Box(6, 8, 26, 30)],
                label=f"c{i % 2}",
                source_id=f"s{i:02d}",
            )
        )
    return out


class TestFuseScores:
    def test_zero_weight_member_is_neutral(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
        assert np.allclose(fuse_scores([a, b], [1.0, 0.0]), a)
        fused = fuse_scores([a, b], [0.7, 0.3])
        with_zero = fuse_scores([a, b, rng.normal(size=(6, 4))], [0.7, 0.3, 0.0])
        assert np.allclose(fused, with_zero)

    def test_argmax_invariant_under_weight_rescale(self):
        rng = np.random.default_rng(1)
        mats = [rng.normal(size=(50, 5)) for _ in range(3)]
        w = [0.2, 0.5, 0.3]
        base = fuse_scores(mats, w).argmax(axis=1)
        scaled = fuse_scores(mats, [7.0 * x for x in w]).argmax(axis=1)
        assert (base == scaled).all()

    def test_exhaustive_random_fixtures(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            m = int(rng.integers(1, 4))
            mats = [rng.normal(size=(8, 3)) for _ in range(m)]
            w = rng.uniform(0.1, 2.0, size=m)
            labels = rng.integers(0, 3, 8)
            t1 = topk_accuracy(fuse_scores(mats, w), labels, 1)
            t2 = topk_accuracy(fuse_scores(mats, 3.7 * w), labels, 1)
            assert t1 == t2
            padded = topk_accuracy(
                fuse_scores(mats + [rng.normal(size=(8, 3))], list(w) + [0.0]),
                labels, 1,
            )
            assert t1 == padded


class TestSpecValidation:
    def test_needs_members(self):
        with pytest.raises(ConfigError):
            FusionSpec(members=())

    def test_duplicate_member_role_rejected(self):
        m = FusionMember("a", "fg", 1.0)
        with pytest.raises(ConfigError):
            FusionSpec(members=(m, m))

    def test_unknown_role(self):
        with pytest.raises(ConfigError):
            FusionMember("a", "side", 1.0)


class TestGuided:
    def test_single_member_weight_one_equals_standalone(self):
        net = make_net()
        samples = make_samples()
        spec = FusionSpec(members=(FusionMember("n", "fg", 1.0),), mode="guided")
        fused, mats = guided_fuse(spec, {"n": net}, samples)
        standalone = guided_member_scores(FusionMember("n", "fg", 1.0), net, samples)
        assert (fused == standalone).all()

    def test_zero_weight_second_member(self):
        net_a, net_b = make_net(seed=0), make_net(seed=1)
        samples = make_samples()
        spec = FusionSpec(
            members=(FusionMember("a", "fg", 1.0), FusionMember("b", "bg", 0.0)),
            mode="guided",
        )
        fused, _ = guided_fuse(spec, {"a": net_a, "b": net_b}, samples)
        solo, _ = guided_fuse(
            FusionSpec(members=(FusionMember("a", "fg", 1.0),), mode="guided"),
            {"a": net_a},
            samples,
        )
        assert np.allclose(fused, solo)

    def test_missing_boxes_error(self):
        net = make_net()
        boxless = AnnotatedSample(
            image=np.zeros((20, 20, 3), dtype=np.uint8), boxes=[], label="c0",
            source_id="s",
        )
        spec = FusionSpec(members=(FusionMember("n", "fg", 1.0),), mode="guided")
        with pytest.raises(NoBoxesError):
            guided_fuse(spec, {"n": net}, [boxless])


class TestUnguided:
    def test_gt_box_proposals_equal_guided_center_protocol(self):
        # proposals equal to the ground-truth box repeated: unguided fusion
        # reduces to guided fusion once both use the center protocol
        net_fg, net_bg = make_net(seed=2), make_net(seed=3)
        samples = make_samples()
        proposals = {
            s.source_id: [ScoredBox(s.boxes[0], 1.0)] * 5 for s in samples
        }
        uspec = FusionSpec(
            members=(FusionMember("f", "fg", 0.6), FusionMember("b", "bg", 0.4)),
            mode="unguided",
            proposal_k=5,
        )
        fused_u, _ = unguided_fuse(
            uspec, {"f": net_fg, "b": net_bg}, samples, proposals
        )
        gspec = FusionSpec(
            members=(FusionMember("f", "fg", 0.6), FusionMember("b", "bg", 0.4)),
            mode="guided",
        )
        fused_g, _ = guided_fuse(
            gspec, {"f": net_fg, "b": net_bg}, samples, protocol="center"
        )
        assert np.allclose(fused_u, fused_g, atol=1e-9)

    def test_single_orig_member_ignores_proposals(self):
        net = make_net(seed=4)
        samples = make_samples()
        spec = FusionSpec(members=(FusionMember("o", "orig", 1.0),), mode="unguided")
        with_props = {
            s.source_id: [ScoredBox(Box(0, 0, 5, 5), 1.0)] for s in samples
        }
        a, _ = unguided_fuse(spec, {"o": net}, samples, with_props)
        b, _ = unguided_fuse(spec, {"o": net}, samples, {})
        assert (a == b).all()

    def test_empty_proposals_with_fg_member_errors(self):
        net = make_net()
        samples = make_samples(n=1)
        spec = FusionSpec(members=(FusionMember("f", "fg", 1.0),), mode="unguided")
        with pytest.raises(DataError):
            unguided_fuse(spec, {"f": net}, samples, {})

    def test_proposal_average_is_explicit_mean(self):
        # oracle: per-proposal forward + arithmetic mean
        from fgbg.fusion import unguided_member_scores, _predict_views, _proposal_views

        net = make_net(seed=6)
        samples = make_samples(n=2)
        plist = [
            ScoredBox(Box(2, 2, 20, 20), 0.9),
            ScoredBox(Box(10, 10, 36, 36), 0.8),
            ScoredBox(Box(0, 0, 40, 40), 0.7),
        ]
        proposals = {s.source_id: plist for s in samples}
        member = FusionMember("f", "fg", 1.0)
        got = unguided_member_scores(member, net, samples, proposals, proposal_k=3)
        for i, s in enumerate(samples):
            views = _proposal_views("fg", s, plist, 3)
            singles = [_predict_views(net, [v], "center")[0] for v in views]
            assert np.allclose(got[i], np.mean(singles, axis=0), atol=1e-6)


class TestTuneWeights:
    def test_single_member_weight_one(self):
        rng = np.random.default_rng(0)
        assert tune_weights([rng.normal(size=(10, 3))], rng.integers(0, 3, 10)) == (1.0,)

    def test_informative_beats_noise(self):
        rng = np.random.default_rng(1)
        n, c = 120, 4
        labels = rng.integers(0, c, n)
        informative = np.zeros((n, c))
        informative[np.arange(n), labels] = 2.0
        informative += rng.normal(size=(n, c)) * 0.3
        noise = rng.normal(size=(n, c))
        weights = tune_weights([informative, noise], labels, grid_step=0.1)
        assert weights[0] >= weights[1]

    def test_duplicated_members_tie_to_equal_weights(self):
        rng = np.random.default_rng(2)
        labels = rng.integers(0, 3, 30)
        mat = np.zeros((30, 3))
        mat[np.arange(30), labels] = 1.0
        weights = tune_weights([mat, mat.copy()], labels, grid_step=0.25)
        assert weights == (0.5, 0.5)

    def test_empty_heldout_errors(self):
        with pytest.raises(DataError):
            tune_weights([np.zeros((0, 3))], np.zeros(0, dtype=int))
