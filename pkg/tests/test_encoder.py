import pytest
import torch

from saldepth import Backbone, EncoderConfig, TwoBranchEncoder

from fdcheck import check_input_grad


def _tiny_encoder(size=64, depth=True, seed=0):
    torch.manual_seed(seed)
    return TwoBranchEncoder(EncoderConfig(backbone=Backbone.TINY, input_size=size),
                            include_depth_branch=depth)


class TestShapes:
    def test_tiny_level_shapes(self):
        enc = _tiny_encoder(64)
        pyr = enc(torch.rand(2, 3, 64, 64))
        assert pyr.f1.shape == (2, 8, 64, 64)
        assert pyr.f2.shape == (2, 16, 32, 32)
        assert pyr.f3s.shape == (2, 32, 16, 16)
        assert pyr.f4s.shape == (2, 64, 8, 8)
        assert pyr.f5s.shape == (2, 64, 4, 4)
        assert pyr.f5d.shape == (2, 64, 4, 4)

    def test_vgg19_style_level_shapes(self):
        torch.manual_seed(1)
        enc = TwoBranchEncoder(EncoderConfig(backbone=Backbone.VGG19_STYLE, input_size=256))
        pyr = enc(torch.rand(1, 3, 256, 256))
        # standard VGG19 stage layout: channels per stage and halving spatial sizes
        expected = {
            "f1": (64, 256, 256), "f2": (128, 128, 128),
            "f3s": (256, 64, 64), "f4s": (512, 32, 32), "f5s": (512, 16, 16),
            "f3d": (256, 64, 64), "f4d": (512, 32, 32), "f5d": (512, 16, 16),
        }
        for name, shape in expected.items():
            assert tuple(getattr(pyr, name).shape[1:]) == shape, name

    def test_determinism(self):
        enc = _tiny_encoder()
        x = torch.rand(1, 3, 64, 64)
        a, b = enc(x), enc(x)
        for name in ("f1", "f2", "f3s", "f4s", "f5s", "f3d", "f4d", "f5d"):
            assert torch.equal(getattr(a, name), getattr(b, name))

    def test_wrong_size_raises(self):
        enc = _tiny_encoder(64)
        with pytest.raises(ValueError):
            enc(torch.rand(1, 3, 32, 32))

    def test_non_finite_input_raises(self):
        enc = _tiny_encoder(64)
        x = torch.rand(1, 3, 64, 64)
        x[0, 0, 0, 0] = float("nan")
        with pytest.raises(ValueError):
            enc(x)


class TestBranchStructure:
    def test_saliency_perturbation_leaves_depth_branch_untouched(self):
        enc = _tiny_encoder(seed=2)
        x = torch.rand(1, 3, 64, 64)
        before = enc(x)
        with torch.no_grad():
            enc.sal4[0].weight.add_(0.5)
        after = enc(x)
        for name in ("f3d", "f4d", "f5d"):
            assert torch.equal(getattr(before, name), getattr(after, name))
        assert not torch.equal(before.f4s, after.f4s)

    def test_depth_perturbation_leaves_saliency_branch_untouched(self):
        enc = _tiny_encoder(seed=3)
        x = torch.rand(1, 3, 64, 64)
        before = enc(x)
        with torch.no_grad():
            enc.dep3[0].weight.add_(0.5)
        after = enc(x)
        for name in ("f3s", "f4s", "f5s"):
            assert torch.equal(getattr(before, name), getattr(after, name))
        assert not torch.equal(before.f3d, after.f3d)

    def test_shared_root_feeds_both_branches(self):
        enc = _tiny_encoder(seed=4)
        x = torch.rand(1, 3, 64, 64)
        before = enc(x)
        with torch.no_grad():
            enc.stage1[0].weight.add_(0.5)
        after = enc(x)
        assert not torch.equal(before.f5s, after.f5s)
        assert not torch.equal(before.f5d, after.f5d)

    def test_depth_branch_optional(self):
        enc = _tiny_encoder(depth=False)
        pyr = enc(torch.rand(1, 3, 64, 64))
        assert pyr.f3d is None and pyr.f4d is None and pyr.f5d is None


class TestPretrainedWeights:
    def test_torchvision_style_state_dict_fills_all_stages(self, tmp_path):
        from saldepth.encoder import _VGG19_FEATURE_IDX, load_vgg19_features
        shapes = {
            0: (64, 3), 2: (64, 64), 5: (128, 64), 7: (128, 128),
            10: (256, 128), 12: (256, 256), 14: (256, 256), 16: (256, 256),
            19: (512, 256), 21: (512, 512), 23: (512, 512), 25: (512, 512),
            28: (512, 512), 30: (512, 512), 32: (512, 512), 34: (512, 512),
        }
        state = {}
        for idx, (out_c, in_c) in shapes.items():
            state[f"features.{idx}.weight"] = torch.full((out_c, in_c, 3, 3), float(idx))
            state[f"features.{idx}.bias"] = torch.full((out_c,), float(idx))
        path = tmp_path / "vgg19.pth"
        torch.save(state, path)

        torch.manual_seed(0)
        enc = TwoBranchEncoder(EncoderConfig(backbone=Backbone.VGG19_STYLE,
                                             input_size=64, pretrained_weights=path))
        # shared root takes stages 1-2; both branches start from stages 3-5
        assert enc.stage1[0].weight.unique().item() == 0.0
        assert enc.stage2[2].weight.unique().item() == 7.0
        for branch in (enc.sal3, enc.dep3):
            assert branch[0].weight.unique().item() == 10.0
        for branch in (enc.sal5, enc.dep5):
            assert branch[6].weight.unique().item() == 34.0

    def test_tiny_backbone_rejects_pretrained(self, tmp_path):
        from saldepth.encoder import load_vgg19_features
        enc = _tiny_encoder()
        with pytest.raises(ValueError):
            load_vgg19_features(enc, tmp_path / "whatever.pth")

    def test_missing_file_raises(self):
        torch.manual_seed(0)
        with pytest.raises(FileNotFoundError):
            TwoBranchEncoder(EncoderConfig(backbone=Backbone.VGG19_STYLE,
                                           input_size=64,
                                           pretrained_weights="/nonexistent.pth"))


def test_gradient_check_tiny_16():
    torch.manual_seed(5)
    enc = TwoBranchEncoder(EncoderConfig(backbone=Backbone.TINY, input_size=16)).double()
    readouts = None

    def scalar(x):
        nonlocal readouts
        pyr = enc(x)
        maps = [pyr.f1, pyr.f2, pyr.f3s, pyr.f4s, pyr.f5s, pyr.f3d, pyr.f4d, pyr.f5d]
        if readouts is None:
            gen = torch.Generator().manual_seed(0)
            readouts = [torch.randn(m.shape, generator=gen, dtype=torch.float64)
                        for m in maps]
        return sum((m * w).sum() for m, w in zip(maps, readouts))

    x0 = torch.rand(1, 3, 16, 16, dtype=torch.float64)
    err = check_input_grad(scalar, x0, max_elements=128)
    assert err < 1e-4
