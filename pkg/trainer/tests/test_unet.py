import pytest
import torch

from chmtrainer import ModelConfig, build_model, parameter_count


@pytest.mark.parametrize("channels,size", [(21, 32), (9, 64), (84, 16)])
def test_output_shape_matches_input(channels, size):
    model = build_model(ModelConfig(arch="deep", in_channels=channels))
    x = torch.randn(2, channels, size, size)
    assert model(x).shape == (2, 1, size, size)


def test_shallow_shape_and_fewer_parameters():
    deep = build_model(ModelConfig(arch="deep", in_channels=21))
    shallow = build_model(ModelConfig(arch="shallow", in_channels=21))
    x = torch.randn(1, 21, 32, 32)
    assert shallow(x).shape == (1, 1, 32, 32)
    assert parameter_count(deep) > parameter_count(shallow)


def test_channel_doubling_widths():
    cfg = ModelConfig(arch="deep", in_channels=9, base_width=32)
    assert cfg.widths == (32, 64, 128, 256)
    assert ModelConfig(arch="shallow", in_channels=9).widths == (32, 64, 128)


def test_rejects_bad_config_and_input():
    with pytest.raises(ValueError):
        ModelConfig(arch="huge", in_channels=21)
    with pytest.raises(ValueError):
        ModelConfig(arch="deep", in_channels=0)
    model = build_model(ModelConfig(arch="deep", in_channels=4))
    with pytest.raises(ValueError):
        model(torch.randn(1, 4, 12, 12))  # not divisible by 2^(levels-1)


def test_output_finite_on_random_batches():
    torch.manual_seed(0)
    model = build_model(ModelConfig(arch="shallow", in_channels=9))
    model.eval()
    with torch.no_grad():
        for _ in range(100):
            y = model(torch.randn(2, 9, 16, 16) * 10)
            assert torch.isfinite(y).all()
