import dataclasses

import numpy as np
import pytest

from hazenet import params as ptree
from hazenet.errors import DimensionError, ParameterError
from hazenet.sr import SrConfig, init_sr, sr_forward, super_resolve
from hazenet.tensor import Tensor, absolute, finite_diff_check, sub, tsum

from helpers import probe


@pytest.fixture
def rng():
    return np.random.default_rng(77)


@pytest.mark.parametrize("scale,hr", [(2, (16, 16)), (3, (12, 18)), (4, (32, 32))])
def test_output_shape(rng, scale, hr):
    cfg = SrConfig(scale=scale, channels=8, num_hfab=1, hr_size=hr)
    lr = rng.uniform(size=(3,) + cfg.lr_size)
    assert sr_forward(lr, init_sr(cfg, 0), cfg).shape == (3,) + hr
    assert sr_forward(np.stack([lr, lr]), init_sr(cfg, 0), cfg).shape == (2, 3) + hr


def test_config_validation():
    with pytest.raises(ParameterError):
        SrConfig(scale=5)
    with pytest.raises(DimensionError):
        SrConfig(scale=3, hr_size=(32, 32))
    with pytest.raises(ParameterError):
        SrConfig(num_hfab=0)
    with pytest.raises(ParameterError):
        SrConfig(channels=2)
    assert SrConfig.full_scale(4).lr_size == (28, 28)
    assert SrConfig.full_scale(3).lr_size == (37, 37)


def test_input_shape_checked(rng):
    cfg = SrConfig()
    with pytest.raises(DimensionError):
        sr_forward(rng.uniform(size=(3, 9, 8)), init_sr(cfg, 0), cfg)


def test_zero_tail_gives_bias_constant(rng):
    cfg = SrConfig()
    p = init_sr(cfg, 3)
    p["tail"]["w"].data[:] = 0
    p["tail"]["b"].data[:] = [0.1, 0.4, 0.7]
    out = sr_forward(rng.uniform(size=(3, 8, 8)), p, cfg).data
    for c, v in enumerate([0.1, 0.4, 0.7]):
        assert np.all(out[c] == v)


def test_zero_head_and_tail_gives_bias_constant(rng):
    cfg = SrConfig()
    p = init_sr(cfg, 3)
    for part in ("head", "tail"):
        for t in ptree.flatten(p[part]).values():
            t.data[:] = 0
    p["tail"]["b"].data[:] = [0.2, 0.3, 0.9]
    out = sr_forward(rng.uniform(size=(3, 8, 8)), p, cfg).data
    np.testing.assert_array_equal(out, np.broadcast_to(np.array([0.2, 0.3, 0.9])[:, None, None], out.shape))


def test_init_deterministic():
    cfg = SrConfig()
    a, b, c = (ptree.snapshot(init_sr(cfg, s)) for s in (5, 5, 6))
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert any(not np.array_equal(a[k], c[k]) for k in a)


def test_forward_bounded_over_seeds(rng):
    cfg = SrConfig()
    lr = rng.uniform(size=(3, 8, 8))
    for seed in range(100):
        out = sr_forward(lr, init_sr(cfg, seed), cfg).data
        assert np.all(np.isfinite(out)) and np.max(np.abs(out)) < 100


@pytest.mark.parametrize("mode", ["global", "off"])
def test_hf_path_is_wired(rng, mode):
    cfg = SrConfig()
    lr = rng.uniform(size=(3, 8, 8))
    for seed in range(3):
        p = init_sr(cfg, seed)
        base = sr_forward(lr, p, cfg).data
        other = sr_forward(lr, p, dataclasses.replace(cfg, hf_mode=mode)).data
        assert np.max(np.abs(base - other)) > 0


def test_clamp_only_at_inference(rng):
    cfg = SrConfig()
    p = init_sr(cfg, 0)
    p["tail"]["b"].data[:] = [2.0, -1.0, 0.5]
    lr = rng.uniform(size=(3, 8, 8))
    raw = sr_forward(lr, p, cfg).data
    assert raw.max() > 1 and raw.min() < 0
    out = super_resolve(lr, p, cfg)
    assert out.min() >= 0 and out.max() <= 1


def test_l1_gradient_wrt_input(rng):
    cfg = SrConfig()
    p = init_sr(cfg, 11)
    target = Tensor(rng.uniform(size=(3, 32, 32)))
    lr = rng.uniform(size=(3, 8, 8))
    assert finite_diff_check(lambda t: tsum(absolute(sub(sr_forward(t, p, cfg), target))), lr) < 1e-4


def test_l1_gradient_wrt_parameters(rng):
    cfg = SrConfig()
    p = init_sr(cfg, 12)
    lr = Tensor(rng.uniform(size=(3, 8, 8)))
    target = Tensor(rng.uniform(size=(3, 32, 32)))
    for name in ("hfab/0/hf/1/conv2/w", "down/1/conv1/w", "up/0/conv1/b", "head/w"):
        loss = probe(p, name, lambda: tsum(absolute(sub(sr_forward(lr, p, cfg), target))))
        base = ptree.flatten(p)[name].data
        idx = np.random.default_rng(0).choice(base.size, size=min(12, base.size), replace=False)
        assert finite_diff_check(loss, base, coords=idx) < 1e-4
