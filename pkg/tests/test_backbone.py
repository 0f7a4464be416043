import numpy as np
import pytest

from cmsanet import autodiff as ad
from cmsanet.autodiff import Tensor
from cmsanet.backbone import BackboneParams, backbone_forward
from cmsanet.errors import DimensionError

from conftest import fd_check, param


def test_default_shapes(rng):
    p = BackboneParams.init((16, 24, 32), rng)
    outs = backbone_forward(Tensor(rng.uniform(size=(3, 16, 16))), p)
    assert [o.shape for o in outs] == [(16, 4, 4), (24, 4, 4), (32, 4, 4)]


def test_non_square_shapes(rng):
    p = BackboneParams.init((2, 3, 4), rng)
    outs = backbone_forward(Tensor(rng.uniform(size=(3, 8, 12))), p)
    assert [o.shape for o in outs] == [(2, 2, 3), (3, 2, 3), (4, 2, 3)]


def test_zero_weights_give_zero(rng):
    p = BackboneParams.init((4, 5, 6), rng)
    for t in p.tensors().values():
        t.data[:] = 0
    for o in backbone_forward(Tensor(rng.uniform(size=(3, 8, 8))), p):
        assert not o.data.any()


def test_outputs_nonnegative(rng):
    p = BackboneParams.init((4, 5, 6), rng)
    for o in backbone_forward(Tensor(rng.uniform(size=(3, 8, 8))), p):
        assert np.all(o.data >= 0)


@pytest.mark.parametrize("hw", [(6, 8), (8, 10), (3, 4)])
def test_indivisible_extent(rng, hw):
    p = BackboneParams.init((2, 2, 2), rng)
    with pytest.raises(DimensionError):
        backbone_forward(Tensor(np.zeros((3,) + hw)), p)


def test_levels_are_hierarchical(rng):
    # changing block2 must leave level 1 untouched and move levels 2 and 3
    p = BackboneParams.init((4, 5, 6), rng)
    img = Tensor(rng.uniform(size=(3, 8, 8)))
    a = backbone_forward(img, p)
    p.convs["block2"][1].data += 0.5
    b = backbone_forward(img, p)
    assert a[0].data.tobytes() == b[0].data.tobytes()
    assert not np.array_equal(a[1].data, b[1].data)
    assert not np.array_equal(a[2].data, b[2].data)


def test_seeded_init_is_deterministic():
    a = BackboneParams.init((4, 5, 6), np.random.default_rng(3)).tensors()
    b = BackboneParams.init((4, 5, 6), np.random.default_rng(3)).tensors()
    assert a.keys() == b.keys()
    for k in a:
        assert a[k].data.tobytes() == b[k].data.tobytes()


def test_backbone_grad(rng):
    p = BackboneParams.init((3, 4, 5), rng)
    for _, b in p.convs.values():
        b.data[:] = rng.normal(scale=0.1, size=b.shape)
    img = param(rng.uniform(size=(3, 8, 8)))
    w = [rng.normal(size=(c, 2, 2)) for c in (3, 4, 5)]

    def loss():
        outs = backbone_forward(img, p)
        total = ad.sum(ad.mul(outs[0], w[0]))
        for o, wi in zip(outs[1:], w[1:]):
            total = ad.add(total, ad.sum(ad.mul(o, wi)))
        return total

    fd_check(loss, dict(p.tensors(), image=img), 1e-4)
