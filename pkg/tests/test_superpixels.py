import numpy as np
import pytest

from entity_refine.masks import BinaryMask, MaskError
from entity_refine.superpixels import (DensityMap, SuperpixelMap, Region,
                                       default_felz_params, density_map,
                                       felzenszwalb, mask_density)
from helpers import rect


def _labels_of(image, **kw):
    return felzenszwalb(image, **kw).labels


def test_constant_image_single_region():
    image = np.full((16, 16, 3), 0.3)
    sp = felzenszwalb(image, min_size=1)
    assert sp.num_regions == 1
    assert (sp.labels == 0).all()
    assert sp.regions[0].area == 256


def test_two_halves():
    image = np.zeros((16, 16, 3))
    image[:, 8:] = 1.0
    sp = felzenszwalb(image, scale_k=50.0, sigma=0.0, min_size=10)
    assert sp.num_regions == 2
    left = sp.labels[:, :8]
    right = sp.labels[:, 8:]
    assert (left == left[0, 0]).all()
    assert (right == right[0, 0]).all()
    assert left[0, 0] != right[0, 0]
    # first-pixel-order labeling: pixel (0,0) carries label 0
    assert left[0, 0] == 0


def test_partition_and_min_size(rng):
    for _ in range(5):
        image = rng.random((24, 24, 3))
        min_size = 9
        sp = felzenszwalb(image, scale_k=100.0, min_size=min_size)
        areas = np.bincount(sp.labels.ravel())
        assert areas.sum() == 24 * 24
        assert len(areas) == sp.num_regions
        assert (areas >= min_size).all()
        assert sorted(r.area for r in sp.regions) == sorted(areas.tolist())


def test_determinism(rng):
    image = rng.random((20, 20, 3))
    a = _labels_of(image, scale_k=120.0, min_size=5)
    b = _labels_of(image, scale_k=120.0, min_size=5)
    assert np.array_equal(a, b)


def test_region_stats():
    image = np.zeros((8, 8, 3))
    image[:, 4:] = 1.0
    sp = felzenszwalb(image, scale_k=50.0, sigma=0.0, min_size=4)
    assert sp.num_regions == 2
    r0 = sp.regions[0]
    assert r0.area == 32
    assert r0.centroid == (3.5, 1.5)
    assert r0.mean_color == (0.0, 0.0, 0.0)
    assert sp.regions[1].mean_color == (1.0, 1.0, 1.0)


def test_parameter_validation():
    image = np.zeros((8, 8, 3))
    with pytest.raises(MaskError):
        felzenszwalb(np.zeros((8, 8)))
    with pytest.raises(MaskError):
        felzenszwalb(np.zeros((1, 8, 3)))
    with pytest.raises(MaskError):
        felzenszwalb(image, scale_k=0)
    with pytest.raises(MaskError):
        felzenszwalb(image, min_size=0)


# -- density --------------------------------------------------------------

def _two_region_map():
    # areas 10 and 30 on a 4x10 raster: first row is region 0
    labels = np.ones((4, 10), dtype=np.int64)
    labels[0, :] = 0
    regions = (Region(10, (0.0, 4.5), (0.0, 0.0, 0.0)),
               Region(30, (2.0, 4.5), (1.0, 1.0, 1.0)))
    return SuperpixelMap(labels, regions)


def test_density_single_region():
    sp = SuperpixelMap(np.zeros((4, 4), dtype=np.int64),
                       (Region(16, (1.5, 1.5), (0.5, 0.5, 0.5)),))
    d = density_map(sp)
    assert np.allclose(d.values, 0.5)


def test_density_two_region_values():
    d = density_map(_two_region_map())
    # mean area 20: w = 1/(1+10/20) and 1/(1+30/20)
    assert d.values[0, 0] == pytest.approx(2 / 3)
    assert d.values[1, 0] == pytest.approx(0.4)
    # piecewise constant, smaller region strictly denser
    assert len(np.unique(d.values)) == 2
    assert d.values[0, 0] > d.values[1, 0]
    assert ((0 < d.values) & (d.values < 1)).all()


def test_mask_density_values():
    d = density_map(_two_region_map())
    small = BinaryMask.from_dense(np.arange(40).reshape(4, 10) < 10)
    assert mask_density(d, small) == pytest.approx(2 / 3)
    # 10 px in each region
    both = rect(4, 10, 0, 0, 1, 4)
    assert mask_density(d, BinaryMask.from_dense(both)) == pytest.approx(
        (2 / 3 + 0.4) / 2)


def test_mask_density_uniform_and_errors():
    d = DensityMap(np.full((4, 10), 0.5))
    m = BinaryMask.from_dense(rect(4, 10, 1, 1, 2, 2))
    assert mask_density(d, m) == 0.5
    with pytest.raises(MaskError):
        mask_density(d, BinaryMask.empty(4, 10))
    with pytest.raises(MaskError):
        mask_density(d, BinaryMask.empty(5, 5))


def test_default_params_scaling():
    assert default_felz_params(512, 512) == (200.0, 0.8, 100)
    assert default_felz_params(1024, 600) == (200.0, 0.8, 100)
    _, _, min_size = default_felz_params(96, 96)
    assert min_size == round(100 * 96 / 512)
    assert default_felz_params(2, 2)[2] >= 1
