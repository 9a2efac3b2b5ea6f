import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from aprkit.build import BuildParams, build_apr
from aprkit.conv import StencilPyramid, box_stencil, convolve_apr, gaussian_stencil
from aprkit.deconv import RLConfig, rl_apr
from aprkit.estimators import APRConverter, APRFilter, RichardsonLucy
from aprkit.reconstruct import reconstruct_full
from aprkit.tree import fill_tree

from helpers import blob_image, random_apr


def test_params_and_clone():
    est = APRConverter(E=0.05, smoothing_passes=1)
    assert est.get_params() == {"E": 0.05, "sigma_policy": None,
                                "gradient_policy": "central_diff", "smoothing_passes": 1}
    twin = clone(est)
    assert twin.get_params() == est.get_params() and twin is not est
    f = APRFilter(stencil=box_stencil(3)).set_params(pad_mode="zero")
    assert clone(f).pad_mode == "zero"
    assert clone(RichardsonLucy(iterations=7)).iterations == 7


def test_not_fitted():
    with pytest.raises(NotFittedError):
        APRConverter().transform(np.zeros((4, 4, 4)))
    with pytest.raises(NotFittedError):
        APRFilter().transform(np.zeros(3))
    with pytest.raises(NotFittedError):
        RichardsonLucy().predict(np.zeros(3))


def test_converter_matches_build(rng):
    vol = blob_image(rng, 32, blobs=3)
    est = APRConverter(E=0.1).fit(vol)
    apr, values = build_apr(vol, BuildParams(E=0.1))
    assert est.apr_.n_particles == apr.n_particles
    assert np.array_equal(est.values_, values)
    assert np.array_equal(est.transform(vol), values)
    rec = est.inverse_transform(est.values_)
    assert np.array_equal(rec, reconstruct_full(apr, values))
    assert est.cr_ >= 1.0
    with pytest.raises(ValueError):
        est.transform(np.zeros((8, 8, 8)))


def test_filter_matches_library(rng):
    apr = random_apr(rng, (16, 16, 16))
    values = rng.random(apr.n_particles)
    w = gaussian_stencil(1.0, 5)
    got = APRFilter(stencil=w, pad_mode="zero").fit(apr).transform(values)
    pyr = StencilPyramid.restricted(w, apr.l_min, apr.l_max)
    assert np.array_equal(got, convolve_apr(apr, values, pyr, fill_tree(apr, values), "zero"))
    with pytest.raises(TypeError):
        APRFilter().fit(np.zeros((4, 4, 4)))
    with pytest.raises(ValueError):
        APRFilter(pyramid="bogus").fit(apr)
    with pytest.raises(ValueError):
        APRFilter().fit(apr).transform(values[:-1])


def test_rl_matches_library(rng):
    apr = random_apr(rng, (16, 16, 16))
    values = rng.random(apr.n_particles) + 0.1
    w = gaussian_stencil(1.0, 3)
    est = RichardsonLucy(psf=w, iterations=4).fit(apr)
    expect = rl_apr(apr, values, RLConfig(4, w))
    assert np.array_equal(est.predict(values), expect)
    assert np.array_equal(est.transform(values), expect)
