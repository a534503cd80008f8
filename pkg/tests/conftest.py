import numpy as np
import pytest

from lepfer.data import SyntheticConfig, synth_generate
from lepfer.forest import TrainConfig, train_ls_rf
from lepfer.mesh import Shape, compute_mean_shape, get_scheme, triangulate


def jittered_shape(rng, scheme="ls49", scale=60.0, sigma=0.03, offset=(50.0, 40.0)):
    tpl = get_scheme(scheme).template
    pts = (tpl + rng.normal(0, sigma, tpl.shape)) * scale + np.asarray(offset)
    return Shape(pts, scheme)


@pytest.fixture(scope="session")
def mesh49():
    return triangulate(compute_mean_shape([Shape(get_scheme("ls49").template)]))


@pytest.fixture(scope="session")
def small_ds():
    return synth_generate(SyntheticConfig(n_subjects=4, samples_per_class=3, seed=11))


@pytest.fixture(scope="session")
def small_forest(small_ds):
    return train_ls_rf(small_ds, TrainConfig(n_trees=12), seed=4)
