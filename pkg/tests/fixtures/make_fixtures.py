"""Regenerate the committed fixture files: ``python3 tests/fixtures/make_fixtures.py``.

Inputs are integer patterns only, so the bytes do not depend on floating
point behaviour of the platform.
"""

import os

import numpy as np

from aprkit.build import apr_from_access, solve_levels
from aprkit.io import write_apr, write_volume

HERE = os.path.dirname(os.path.abspath(__file__))


def fixture_apr():
    target = np.ones((12, 16, 10), dtype=np.int8)
    target[2:5, 3:9, 1:4] = 4
    target[8:, 12:, 7:] = 3
    apr = apr_from_access(solve_levels(target))
    values = (np.arange(apr.n_particles) % 251).astype(np.float32) * np.float32(0.25)
    tree = (np.arange(apr.n_tree) % 13).astype(np.float32)
    return apr, values, tree


def fixture_volume():
    return (np.arange(5 * 6 * 7, dtype=np.uint32) * 997 % 65536).astype(np.uint16).reshape(5, 6, 7)


def write_all(directory=HERE):
    apr, values, tree = fixture_apr()
    write_apr(os.path.join(directory, "mixed.aprb"), apr, values, tree)
    write_volume(os.path.join(directory, "ramp_u16.raw"), fixture_volume(), "u16")


if __name__ == "__main__":
    write_all()
