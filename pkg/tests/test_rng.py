import numpy as np
import pytest

from longliq import _fallback
from longliq.backend import compiled

# Philox4x64-10 known-answer vectors: (counter words, key words, output words)
KAT = [
    ((0, 0, 0, 0), (0, 0),
     (0x16554d9eca36314c, 0xdb20fe9d672d0fdc, 0xd7e772cee186176b, 0x7e68b68aec7ba23b)),
    ((2 ** 64 - 1,) * 4, (2 ** 64 - 1,) * 2,
     (0x87b092c3013fe90b, 0x438c3c67be8d0224, 0x9cc7d7c69cd777b6, 0xa09caebf594f0ba0)),
    ((0x243f6a8885a308d3, 0x13198a2e03707344, 0xa4093822299f31d0, 0x082efa98ec4e6c89),
     (0x452821e638d01377, 0xbe5466cf34e90c6c),
     (0xa528f45403e61d95, 0x38c72dbd566e9788, 0xa5a1610e72fd18b5, 0x57bd43b5e52b7fe6)),
]

impls = [pytest.param(_fallback, id="python")]
if compiled is not None:
    impls.append(pytest.param(compiled, id="compiled"))


@pytest.mark.parametrize("mod", impls)
@pytest.mark.parametrize("ctr,key,expect", KAT)
def test_known_answers(mod, ctr, key, expect):
    assert tuple(mod.philox_block(*ctr, *key)) == expect


@pytest.mark.parametrize("mod", impls)
def test_normals_deterministic_and_sliceable(mod):
    full = mod.normals(9, 0, 0, 3, 0, 37)
    assert np.array_equal(full, mod.normals(9, 0, 0, 3, 0, 37))
    # any window of steps or paths reproduces the same numbers
    assert np.array_equal(full[:, 5:29], mod.normals(9, 0, 0, 3, 5, 24))
    assert np.array_equal(full[1:], mod.normals(9, 0, 1, 2, 0, 37))


@pytest.mark.parametrize("mod", impls)
def test_streams_and_paths_differ(mod):
    a = mod.normals(1, 0, 0, 2, 0, 16)
    b = mod.normals(1, 1, 0, 2, 0, 16)
    assert not np.any(a == b)
    assert not np.any(a[0] == a[1])
    assert not np.any(a == mod.normals(2, 0, 0, 2, 0, 16))


@pytest.mark.parametrize("mod", impls)
def test_normal_moments(mod):
    z = mod.normals(3, 0, 0, 50, 0, 4000).ravel()
    n = z.size
    assert abs(z.mean()) < 4 / np.sqrt(n)
    assert abs(z.var() - 1) < 4 * np.sqrt(2 / n)
    assert abs(np.mean(z ** 3)) < 4 * np.sqrt(15 / n)
    assert abs(np.mean(z ** 4) - 3) < 4 * np.sqrt(96 / n)


def test_zero_steps():
    assert _fallback.normals(1, 0, 0, 2, 0, 0).shape == (2, 0)
