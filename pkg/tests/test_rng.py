import numpy as np

from weakreset.rng import DeviceStream, Purpose, SeedPolicy, mix64, normals, stream_keys, uniforms

MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15


def mix_ref(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def uniform_ref(key: int, counter: int) -> float:
    h = mix_ref((key + (counter + 1) * GAMMA) & MASK)
    return ((h >> 11) + 0.5) * 2.0**-53


def test_mix64_matches_splitmix_finalizer():
    for z in (0, 1, 12345, MASK, 0xDEADBEEFCAFEBABE):
        assert int(mix64(np.array([z], dtype=np.uint64))[0]) == mix_ref(z)


def test_splitmix_first_outputs_from_seed_zero():
    # published SplitMix64 sequence for state 0
    assert mix_ref(GAMMA) == 0xE220A8397B1DCDAF
    assert mix_ref((2 * GAMMA) & MASK) == 0x6E789E6AA1B965F4


def test_uniforms_match_pure_python():
    keys = stream_keys(42, np.arange(5), Purpose.NOISE)
    counters = np.array([0, 1, 7, 1000, 2**40])
    got = uniforms(keys, counters)
    want = [uniform_ref(int(k), int(c)) for k, c in zip(keys, counters)]
    assert got.tolist() == want


def test_uniforms_open_interval():
    keys = stream_keys(0, np.arange(1000), Purpose.NOISE)
    u = uniforms(keys[:, None], np.arange(100)[None, :])
    assert u.min() > 0 and u.max() < 1


def test_normals_box_muller():
    key = int(stream_keys(3, 0, Purpose.NOISE)[0])
    z = normals(np.array([key]), np.array([10]))[0]
    u1, u2 = uniform_ref(key, 10), uniform_ref(key, 11)
    assert z == np.sqrt(-2 * np.log(u1)) * np.cos(2 * np.pi * u2)


def test_normal_moments():
    keys = stream_keys(9, np.arange(200_000), Purpose.NOISE)
    z = normals(keys, np.zeros(len(keys), dtype=np.int64))
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1) < 0.01


def test_streams_differ_by_purpose_and_index():
    k = [int(stream_keys(1, i, p)[0]) for i in range(3) for p in Purpose]
    assert len(set(k)) == len(k)


def test_seed_policy_is_pure():
    a, b = SeedPolicy(5), SeedPolicy(5)
    assert a.keys(np.arange(4), Purpose.D2D).tolist() == b.keys(np.arange(4), Purpose.D2D).tolist()
    assert SeedPolicy(6).keys(0, Purpose.D2D)[0] != a.keys(0, Purpose.D2D)[0]


def test_device_stream_advances():
    s = DeviceStream(int(stream_keys(0, 0, Purpose.NOISE)[0]))
    first = s.random()
    assert s.counter == 1
    z = s.standard_normal(3)
    assert s.counter == 7 and z.shape == (3,)
    again = DeviceStream(s.key)
    assert again.random() == first
