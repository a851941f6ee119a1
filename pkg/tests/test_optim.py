import numpy as np
import pytest

from tftts.optim import Adam, exponential_lr


def test_schedule_endpoints():
    assert exponential_lr(0, 100, decay_start=10) == 1e-3
    assert exponential_lr(9, 100, decay_start=10) == 1e-3
    assert exponential_lr(100, 100, decay_start=10) == pytest.approx(1e-5)
    assert exponential_lr(55, 100, decay_start=10) == pytest.approx(1e-4)
    assert exponential_lr(500, 100) == pytest.approx(1e-5)


def test_schedule_is_monotone():
    lrs = [exponential_lr(s, 200, decay_start=20) for s in range(201)]
    assert np.all(np.diff(lrs) <= 0)


def test_first_step_moves_by_lr():
    # bias correction makes the first update exactly lr * sign(g) (up to eps)
    p = {"w": np.array([1.0, -2.0])}
    Adam(eps=1e-12, l2_weight=0.0).step(p, {"w": np.array([0.5, -3.0])}, 0.1)
    assert np.allclose(p["w"], [0.9, -1.9])


def test_zero_gradient_only_l2_moves_params():
    p = {"w": np.array([1.0, -2.0])}
    Adam(l2_weight=0.0).step(p, {"w": np.zeros(2)}, 0.1)
    assert np.array_equal(p["w"], [1.0, -2.0])
    q = {"w": np.array([1.0, -2.0])}
    Adam(l2_weight=1e-2).step(q, {"w": np.zeros(2)}, 0.1)
    assert np.all(np.abs(q["w"]) < [1.0, 2.0])


def test_matches_reference_recursion(rng):
    p = {"w": rng.standard_normal(3)}
    ref = p["w"].copy()
    opt = Adam(beta1=0.8, beta2=0.99, eps=1e-6, l2_weight=1e-3)
    m = v = np.zeros(3)
    for t in range(1, 6):
        g = rng.standard_normal(3)
        opt.step(p, {"w": g}, 0.01)
        g = g + 1e-3 * ref
        m = 0.8 * m + 0.2 * g
        v = 0.99 * v + 0.01 * g * g
        ref = ref - 0.01 * (m / (1 - 0.8**t)) / (np.sqrt(v / (1 - 0.99**t)) + 1e-6)
    assert np.allclose(p["w"], ref, atol=1e-14)


def test_state_round_trip(rng):
    p = {"w": rng.standard_normal(4)}
    a = Adam()
    a.step(p, {"w": rng.standard_normal(4)}, 1e-3)
    b = Adam()
    b.load_state_dict(a.state_dict())
    g = {"w": rng.standard_normal(4)}
    pa, pb = {"w": p["w"].copy()}, {"w": p["w"].copy()}
    a.step(pa, g, 1e-3)
    b.step(pb, g, 1e-3)
    assert np.array_equal(pa["w"], pb["w"])
