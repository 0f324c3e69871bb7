import numpy as np
import pytest

from labbench.exceptions import OracleError
from labbench.sampling import (Budget, Domain, GwassConfig, SampleSet, allocate,
                               coarse_phase, interval_weights, run_gwass, uniform_sweep)


class CountingOracle():
    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, x):
        self.calls += 1
        return self.fn(x)


def logistic(x, center=2.5, width=0.1):
    return 1 / (1 + np.exp(-(x - center) / width))


def test_uniform_sweep():
    s = uniform_sweep(lambda x: x,Domain(0,5),2)
    np.testing.assert_array_equal(s.x,[0,5])
    s = uniform_sweep(lambda x: x,Domain(0,4),5)
    np.testing.assert_array_equal(s.x,[0,1,2,3,4])
    oracle = CountingOracle(lambda x: x)
    s = uniform_sweep(oracle,Domain(0,1),11)
    np.testing.assert_allclose(s.y,s.x)
    assert oracle.calls == 11 == s.oracle_calls
    with pytest.raises(ValueError):
        uniform_sweep(lambda x: x,Domain(0,1),1)


def test_domain_and_budget():
    with pytest.raises(ValueError):
        Domain(1,1)
    with pytest.raises(ValueError):
        Budget(3)
    with pytest.raises(ValueError):
        Budget(100,0.0)
    with pytest.raises(ValueError):
        Budget(4,0.99)
    with pytest.raises(ValueError):
        GwassConfig(epsilon=0)
    with pytest.raises(ValueError):
        GwassConfig(allocation='greedy')
    b = Budget(100,0.2)
    assert (b.n_coarse,b.n_fine) == (20,80)
    assert Budget(100,0.01).n_coarse == 2


def test_coarse_phase():
    s = coarse_phase(lambda x: 0.0,Domain(0,5),20)
    assert len(s) == 20
    assert len(np.diff(s.x)) == 19
    s = coarse_phase(lambda x: 0.0,Domain(0,5),2)
    np.testing.assert_array_equal(s.x,[0,5])


def test_interval_weights():
    flat = coarse_phase(lambda x: 1.0,Domain(0,5),20)
    np.testing.assert_allclose(interval_weights(flat,0.01),np.full(19,1 / 19))
    line = coarse_phase(lambda x: 2 * x,Domain(0,5),20)
    np.testing.assert_allclose(interval_weights(line,0.01),np.full(19,1 / 19))

    # a step of height 3 inside interval 7
    x = np.linspace(0,5,20)
    y = np.where(np.arange(20) > 7,3.0,0.0)
    p = interval_weights(SampleSet(np.column_stack((x,y)),20),0.01)
    np.testing.assert_allclose(p[7],1 / (1 + 18 * 0.01 / 19))
    np.testing.assert_allclose(p.sum(),1,atol=1e-12)
    assert np.all(p > 0)


def test_allocate():
    rng = np.random.default_rng(0)
    assert allocate([1.0],37,rng).tolist() == [37]
    assert allocate([1.0,0,0,0],80,rng).tolist() == [80,0,0,0]
    counts = np.array([allocate([0.25] * 4,80,np.random.default_rng(seed))
                       for seed in range(1000)])
    assert np.all(counts.sum(axis=1) == 80)
    np.testing.assert_allclose(counts.mean(axis=0),20,atol=1)
    with pytest.raises(ValueError):
        allocate([0.5,0.4],10,rng)


def test_allocate_is_seeded():
    p = np.array([0.1,0.2,0.3,0.4])
    a = allocate(p,80,np.random.default_rng(7))
    b = allocate(p,80,np.random.default_rng(7))
    np.testing.assert_array_equal(a,b)


def test_largest_remainder():
    rng = np.random.default_rng(0)
    counts = allocate(np.full(19,1 / 19),80,rng,'largest_remainder')
    assert counts.sum() == 80
    assert set(counts.tolist()) == {4,5}
    assert allocate([0.5,0.25,0.25],3,rng,'largest_remainder').tolist() == [1,1,1]


@pytest.mark.parametrize('allocation',['multinomial','largest_remainder'])
@pytest.mark.parametrize('stratified',[True,False])
def test_budget_is_exact(allocation, stratified):
    for total in (4,5,17,100,250):
        for seed in range(5):
            oracle = CountingOracle(logistic)
            cfg = GwassConfig(seed=seed,allocation=allocation,stratified=stratified)
            s = run_gwass(oracle,Domain(0,5),Budget(total,0.2),cfg)
            assert oracle.calls == total == s.oracle_calls == len(s)
            assert s.x[0] == 0 and s.x[-1] == 5
            assert np.all(np.diff(s.x) > 0)


def test_deterministic():
    cfg = GwassConfig(seed=11)
    a = run_gwass(logistic,Domain(0,5),Budget(100),cfg)
    b = run_gwass(logistic,Domain(0,5),Budget(100),cfg)
    np.testing.assert_array_equal(a.points,b.points)


def test_flat_oracle_is_uniform():
    for allocation, total in (('largest_remainder',1000),('multinomial',10000)):
        cfg = GwassConfig(seed=42,allocation=allocation)
        s = run_gwass(lambda x: 0.0,Domain(0,5),Budget(total,0.2),cfg)
        counts, _ = np.histogram(s.x,bins=10,range=(0,5))
        np.testing.assert_allclose(counts,total / 10,rtol=0.2)


def test_concentrates_on_step():
    s = run_gwass(logistic,Domain(0,5),Budget(100,0.2),GwassConfig(seed=42))
    coarse_x = np.linspace(0,5,20)
    fine = s.x[~np.isin(s.x,coarse_x)]
    assert len(fine) == 80
    assert np.mean((fine >= 2.0) & (fine <= 3.0)) >= 0.6


def test_density_follows_gradient():
    # y = x^2 has a gradient growing with x
    counts = np.zeros(19)
    coarse_x = np.linspace(0,1,20)
    for seed in range(1000):
        s = run_gwass(lambda x: x * x,Domain(0,1),Budget(100,0.2),GwassConfig(seed=seed))
        fine = s.x[~np.isin(s.x,coarse_x)]
        counts += np.histogram(fine,bins=coarse_x)[0]
    means = counts / 1000
    assert np.all(np.diff(means) >= -0.2)
    assert means[-1] > means[0]


def test_oracle_failure():
    def broken(x):
        if x > 2:
            raise RuntimeError('meter offline')
        return x
    with pytest.raises(OracleError) as info:
        run_gwass(broken,Domain(0,5),Budget(100))
    assert info.value.x > 2
    assert isinstance(info.value.cause,RuntimeError)
