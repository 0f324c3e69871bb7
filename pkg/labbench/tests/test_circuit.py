import numpy as np
import pytest

from labbench.circuit import (CircuitParams, MosfetParams, OperatingPoint, _square_law,
                              bisect_vout, nmos_current, node_residual, pmos_current,
                              solve_vout, transfer_curve)
from labbench.exceptions import ConfigError, InvalidOperatingPointError

c = CircuitParams()


def test_nmos_current():
    p = MosfetParams(2.0,0.02,0.0)
    assert nmos_current(0.0,1.0,p) == 0
    np.testing.assert_allclose(nmos_current(3.0,3.0,p),0.01)
    assert nmos_current(3.0,0.0,p) == 0


def test_pmos_current():
    p = MosfetParams(1.0,0.02,0.0)
    assert pmos_current(0.5,1.0,p) == 0
    np.testing.assert_allclose(pmos_current(3.0,3.0,p),0.04)
    assert pmos_current(3.0,0.0,p) == 0


def test_region_boundary_is_continuous():
    for p in (c.nmos,c.pmos,MosfetParams(0.5,0.1,0.05)):
        for vov in (0.1,1.0,2.5):
            for delta in (1e-3,1e-6,1e-9):
                below = _square_law(vov,vov - delta,p)
                above = _square_law(vov,vov + delta,p)
                assert abs(above - below) < 10 * p.k * vov * delta + 1e-15


def test_invalid_params():
    with pytest.raises(ConfigError):
        MosfetParams(2.0,0.0)
    with pytest.raises(ConfigError):
        MosfetParams(-1.0,0.02)
    with pytest.raises(ConfigError):
        CircuitParams(g_leak=0.0)
    with pytest.raises(ConfigError):
        CircuitParams(noise_sigma=-1e-6)


def test_solve_examples():
    # pull-up on, driver off: output sits at the rail
    np.testing.assert_allclose(solve_vout(OperatingPoint(0.0,0.0,3.0),c),3.0,atol=1e-3)
    # driver fully on against a weakly biased load
    assert solve_vout(OperatingPoint(5.0,10/9,3.0),c) < 0.2
    # both devices off: the leakage pins the node at ground
    assert solve_vout(OperatingPoint(0.0,5.0,3.0),c) == 0.0


def test_solve_invalid():
    with pytest.raises(InvalidOperatingPointError):
        solve_vout(OperatingPoint(1.0,1.0,0.0),c)
    with pytest.raises(InvalidOperatingPointError):
        solve_vout(OperatingPoint(float('nan'),1.0,3.0),c)
    with pytest.raises(InvalidOperatingPointError):
        bisect_vout(np.array([1.0,np.inf]),1.0,3.0,c)


def test_bracketing_and_monotone_residual():
    rng = np.random.default_rng(1)
    n = 500
    vin = rng.uniform(0,5,n)
    vbias = rng.uniform(0,5,n)
    vdd = rng.uniform(0.5,5,n)
    assert np.all(node_residual(0.0,vin,vbias,vdd,c) <= 0)
    assert np.all(node_residual(vdd,vin,vbias,vdd,c) >= 0)
    v = np.linspace(0,1,50)[:,None] * vdd
    f = node_residual(v,vin,vbias,vdd,c)
    assert np.all(np.diff(f,axis=0) > 0)


def test_solution_properties():
    rng = np.random.default_rng(2)
    n = 1000
    vin = rng.uniform(0,5,n)
    vbias = rng.uniform(0,5,n)
    vdd = rng.uniform(0.5,5,n)
    vout = bisect_vout(vin,vbias,vdd,c)
    assert np.all((vout >= 0) & (vout <= vdd))
    assert np.all(np.abs(node_residual(vout,vin,vbias,vdd,c)) <= 1e-12)


def _brute_root(vin, vbias, vdd):
    # two dense grid passes minimizing |f|
    grid = np.linspace(0,vdd,10001)
    best = grid[np.argmin(np.abs(node_residual(grid,vin,vbias,vdd,c)))]
    step = grid[1] - grid[0]
    grid = np.linspace(max(0,best - step),min(vdd,best + step),10001)
    return grid[np.argmin(np.abs(node_residual(grid,vin,vbias,vdd,c)))]


def test_agrees_with_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        vin, vbias, vdd = rng.uniform(0,5), rng.uniform(0,5), rng.uniform(0.5,5)
        v = solve_vout(OperatingPoint(vin,vbias,vdd),c)
        h = 1e-6
        slope = (node_residual(min(v + h,vdd),vin,vbias,vdd,c)
                 - node_residual(max(v - h,0),vin,vbias,vdd,c)) / (2 * h)
        # the solver stops at |f| <= 1e-12 A, which is loose where f is shallow
        tol = 1e-6 + 2e-12 / max(float(slope),1e-300)
        assert abs(v - _brute_root(vin,vbias,vdd)) <= tol


def test_vout_non_increasing():
    rng = np.random.default_rng(4)
    vin = np.linspace(0,5,200)
    for _ in range(20):
        vbias, vdd = rng.uniform(0,5), rng.uniform(1,5)
        vout = transfer_curve(vbias,vdd,vin,c)[:,1]
        assert np.all(np.diff(vout) <= 1e-6)
    vbias = np.linspace(0,5,200)
    for _ in range(20):
        vin0, vdd = rng.uniform(0,5), rng.uniform(1,5)
        vout = bisect_vout(vin0,vbias,vdd,c)
        assert np.all(np.diff(vout) <= 1e-5)


def test_transfer_curve():
    xy = transfer_curve(0.0,3.0,[0.0],c)
    assert xy.shape == (1,2)
    np.testing.assert_allclose(xy[0],[0.0,3.0],atol=1e-3)

    grid = np.linspace(0,5,100)
    xy = transfer_curve(0.0,3.0,grid,c)
    np.testing.assert_array_equal(xy[:,0],grid)
    assert np.all(np.diff(xy[:,1]) <= 1e-9)

    assert transfer_curve(0.0,3.0,[],c).shape == (0,2)
    with pytest.raises(ValueError):
        transfer_curve(0.0,3.0,[1.0,1.0],c)


def test_transfer_curve_matches_solve_vout():
    grid = np.linspace(0,5,25)
    xy = transfer_curve(1.5,3.0,grid,c)
    expected = [solve_vout(OperatingPoint(v,1.5,3.0),c) for v in grid]
    np.testing.assert_allclose(xy[:,1],expected,rtol=0,atol=1e-12)
