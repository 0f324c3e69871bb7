"""
Circuit model of the two-transistor inverting amplifier: an N-channel
driver pulled up by a P-channel current source load whose gate sits at
V_bias. The output node is solved from the current balance

    I_n(V_in, V_out) + g_leak * V_out = I_p(V_DD - V_bias, V_DD - V_out)

where g_leak is the input conductance of the meter on the output node.
"""
# Built-in libraries
import functools
import logging
from dataclasses import dataclass, field
# External libraries
import numpy as np
# Local libraries
import labbench.input as lb_prms
from labbench.exceptions import ConfigError, InvalidOperatingPointError

# Module logger
log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MosfetParams:
    """Square-law device parameters.

    Attributes
    ----------
    vt : float
        threshold voltage magnitude [V]
    k : float
        transconductance coefficient [A V-2]
    lam : float
        channel-length modulation [V-1]
    """
    vt: float
    k: float
    lam: float = 0.0

    def __post_init__(self):
        if not self.k > 0:
            raise ConfigError(f'k must be positive, got {self.k}')
        if not self.vt >= 0:
            raise ConfigError(f'vt must be non-negative, got {self.vt}')
        if not self.lam >= 0:
            raise ConfigError(f'lambda must be non-negative, got {self.lam}')


@dataclass(frozen=True)
class CircuitParams:
    """Bench physics: both devices, the output leakage and the meter noise."""
    nmos: MosfetParams = field(default_factory=lambda: MosfetParams(
        lb_prms.nmos_vt,lb_prms.nmos_k,lb_prms.nmos_lambda))
    pmos: MosfetParams = field(default_factory=lambda: MosfetParams(
        lb_prms.pmos_vt,lb_prms.pmos_k,lb_prms.pmos_lambda))
    g_leak: float = lb_prms.g_leak
    noise_sigma: float = lb_prms.noise_sigma

    def __post_init__(self):
        # g_leak > 0 keeps the residual strictly increasing, so the root is unique
        if not self.g_leak > 0:
            raise ConfigError(f'g_leak must be positive, got {self.g_leak}')
        if not self.noise_sigma >= 0:
            raise ConfigError(f'noise_sigma must be non-negative, got {self.noise_sigma}')


@dataclass(frozen=True)
class OperatingPoint:
    vin: float
    vbias: float
    vdd: float


def _square_law(vov, vds, p):
    """Piecewise square-law drain current for overdrive vov and vds >= 0."""
    vov = np.asarray(vov,dtype=float)
    vds = np.asarray(vds,dtype=float)
    clm = 1 + p.lam*vds
    sat = 0.5*p.k*vov**2*clm
    triode = p.k*(vov*vds - 0.5*vds**2)*clm
    current = np.where(vds >= vov,sat,triode)
    return np.where(vov > 0,current,0.0)


def nmos_current(vgs, vds, p):
    """
    Drain current of the N-channel device.

    Parameters
    ----------
    vgs, vds : float or np.ndarray
        gate-source and drain-source voltages [V], vds >= 0
    p : MosfetParams

    Returns
    -------
    float or np.ndarray
        drain current [A]; zero in cutoff
    """
    return _square_law(np.asarray(vgs,dtype=float) - p.vt,vds,p)


def pmos_current(vsg, vsd, p):
    """Source current of the P-channel device, source referenced (vsd >= 0)."""
    return _square_law(np.asarray(vsg,dtype=float) - p.vt,vsd,p)


def node_residual(vout, vin, vbias, vdd, c):
    """Net current leaving the output node [A]; increasing in vout."""
    vout = np.asarray(vout,dtype=float)
    pull_down = nmos_current(vin,vout,c.nmos) + c.g_leak*vout
    pull_up = pmos_current(np.subtract(vdd,vbias),np.subtract(vdd,vout),c.pmos)
    return pull_down - pull_up


def _check_inputs(vin, vbias, vdd):
    vin, vbias, vdd = np.broadcast_arrays(np.asarray(vin,dtype=float),
                                          np.asarray(vbias,dtype=float),
                                          np.asarray(vdd,dtype=float))
    if not (np.all(np.isfinite(vin)) and np.all(np.isfinite(vbias))
            and np.all(np.isfinite(vdd))):
        raise InvalidOperatingPointError('operating point inputs must be finite')
    if np.any(vdd <= 0):
        raise InvalidOperatingPointError('vdd must be positive')
    return vin, vbias, vdd


def bisect_vout(vin, vbias, vdd, c, ftol=lb_prms.solver_ftol,
                maxiter=lb_prms.solver_maxiter):
    """
    Vectorized bisection of the node equation on [0, vdd].

    The residual is <= 0 at 0 V and > 0 at vdd for every valid operating
    point, so each element keeps a valid bracket. An element stops once
    |residual| <= ftol or its bracket can no longer be halved.

    Parameters
    ----------
    vin, vbias, vdd : float or np.ndarray
        broadcastable node voltages [V]
    c : CircuitParams

    Returns
    -------
    np.ndarray
        output voltages [V], broadcast shape of the inputs
    """
    vin, vbias, vdd = _check_inputs(vin,vbias,vdd)
    lo = np.zeros(vin.shape)
    hi = vdd.copy()
    root = np.full(vin.shape,np.nan)

    # both devices off: the leakage pins the node at ground
    f_lo = node_residual(lo,vin,vbias,vdd,c)
    done = np.abs(f_lo) <= ftol
    root[done] = 0.0

    for _ in range(maxiter):
        if np.all(done):
            break
        mid = 0.5*(lo + hi)
        f_mid = node_residual(mid,vin,vbias,vdd,c)
        converged = ~done & ((np.abs(f_mid) <= ftol) | (mid <= lo) | (mid >= hi))
        root[converged] = mid[converged]
        done |= converged
        below = ~done & (f_mid < 0)
        above = ~done & (f_mid >= 0)
        lo = np.where(below,mid,lo)
        hi = np.where(above,mid,hi)

    if not np.all(done):
        log.debug('bisection hit %d iterations on %d points',maxiter,np.sum(~done))
        root[~done] = 0.5*(lo[~done] + hi[~done])
    return root


@functools.lru_cache(maxsize=65536)
def _solve_cached(vin, vbias, vdd, c):
    return float(bisect_vout(vin,vbias,vdd,c))


def solve_vout(op, c):
    """
    Noiseless output voltage at one operating point.

    Parameters
    ----------
    op : OperatingPoint
    c : CircuitParams

    Returns
    -------
    float
        V_out in [0, op.vdd] [V]
    """
    _check_inputs(op.vin,op.vbias,op.vdd)
    return _solve_cached(float(op.vin),float(op.vbias),float(op.vdd),c)


def transfer_curve(vbias, vdd, vin_grid, c):
    """
    V_out over a strictly increasing V_in grid at fixed V_bias and V_DD.

    Returns
    -------
    np.ndarray of shape (n, 2)
        columns vin, vout in grid order
    """
    vin_grid = np.asarray(vin_grid,dtype=float).ravel()
    if vin_grid.size == 0:
        return np.empty((0,2))
    if np.any(np.diff(vin_grid) <= 0):
        raise ValueError('vin_grid must be strictly increasing')
    vout = bisect_vout(vin_grid,vbias,vdd,c)
    return np.column_stack([vin_grid,vout])
