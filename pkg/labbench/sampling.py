"""
Sampling of a scalar oracle over an interval: uniform sweeps and the
two phase gradient weighted adaptive stochastic sampler (GWASS).

GWASS spends a small share of the budget on a uniform coarse pass,
estimates the gradient magnitude on each coarse interval and scatters
the remaining samples over the intervals in proportion to it.
"""
# Built-in libraries
import logging
from dataclasses import dataclass
# External libraries
import numpy as np
# Local libraries
import labbench.input as lb_prms
from labbench.exceptions import OracleError

# Module logger
log = logging.getLogger(__name__)

ALLOCATIONS = ('multinomial','largest_remainder')
# fine samples stay strictly inside their interval
_UNIT_MARGIN = 1e-9


@dataclass(frozen=True)
class Domain:
    lo: float = lb_prms.vin_lo
    hi: float = lb_prms.vin_hi

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.lo >= self.hi:
            raise ValueError(f'domain needs finite lo < hi, got [{self.lo}, {self.hi}]')

    @property
    def width(self):
        return self.hi - self.lo


@dataclass(frozen=True)
class Budget:
    """Oracle evaluations for one curve and the share spent on the coarse pass."""
    total: int = lb_prms.points
    coarse_fraction: float = lb_prms.coarse_fraction

    def __post_init__(self):
        if int(self.total) != self.total or self.total < 4:
            raise ValueError(f'budget must be an integer >= 4, got {self.total}')
        if not 0 < self.coarse_fraction < 1:
            raise ValueError(f'coarse fraction must be in (0, 1), got {self.coarse_fraction}')
        if self.n_coarse > self.total - 1:
            raise ValueError(f'coarse pass of {self.n_coarse} leaves no fine samples '
                             f'out of {self.total}')

    @property
    def n_coarse(self):
        return max(2,int(round(self.coarse_fraction * self.total)))

    @property
    def n_fine(self):
        return int(self.total) - self.n_coarse


@dataclass(frozen=True)
class GwassConfig:
    epsilon: float = lb_prms.epsilon
    seed: int = lb_prms.seed
    stratified: bool = lb_prms.stratified
    allocation: str = lb_prms.allocation

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f'epsilon must be positive, got {self.epsilon}')
        if self.allocation not in ALLOCATIONS:
            raise ValueError(f'allocation must be one of {ALLOCATIONS}, got {self.allocation!r}')


@dataclass
class SampleSet:
    """Samples sorted by x; points is an (n, 2) array of (x, y)."""
    points: np.ndarray
    oracle_calls: int

    @property
    def x(self):
        return self.points[:,0]

    @property
    def y(self):
        return self.points[:,1]

    def __len__(self):
        return len(self.points)


def _evaluate(oracle, xs):
    """Call the oracle once per x, in order."""
    ys = np.empty(len(xs))
    for i, x in enumerate(xs):
        x = float(x)
        try:
            ys[i] = float(oracle(x))
        except OracleError:
            raise
        except Exception as err:
            raise OracleError(x,err) from err
    return ys


def _sample_set(xs, ys):
    order = np.argsort(xs,kind='stable')
    return SampleSet(np.column_stack((xs[order],ys[order])),len(xs))


def uniform_sweep(oracle, domain, n):
    """
    Evaluate the oracle on n evenly spaced points, endpoints included.

    Parameters
    ----------
    oracle : callable
        x -> y, may raise
    domain : Domain
    n : int
        number of points, at least 2

    Returns
    -------
    SampleSet
    """
    if int(n) != n or n < 2:
        raise ValueError(f'a uniform sweep needs n >= 2 points, got {n}')
    xs = np.linspace(domain.lo,domain.hi,int(n))
    return _sample_set(xs,_evaluate(oracle,xs))


def coarse_phase(oracle, domain, n_coarse):
    """Uniform pass defining n_coarse - 1 intervals."""
    if int(n_coarse) != n_coarse or n_coarse < 2:
        raise ValueError(f'the coarse pass needs at least 2 points, got {n_coarse}')
    return uniform_sweep(oracle,domain,n_coarse)


def interval_weights(coarse, epsilon=lb_prms.epsilon):
    """
    Probability of each coarse interval receiving a fine sample.

    The finite difference slope of every interval is floored at
    epsilon times the mean slope; a curve with no slope at all gets
    equal weights.
    """
    if len(coarse) < 2:
        raise ValueError('interval weights need at least 2 coarse points')
    g = np.abs(np.diff(coarse.y)) / np.diff(coarse.x)
    mean_g = g.mean()
    if not mean_g > 0:
        return np.full(len(g),1.0 / len(g))
    w = np.maximum(g,epsilon * mean_g)
    return w / w.sum()


def allocate(p, n_fine, rng, allocation='multinomial'):
    """
    Split n_fine samples between intervals with probabilities p.

    Returns
    -------
    np.ndarray of int
        counts per interval, summing to n_fine
    """
    p = np.asarray(p,dtype=float)
    if p.ndim != 1 or len(p) == 0 or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
        raise ValueError('p must be a probability vector')
    if int(n_fine) != n_fine or n_fine < 0:
        raise ValueError(f'n_fine must be a non-negative integer, got {n_fine}')
    n_fine = int(n_fine)
    p = p / p.sum()
    if allocation == 'multinomial':
        return rng.multinomial(n_fine,p).astype(int)
    if allocation == 'largest_remainder':
        quota = p * n_fine
        counts = np.floor(quota).astype(int)
        leftover = n_fine - counts.sum()
        order = np.argsort(-(quota - counts),kind='stable')
        counts[order[:leftover]] += 1
        return counts
    raise ValueError(f'unknown allocation {allocation!r}')


def _fine_points(coarse_x, counts, rng, stratified):
    xs = []
    for x_lo, x_hi, c in zip(coarse_x[:-1],coarse_x[1:],counts):
        if c == 0:
            continue
        u = np.clip(rng.uniform(size=c),_UNIT_MARGIN,1 - _UNIT_MARGIN)
        if stratified:
            # slot j of c equal strata
            xs.append(x_lo + (np.arange(c) + u) * (x_hi - x_lo) / c)
        else:
            xs.append(np.sort(x_lo + u * (x_hi - x_lo)))
    if not xs:
        return np.empty(0)
    return np.concatenate(xs)


def run_gwass(oracle, domain, budget, config=None, rng=None):
    """
    Sample the oracle with exactly budget.total evaluations.

    Parameters
    ----------
    oracle : callable
    domain : Domain
    budget : Budget
    config : GwassConfig
    rng : np.random.Generator
        defaults to a generator seeded with config.seed

    Returns
    -------
    SampleSet
        coarse and fine samples merged and sorted by x
    """
    config = config or GwassConfig()
    rng = rng if rng is not None else np.random.default_rng(config.seed)

    coarse = coarse_phase(oracle,domain,budget.n_coarse)
    p = interval_weights(coarse,config.epsilon)
    counts = allocate(p,budget.n_fine,rng,config.allocation)
    log.debug('GWASS allocation over %d intervals: %s',len(counts),counts.tolist())

    fine_x = _fine_points(coarse.x,counts,rng,config.stratified)
    fine_y = _evaluate(oracle,fine_x)

    xs = np.concatenate((coarse.x,fine_x))
    ys = np.concatenate((coarse.y,fine_y))
    samples = _sample_set(xs,ys)
    assert samples.oracle_calls == budget.total
    return samples
