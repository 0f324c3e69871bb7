"""
Sweep harness: measures the amplifier transfer curve family through the
bench sessions, stores runs as CSV and scores them against a dense
noiseless reference.

Three scenarios are supported:
    reference : dense uniform grid solved directly on the model
    uniform   : evenly spaced samples taken through the instruments
    gwass     : gradient weighted adaptive samples through the instruments
"""
# Built-in libraries
import dataclasses
import json
import logging
import os
import re
from dataclasses import dataclass, field
from multiprocessing import Pool
# External libraries
import numpy as np
import pandas as pd
from scipy import stats
# Local libraries
import labbench.input as lb_prms
from labbench.circuit import transfer_curve
from labbench.client import LocalSession, connect, list_instruments
from labbench.config import BenchConfig
from labbench.exceptions import (CsvFormatError, LabbenchError,
                                 VbiasMismatchError)
from labbench.instruments import Bench, Kind
from labbench.sampling import Budget, Domain, GwassConfig, run_gwass, uniform_sweep

# Module logger
log = logging.getLogger(__name__)

MODES = ('reference','uniform','gwass')


@dataclass
class ExperimentConfig:
    mode: str = 'uniform'
    points: int = lb_prms.points
    coarse_fraction: float = lb_prms.coarse_fraction
    epsilon: float = lb_prms.epsilon
    allocation: str = lb_prms.allocation
    stratified: bool = lb_prms.stratified
    seed: int = lb_prms.seed
    vin_lo: float = lb_prms.vin_lo
    vin_hi: float = lb_prms.vin_hi
    vbias_lo: float = lb_prms.vbias_lo
    vbias_hi: float = lb_prms.vbias_hi
    vbias_count: int = lb_prms.vbias_count
    vdd: float = lb_prms.vdd
    current_limit: float = lb_prms.current_limit
    host: str = lb_prms.host
    port: int = lb_prms.port
    direct: bool = False
    psu: str = None
    dmm: str = None
    bench: BenchConfig = field(default_factory=BenchConfig)
    out: str = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f'mode must be one of {MODES}, got {self.mode!r}')
        if int(self.vbias_count) != self.vbias_count or self.vbias_count < 1:
            raise ValueError(f'vbias_count must be >= 1, got {self.vbias_count}')
        if int(self.points) != self.points or self.points < 2:
            raise ValueError(f'points must be >= 2, got {self.points}')
        if self.vbias_lo > self.vbias_hi:
            raise ValueError('vbias_lo must not exceed vbias_hi')
        if self.vdd <= 0:
            raise ValueError(f'vdd must be positive, got {self.vdd}')
        if self.current_limit < 0:
            raise ValueError(f'current limit must be non-negative, got {self.current_limit}')
        Domain(self.vin_lo,self.vin_hi)
        if self.mode == 'gwass':
            Budget(int(self.points),self.coarse_fraction)
            GwassConfig(self.epsilon,self.seed,self.stratified,self.allocation)

    @property
    def vbias_values(self):
        return np.linspace(self.vbias_lo,self.vbias_hi,int(self.vbias_count))

    @property
    def domain(self):
        return Domain(self.vin_lo,self.vin_hi)

    @property
    def budget(self):
        return Budget(int(self.points),self.coarse_fraction)

    @property
    def gwass(self):
        return GwassConfig(self.epsilon,self.seed,self.stratified,self.allocation)


# ========== RUN RECORDS ==========
def format_value(value):
    """10 significant digits, lowercase e, unpadded exponent: 3.0 -> 3.000000000e0"""
    value = float(value)
    if value == 0:
        value = 0.0
    mantissa, exponent = f'{value:.9e}'.split('e')
    return f'{mantissa}e{int(exponent)}'


class RunRecord():
    """Rows of (vbias, vin, vout) sorted by vbias then vin."""
    def __init__(self, df=None):
        if df is None:
            df = pd.DataFrame(columns=lb_prms.csv_header,dtype=float)
        df = df[lb_prms.csv_header].astype(float)
        self.df = df.sort_values(['vbias','vin'],kind='stable').reset_index(drop=True)

    @classmethod
    def from_curves(cls, curves):
        """curves: iterable of (vbias, array of (vin, vout))"""
        frames = [pd.DataFrame({'vbias':np.full(len(xy),float(vbias)),
                                'vin':np.asarray(xy)[:,0],
                                'vout':np.asarray(xy)[:,1]})
                  for vbias, xy in curves if len(xy)]
        if not frames:
            return cls()
        return cls(pd.concat(frames,ignore_index=True))

    def __len__(self):
        return len(self.df)

    def __eq__(self, other):
        if not isinstance(other,RunRecord):
            return NotImplemented
        return self.df.equals(other.df)

    @property
    def vbias_values(self):
        return np.unique(self.df['vbias'].to_numpy())

    def curve(self, vbias):
        """(vin, vout) arrays of one curve."""
        rows = self.df[self.df['vbias'] == vbias]
        return rows['vin'].to_numpy(), rows['vout'].to_numpy()

    def counts(self):
        return self.df.groupby('vbias').size()


def write_csv(record, fp):
    lines = [','.join(lb_prms.csv_header)]
    for vbias, vin, vout in record.df[lb_prms.csv_header].itertuples(index=False):
        lines.append(f'{format_value(vbias)},{format_value(vin)},{format_value(vout)}')
    with open(fp,'w',encoding='utf-8',newline='\n') as f:
        f.write('\n'.join(lines) + '\n')
    log.info('Wrote %d rows to %s',len(record),fp)


def _append_csv(f, vbias, xy):
    for vin, vout in xy:
        f.write(f'{format_value(vbias)},{format_value(vin)},{format_value(vout)}\n')


def read_csv(fp):
    """
    Load a run file written by write_csv.

    Raises
    ------
    CsvFormatError
        with the 1-based line number of the first bad row
    """
    try:
        df = pd.read_csv(fp,dtype=str,keep_default_na=False)
    except pd.errors.EmptyDataError as err:
        raise CsvFormatError(1,'empty file') from err
    except pd.errors.ParserError as err:
        found = re.search(r'line (\d+)',str(err))
        raise CsvFormatError(int(found.group(1)) if found else 0,str(err)) from err
    if list(df.columns) != lb_prms.csv_header:
        raise CsvFormatError(1,f'header must be {",".join(lb_prms.csv_header)}')

    values = np.empty((len(df),3))
    for j, col in enumerate(lb_prms.csv_header):
        try:
            values[:,j] = df[col].astype(float).to_numpy()
        except ValueError:
            for i, text in enumerate(df[col]):
                try:
                    float(text)
                except ValueError:
                    raise CsvFormatError(i + 2,f'{col} is not a number: {text!r}') from None
    bad = np.flatnonzero(~np.isfinite(values).all(axis=1))
    if len(bad):
        raise CsvFormatError(int(bad[0]) + 2,'non-finite value')
    return RunRecord(pd.DataFrame(values,columns=lb_prms.csv_header))


# ========== RUNNING ==========
def run_reference(config):
    """
    Noiseless transfer curves on a uniform grid, solved on the model
    without going through the instruments.

    Returns
    -------
    RunRecord
    """
    vin_grid = np.linspace(config.vin_lo,config.vin_hi,int(config.points))
    curves = []
    for vbias in config.vbias_values:
        curves.append((vbias,transfer_curve(vbias,config.vdd,vin_grid,config.bench.circuit)))
        log.info('Reference curve at vbias=%.4f V done',vbias)
    record = RunRecord.from_curves(curves)
    if config.out:
        write_csv(record,config.out)
    return record


def _pick(ids, kind, selector):
    if selector is not None:
        return selector
    for ident in ids:
        if ident.kind is kind:
            return ident.serial
    raise LabbenchError(f'the bench has no {kind.value}')


def open_sessions(config):
    """PSU and DMM sessions, over TCP or on a fresh in-process bench."""
    if config.direct:
        bench = Bench.from_config(config.bench)
        ids = list(bench.registry)
        return (LocalSession(bench,_pick(ids,Kind.PSU,config.psu)),
                LocalSession(bench,_pick(ids,Kind.DMM,config.dmm)))
    ids = list_instruments(config.host,config.port)
    psu = connect(config.host,config.port,_pick(ids,Kind.PSU,config.psu))
    try:
        dmm = connect(config.host,config.port,_pick(ids,Kind.DMM,config.dmm))
    except Exception:
        psu.close()
        raise
    return psu, dmm


def _setup_supply(psu, wiring, config):
    # start from an empty error queue
    psu.command('*CLS')
    for ch in range(1,lb_prms.n_channels+1):
        psu.set_current_limit(ch,config.current_limit)
    psu.set_voltage(wiring.vdd_channel,config.vdd)
    psu.set_voltage(wiring.vin_channel,config.vin_lo)
    for ch in (wiring.vin_channel,wiring.vdd_channel,wiring.vbias_channel):
        psu.set_output(ch,True)
    errors = psu.errors()
    if errors:
        raise LabbenchError(f'supply rejected the setup: {", ".join(map(str,errors))}')


def _release_supply(psu):
    for ch in range(1,lb_prms.n_channels+1):
        try:
            psu.set_output(ch,False)
        except LabbenchError:
            log.warning('Could not switch channel %d off',ch)
    try:
        psu.wait()
    except LabbenchError:
        pass


def measure_curve(psu, dmm, wiring, config, vbias, rng=None):
    """
    Sample one transfer curve at the given V_bias.

    Returns
    -------
    np.ndarray of shape (points, 2)
    """
    psu.set_voltage(wiring.vbias_channel,vbias)
    def oracle(vin):
        psu.set_voltage(wiring.vin_channel,vin)
        # the meter session must not overtake the supply queue
        psu.wait()
        return dmm.measure_voltage()

    if config.mode == 'gwass':
        samples = run_gwass(oracle,config.domain,config.budget,config.gwass,rng)
    else:
        samples = uniform_sweep(oracle,config.domain,int(config.points))
    return samples.points


def run_sweep(config, psu=None, dmm=None):
    """
    Measure the V_bias family through the instruments.

    Sessions are opened from config unless given. The CSV, if requested,
    grows one curve at a time and is removed if the run fails.

    Returns
    -------
    RunRecord
    """
    if config.mode == 'reference':
        return run_reference(config)
    own = psu is None or dmm is None
    if own:
        psu, dmm = open_sessions(config)
    wiring = config.bench.wiring
    rng = np.random.default_rng(config.seed)
    f = open(config.out,'w',encoding='utf-8',newline='\n') if config.out else None
    curves = []
    try:
        if f:
            f.write(','.join(lb_prms.csv_header) + '\n')
        _setup_supply(psu,wiring,config)
        try:
            for vbias in config.vbias_values:
                xy = measure_curve(psu,dmm,wiring,config,vbias,rng)
                curves.append((vbias,xy))
                if f:
                    _append_csv(f,vbias,xy)
                log.info('%s curve at vbias=%.4f V: %d samples',config.mode,vbias,len(xy))
        finally:
            _release_supply(psu)
    except Exception:
        if f:
            f.close()
            os.remove(config.out)
            log.error('Sweep failed; removed partial %s',config.out)
        raise
    finally:
        if f and not f.closed:
            f.close()
        if own:
            psu.close()
            dmm.close()
    return RunRecord.from_curves(curves)


# ========== METRICS ==========
def objective(model, data, method='RMSE'):
    if method == 'RMSE':
        return np.sqrt(np.mean(np.square(model - data)))
    elif method == 'MAX':
        return np.max(np.abs(model - data))
    raise ValueError(f'unknown method {method!r}')


def _shared_vbias(run, ref):
    run_v, ref_v = set(run.vbias_values), set(ref.vbias_values)
    if run_v != ref_v:
        raise VbiasMismatchError(sorted(run_v ^ ref_v))
    return sorted(ref_v)


def reconstruction_error(run, ref):
    """
    Piecewise linear reconstruction of each run curve on the reference grid.

    Returns
    -------
    pd.DataFrame
        indexed by vbias, columns rmse and max_abs_err [V]
    """
    rows = []
    for vbias in _shared_vbias(run,ref):
        run_vin, run_vout = run.curve(vbias)
        ref_vin, ref_vout = ref.curve(vbias)
        model = np.interp(ref_vin,run_vin,run_vout)
        rows.append({'vbias':vbias,
                     'rmse':objective(model,ref_vout,'RMSE'),
                     'max_abs_err':objective(model,ref_vout,'MAX')})
    return pd.DataFrame(rows,columns=['vbias','rmse','max_abs_err']).set_index('vbias')


def curve_density_ratio(run_vin, ref_vin, ref_vout, threshold=lb_prms.transition_threshold):
    """Share of samples in the steep region over that region's share of the domain."""
    slope = np.abs(np.diff(ref_vout) / np.diff(ref_vin))
    if len(slope) == 0 or not slope.max() > 0 or len(run_vin) == 0:
        return 1.0
    inside = slope >= threshold * slope.max()
    width_share = np.diff(ref_vin)[inside].sum() / (ref_vin[-1] - ref_vin[0])
    idx = np.clip(np.searchsorted(ref_vin,run_vin,side='right') - 1,0,len(slope) - 1)
    return float(inside[idx].mean() / width_share)


def density_ratio(run, ref, threshold=lb_prms.transition_threshold):
    """pd.Series of density ratios indexed by vbias."""
    ratios = {}
    for vbias in _shared_vbias(run,ref):
        ref_vin, ref_vout = ref.curve(vbias)
        ratios[vbias] = curve_density_ratio(run.curve(vbias)[0],ref_vin,ref_vout,threshold)
    return pd.Series(ratios,name='density_ratio',dtype=float)


def steepest_vbias(ref):
    """V_bias of the curve with the largest |dVout/dVin|."""
    best, best_slope = None, -1.0
    for vbias in ref.vbias_values:
        vin, vout = ref.curve(vbias)
        if len(vin) < 2:
            continue
        slope = np.max(np.abs(np.diff(vout) / np.diff(vin)))
        if slope > best_slope:
            best, best_slope = vbias, slope
    if best is None:
        raise ValueError('reference has no curve with two or more points')
    return float(best)


@dataclass
class CurveMetrics:
    vbias: float
    rmse: float
    max_abs_err: float
    density_ratio: float
    n_samples: int


@dataclass
class MetricsReport:
    curves: list
    steepest_vbias: float

    @property
    def rmse_mean(self):
        return float(np.mean([c.rmse for c in self.curves]))

    @property
    def rmse_max(self):
        return float(np.max([c.rmse for c in self.curves]))

    @property
    def max_abs_err(self):
        return float(np.max([c.max_abs_err for c in self.curves]))

    @property
    def density_ratio_mean(self):
        return float(np.mean([c.density_ratio for c in self.curves]))

    @property
    def n_samples_total(self):
        return int(sum(c.n_samples for c in self.curves))

    def curve(self, vbias):
        return next(c for c in self.curves if c.vbias == vbias)

    def to_dict(self):
        return {'curves':[dataclasses.asdict(c) for c in self.curves],
                'rmse_mean':self.rmse_mean,
                'rmse_max':self.rmse_max,
                'max_abs_err':self.max_abs_err,
                'density_ratio_mean':self.density_ratio_mean,
                'n_samples_total':self.n_samples_total,
                'steepest_vbias':self.steepest_vbias}


def compute_metrics(run, ref, threshold=lb_prms.transition_threshold):
    errors = reconstruction_error(run,ref)
    ratios = density_ratio(run,ref,threshold)
    counts = run.counts()
    curves = [CurveMetrics(float(vbias),float(errors.at[vbias,'rmse']),
                           float(errors.at[vbias,'max_abs_err']),float(ratios[vbias]),
                           int(counts[vbias]))
              for vbias in errors.index]
    return MetricsReport(curves,steepest_vbias(ref))


def metrics_to_json(report, fp=None):
    text = json.dumps(report.to_dict(),indent=2)
    if fp:
        with open(fp,'w',encoding='utf-8') as f:
            f.write(text + '\n')
        log.info('Wrote metrics to %s',fp)
    return text


# ========== NOISE ==========
@dataclass
class NoiseReport:
    mean: float
    std: float
    n: int
    sigma_ci_lo: float
    sigma_ci_hi: float

    def to_dict(self):
        return dataclasses.asdict(self)


def characterize_noise(dmm, reads=lb_prms.noise_reads, confidence=0.95):
    """
    Repeated meter readings at a fixed operating point.

    The interval on sigma is the chi-square interval of the sample variance.
    """
    if reads < 2:
        raise ValueError(f'need at least 2 reads, got {reads}')
    values = np.array([dmm.measure_voltage() for _ in range(int(reads))])
    n = len(values)
    std = values.std(ddof=1)
    alpha = 1 - confidence
    lo = np.sqrt((n - 1) * std**2 / stats.chi2.ppf(1 - alpha / 2,n - 1))
    hi = np.sqrt((n - 1) * std**2 / stats.chi2.ppf(alpha / 2,n - 1))
    report = NoiseReport(float(values.mean()),float(std),n,float(lo),float(hi))
    log.info('Noise over %d reads: mean %.9g V, std %.4g V',n,report.mean,report.std)
    return report


# ========== STUDY ==========
def _study_seed(args):
    """One seed of the study: uniform and GWASS on the steepest curve."""
    config, seed, vbias, ref_vin, ref_vout = args
    bench = dataclasses.replace(config.bench,
                                wiring=dataclasses.replace(config.bench.wiring,noise_seed=seed))
    result = {'seed':seed}
    for mode in ('uniform','gwass'):
        run_config = dataclasses.replace(config,mode=mode,seed=seed,direct=True,out=None,
                                         vbias_lo=vbias,vbias_hi=vbias,vbias_count=1,
                                         bench=bench)
        run = run_sweep(run_config)
        run_vin, run_vout = run.curve(vbias)
        model = np.interp(ref_vin,run_vin,run_vout)
        result[mode] = {'rmse':float(objective(model,ref_vout,'RMSE')),
                        'density_ratio':curve_density_ratio(run_vin,ref_vin,ref_vout)}
    return result


def run_study(config, seeds=None, processes=1):
    """
    Compare uniform and GWASS sampling on the steepest reference curve
    over a set of seeds, one in-process bench per seed.

    Returns
    -------
    dict
        per-seed results and per-mode medians
    """
    seeds = list(lb_prms.study_seeds if seeds is None else seeds)
    ref_config = dataclasses.replace(config,mode='reference',points=lb_prms.reference_points,out=None)
    ref = run_reference(ref_config)
    vbias = steepest_vbias(ref)
    ref_vin, ref_vout = ref.curve(vbias)
    log.info('Study over %d seeds on vbias=%.4f V with %d processes',len(seeds),vbias,processes)

    packed = [(config,seed,vbias,ref_vin,ref_vout) for seed in seeds]
    if processes > 1:
        with Pool(processes) as pool:
            results = pool.map(_study_seed,packed)
    else:
        results = [_study_seed(args) for args in packed]

    summary = {'steepest_vbias':vbias,'points':int(config.points),'seeds':results}
    for mode in ('uniform','gwass'):
        summary[mode] = {
            'rmse_median':float(np.median([r[mode]['rmse'] for r in results])),
            'density_ratio_median':float(np.median([r[mode]['density_ratio'] for r in results]))}
    return summary
