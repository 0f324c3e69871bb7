"""
Bench configuration. Defaults come from labbench.input; a JSON file
overrides any subset of them (schema in docs/bench_config.md).
"""
# Built-in libraries
import json
import logging
import os
from dataclasses import dataclass, field
# Local libraries
import labbench.input as lb_prms
from labbench.circuit import CircuitParams, MosfetParams
from labbench.exceptions import ConfigError
from labbench.instruments import BenchWiring, Kind

# Module logger
log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InstrumentSpec:
    model: str
    serial: str
    kind: str
    volt_max: tuple = None
    curr_max: tuple = None


def _default_instruments():
    return [_instrument_spec(entry) for entry in lb_prms.instruments]


@dataclass
class BenchConfig:
    port: int = lb_prms.port
    instruments: list = field(default_factory=_default_instruments)
    wiring: BenchWiring = field(default_factory=BenchWiring)
    circuit: CircuitParams = field(default_factory=CircuitParams)

    @property
    def noise_seed(self):
        return self.wiring.noise_seed

    def __post_init__(self):
        serials = [spec.serial.upper() for spec in self.instruments]
        if len(set(serials)) != len(serials):
            raise ConfigError(f'instrument serials must be unique, got {serials}')
        if not 0 <= int(self.port) <= 65535:
            raise ConfigError(f'port out of range: {self.port}')


def _instrument_spec(entry):
    try:
        kind = Kind(str(entry['kind']).upper()).value
        volt_max = entry.get('volt_max')
        curr_max = entry.get('curr_max')
        if kind == Kind.PSU.value:
            volt_max = tuple(float(v) for v in (volt_max or lb_prms.instruments[0]['volt_max']))
            curr_max = tuple(float(a) for a in (curr_max or lb_prms.instruments[0]['curr_max']))
            if len(volt_max) != lb_prms.n_channels or len(curr_max) != lb_prms.n_channels:
                raise ConfigError(f"{entry['serial']}: expected {lb_prms.n_channels} channel limits")
            if min(volt_max) <= 0 or min(curr_max) < 0:
                raise ConfigError(f"{entry['serial']}: channel limits must be positive")
        return InstrumentSpec(str(entry['model']),str(entry['serial']),kind,volt_max,curr_max)
    except KeyError as err:
        raise ConfigError(f'instrument entry is missing {err}') from err
    except ValueError as err:
        if isinstance(err,ConfigError):
            raise
        raise ConfigError(f'bad instrument entry {entry}: {err}') from err


def _mosfet(entry, vt, k, lam):
    entry = entry or {}
    return MosfetParams(float(entry.get('vt',vt)),float(entry.get('k',k)),
                        float(entry.get('lambda',lam)))


def config_from_dict(data):
    """Build a BenchConfig from parsed JSON, filling gaps from labbench.input."""
    if not isinstance(data,dict):
        raise ConfigError('bench configuration must be a JSON object')
    try:
        wiring_data = dict(data.get('wiring') or {})
        if 'noise_seed' in data:
            wiring_data.setdefault('noise_seed',data['noise_seed'])
        wiring = BenchWiring(vin_channel=int(wiring_data.get('vin_channel',lb_prms.vin_channel)),
                             vdd_channel=int(wiring_data.get('vdd_channel',lb_prms.vdd_channel)),
                             vbias_channel=int(wiring_data.get('vbias_channel',lb_prms.vbias_channel)),
                             noise_seed=int(wiring_data.get('noise_seed',lb_prms.noise_seed)),
                             psu=wiring_data.get('psu'))

        circuit_data = data.get('circuit') or {}
        circuit = CircuitParams(
            nmos=_mosfet(circuit_data.get('nmos'),lb_prms.nmos_vt,lb_prms.nmos_k,lb_prms.nmos_lambda),
            pmos=_mosfet(circuit_data.get('pmos'),lb_prms.pmos_vt,lb_prms.pmos_k,lb_prms.pmos_lambda),
            g_leak=float(circuit_data.get('g_leak',lb_prms.g_leak)),
            noise_sigma=float(circuit_data.get('noise_sigma',lb_prms.noise_sigma)))

        if 'instruments' in data:
            instruments = [_instrument_spec(entry) for entry in data['instruments']]
        else:
            instruments = _default_instruments()
        port = int(data.get('port',lb_prms.port))
    except (TypeError,ValueError) as err:
        if isinstance(err,ConfigError):
            raise
        raise ConfigError(f'bad bench configuration: {err}') from err

    config = BenchConfig(port=port,instruments=instruments,wiring=wiring,circuit=circuit)
    if wiring.psu is not None and not any(
            spec.serial.upper() == str(wiring.psu).upper() for spec in instruments):
        raise ConfigError(f'wiring names unknown supply {wiring.psu}')
    return config


def load_config(fp=None):
    """
    Load a bench configuration.

    Parameters
    ----------
    fp : str or None
        path to the JSON file; None gives the default bench

    Returns
    -------
    BenchConfig
    """
    if fp is None:
        return BenchConfig()
    try:
        with open(fp,'r',encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as err:
        raise ConfigError(f'{fp}: invalid JSON ({err})') from err
    log.info('Loaded bench configuration from %s',fp)
    return config_from_dict(data)


def resolve_port(config, cli_port=None, environ=None):
    """CLI port, else LABBENCH_PORT, else the config port."""
    if cli_port is not None:
        return int(cli_port)
    environ = os.environ if environ is None else environ
    if environ.get(lb_prms.port_env):
        try:
            return int(environ[lb_prms.port_env])
        except ValueError as err:
            raise ConfigError(f'{lb_prms.port_env} is not a port number') from err
    return int(config.port)


def _wiring_to_dict(wiring):
    data = {'vin_channel':wiring.vin_channel,
            'vdd_channel':wiring.vdd_channel,
            'vbias_channel':wiring.vbias_channel}
    if wiring.psu is not None:
        data['psu'] = wiring.psu
    return data


def config_to_dict(config):
    """Inverse of config_from_dict, used to write bench_config.json."""
    c = config.circuit
    return {'port':config.port,
            'noise_seed':config.wiring.noise_seed,
            'instruments':[{k:v for k, v in (('model',s.model),('serial',s.serial),('kind',s.kind),
                                             ('volt_max',list(s.volt_max) if s.volt_max else None),
                                             ('curr_max',list(s.curr_max) if s.curr_max else None))
                            if v is not None} for s in config.instruments],
            'wiring':_wiring_to_dict(config.wiring),
            'circuit':{'nmos':{'vt':c.nmos.vt,'k':c.nmos.k,'lambda':c.nmos.lam},
                       'pmos':{'vt':c.pmos.vt,'k':c.pmos.k,'lambda':c.pmos.lam},
                       'g_leak':c.g_leak,
                       'noise_sigma':c.noise_sigma}}
