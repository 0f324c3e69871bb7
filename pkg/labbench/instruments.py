"""
Virtual instruments of the bench: a three channel power supply, a DC
voltmeter, the registry that resolves them by serial or model, and the
wiring that connects supply channels to the amplifier nodes.
"""
# Built-in libraries
import enum
import logging
import threading
from collections import deque
from dataclasses import dataclass, field
# External libraries
import numpy as np
# Local libraries
import labbench.input as lb_prms
from labbench.circuit import CircuitParams, OperatingPoint, solve_vout
from labbench.exceptions import (AmbiguousModelError, ConfigError,
                                 InstrumentNotFoundError)
from labbench.scpi import (ArgKind, ScpiError, format_nr3, mnemonic_matches,
                           parse_message)

# Module logger
log = logging.getLogger(__name__)


class Kind(str, enum.Enum):
    PSU = 'PSU'
    DMM = 'DMM'


@dataclass(frozen=True)
class InstrumentId:
    model: str
    serial: str
    kind: Kind

    def idn(self):
        return f'{lb_prms.idn_manufacturer},{self.model},{self.serial},{lb_prms.idn_firmware}'


class Registry:
    """Instruments of one bench, looked up by serial first, then by model."""
    def __init__(self, ids):
        self.ids = list(ids)
        serials = [ident.serial.upper() for ident in self.ids]
        if len(set(serials)) != len(serials):
            raise ConfigError(f'instrument serials must be unique, got {serials}')

    def __iter__(self):
        return iter(self.ids)

    def __len__(self):
        return len(self.ids)

    def resolve(self, selector):
        """
        Parameters
        ----------
        selector : str
            serial number or model name, case-insensitive

        Returns
        -------
        InstrumentId
        """
        key = selector.strip().upper()
        for ident in self.ids:
            if ident.serial.upper() == key:
                return ident
        matches = [ident for ident in self.ids if ident.model.upper() == key]
        if len(matches) > 1:
            raise AmbiguousModelError(f'{len(matches)} instruments are {selector}; use a serial')
        if not matches:
            raise InstrumentNotFoundError(f'no instrument matches {selector!r}')
        return matches[0]


def resolve(selector, registry):
    return registry.resolve(selector)


# ========== INSTRUMENT STATE ==========
@dataclass
class ChannelState:
    volt_max: float
    curr_max: float
    volt_set: float = 0.0
    curr_limit: float = 0.0
    output_on: bool = False


def _error_queue():
    return deque()


@dataclass
class PsuState:
    ident: InstrumentId
    channels: list
    selected_channel: int = 1
    error_queue: deque = field(default_factory=_error_queue)

    @classmethod
    def create(cls, ident, volt_max=None, curr_max=None):
        volt_max = volt_max or lb_prms.instruments[0]['volt_max']
        curr_max = curr_max or lb_prms.instruments[0]['curr_max']
        if len(volt_max) != lb_prms.n_channels or len(curr_max) != lb_prms.n_channels:
            raise ConfigError(f'{ident.serial}: expected {lb_prms.n_channels} channel limits')
        channels = [ChannelState(float(v),float(a)) for v, a in zip(volt_max,curr_max)]
        return cls(ident,channels)

    @property
    def channel(self):
        return self.channels[self.selected_channel-1]

    def reset(self):
        for ch in self.channels:
            ch.volt_set = 0.0
            ch.curr_limit = 0.0
            ch.output_on = False
        self.selected_channel = 1


@dataclass
class DmmState:
    ident: InstrumentId
    function: str = 'DCV'
    range: object = 'AUTO'
    error_queue: deque = field(default_factory=_error_queue)

    def reset(self):
        self.function = 'DCV'
        self.range = 'AUTO'


@dataclass(frozen=True)
class BenchWiring:
    """Which supply channel drives which amplifier node."""
    vin_channel: int = lb_prms.vin_channel
    vdd_channel: int = lb_prms.vdd_channel
    vbias_channel: int = lb_prms.vbias_channel
    noise_seed: int = lb_prms.noise_seed
    psu: str = None

    def __post_init__(self):
        channels = (self.vin_channel,self.vdd_channel,self.vbias_channel)
        if len(set(channels)) != 3:
            raise ConfigError(f'wiring channels must be distinct, got {channels}')
        if not all(1 <= ch <= lb_prms.n_channels for ch in channels):
            raise ConfigError(f'wiring channels must be in 1..{lb_prms.n_channels}, got {channels}')


# ========== ERROR QUEUE ==========
def push_error(state, err):
    """Append to the error queue; a full queue turns its last entry into -350."""
    queue = state.error_queue
    if len(queue) >= lb_prms.error_queue_size:
        queue[-1] = ScpiError(-350)
    else:
        queue.append(err)
    log.debug('%s queued error %s',state.ident.serial,err)


def error_pop(state):
    if state.error_queue:
        return state.error_queue.popleft()
    return ScpiError(0)


# ========== ARGUMENT HELPERS ==========
def _first_arg(unit):
    if not unit.args:
        raise ScpiError(-109)
    return unit.args[0]


def _bounded(arg, lo, hi):
    if arg.kind is ArgKind.KEYWORD and arg.value in ('MIN','MAX'):
        return lo if arg.value == 'MIN' else hi
    if arg.kind is not ArgKind.NUMBER:
        raise ScpiError(-222)
    if not lo <= arg.value <= hi:
        raise ScpiError(-222)
    return arg.value


def _switch(arg):
    if arg.kind is ArgKind.KEYWORD and arg.value in ('ON','OFF'):
        return arg.value == 'ON'
    if arg.kind is ArgKind.NUMBER and arg.value in (0.0,1.0):
        return arg.value == 1.0
    raise ScpiError(-222)


def _limit_query(unit, lo, hi, value):
    if unit.args:
        arg = unit.args[0]
        if arg.kind is ArgKind.KEYWORD and arg.value in ('MIN','MAX'):
            return format_nr3(lo if arg.value == 'MIN' else hi)
        raise ScpiError(-222)
    return format_nr3(value)


# ========== COMMON COMMANDS ==========
def _idn(state, unit, bench=None):
    return state.ident.idn()


def _rst(state, unit, bench=None):
    state.reset()


def _cls(state, unit, bench=None):
    state.error_queue.clear()


def _opc_query(state, unit, bench=None):
    return '+1'


def _opc(state, unit, bench=None):
    return None


def _syst_err(state, unit, bench=None):
    return str(error_pop(state))


COMMON_TABLE = [(('*IDN',),_idn,None),
                (('*RST',),None,_rst),
                (('*CLS',),None,_cls),
                (('*OPC',),_opc_query,_opc),
                (('SYSTem','ERRor'),_syst_err,None),
                (('SYSTem','ERRor','NEXT'),_syst_err,None)]


# ========== POWER SUPPLY ==========
def _nsel(state, unit):
    arg = _first_arg(unit)
    channel = _bounded(arg,1,lb_prms.n_channels)
    if channel != int(channel):
        raise ScpiError(-222)
    state.selected_channel = int(channel)


def _nsel_query(state, unit):
    return str(state.selected_channel)


def _inst_select(state, unit):
    arg = _first_arg(unit)
    names = {f'CH{n}':n for n in range(1,lb_prms.n_channels+1)}
    if arg.kind is ArgKind.TOKEN and arg.value.upper() in names:
        state.selected_channel = names[arg.value.upper()]
    else:
        raise ScpiError(-222)


def _inst_select_query(state, unit):
    return f'CH{state.selected_channel}'


def _volt(state, unit):
    ch = state.channel
    ch.volt_set = _bounded(_first_arg(unit),0.0,ch.volt_max)


def _volt_query(state, unit):
    ch = state.channel
    return _limit_query(unit,0.0,ch.volt_max,ch.volt_set)


def _curr(state, unit):
    ch = state.channel
    ch.curr_limit = _bounded(_first_arg(unit),0.0,ch.curr_max)


def _curr_query(state, unit):
    ch = state.channel
    return _limit_query(unit,0.0,ch.curr_max,ch.curr_limit)


def _outp(state, unit):
    state.channel.output_on = _switch(_first_arg(unit))


def _outp_query(state, unit):
    return '1' if state.channel.output_on else '0'


PSU_TABLE = [(('INSTrument','NSELect'),_nsel_query,_nsel),
             (('INSTrument','SELect'),_inst_select_query,_inst_select),
             (('INSTrument',),_inst_select_query,_inst_select),
             (('VOLTage',),_volt_query,_volt),
             (('SOURce','VOLTage'),_volt_query,_volt),
             (('CURRent',),_curr_query,_curr),
             (('SOURce','CURRent'),_curr_query,_curr),
             (('OUTPut',),_outp_query,_outp),
             (('OUTPut','STATe'),_outp_query,_outp)]


# ========== MULTIMETER ==========
def _range_arg(unit):
    if not unit.args:
        return None
    arg = unit.args[0]
    if arg.kind is ArgKind.NUMBER:
        if arg.value <= 0:
            raise ScpiError(-222)
        return arg.value
    if arg.kind is ArgKind.KEYWORD and arg.value in ('MIN','MAX'):
        return arg.value
    if arg.kind is ArgKind.TOKEN and arg.value.upper() in ('AUTO','DEF','DEFAULT'):
        return 'AUTO'
    raise ScpiError(-222)


def _conf(state, unit, bench):
    value = _range_arg(unit)
    state.function = 'DCV'
    state.range = 'AUTO' if value is None else value


def _conf_query(state, unit, bench):
    rng = state.range if isinstance(state.range,str) else format_nr3(state.range)
    return f'"VOLT {rng}"'


def _meas(state, unit, bench):
    value = _range_arg(unit)
    state.function = 'DCV'
    if value is not None:
        state.range = value
    return format_nr3(bench.measure())


def _read(state, unit, bench):
    return format_nr3(bench.measure())


DMM_TABLE = [(('MEASure','VOLTage','DC'),_meas,None),
             (('MEASure','VOLTage'),_meas,None),
             (('READ',),_read,None),
             (('CONFigure','VOLTage','DC'),None,_conf),
             (('CONFigure','VOLTage'),None,_conf),
             (('CONFigure',),_conf_query,None)]


# ========== DISPATCH ==========
def _candidates(unit):
    yield unit.headers
    # an unrooted unit whose retained path names no header falls back to the root
    if not unit.rooted and len(unit.headers) > unit.depth:
        yield unit.headers[-unit.depth:]


def _lookup(table, unit):
    for headers in _candidates(unit):
        for long_forms, query, write in table:
            if len(long_forms) != len(headers):
                continue
            if all(mnemonic_matches(tok,lf) for tok, lf in zip(headers,long_forms)):
                return query, write
    return None


def _dispatch(tables, state, unit, *extra):
    for table in tables:
        entry = _lookup(table,unit)
        if entry is not None:
            break
    else:
        raise ScpiError(-113)
    query, write = entry
    handler = query if unit.is_query else write
    if handler is None:
        raise ScpiError(-113)
    return handler(state,unit,*extra)


def _common(handler):
    def wrapped(state, unit, bench=None):
        return handler(state,unit)
    return wrapped


_PSU_TABLES = (COMMON_TABLE,
               [(lf,q and _common(q),w and _common(w)) for lf, q, w in PSU_TABLE])


def psu_execute(state, unit):
    """
    Run one command unit on a power supply.

    Returns
    -------
    str or None
        response line for queries; errors go to the error queue
    """
    try:
        return _dispatch(_PSU_TABLES,state,unit,None)
    except ScpiError as err:
        push_error(state,err)
        return None


def dmm_execute(state, unit, bench):
    """Run one command unit on a multimeter reading the given bench."""
    try:
        return _dispatch((COMMON_TABLE,DMM_TABLE),state,unit,bench)
    except ScpiError as err:
        push_error(state,err)
        return None


# ========== BENCH ==========
class Bench():
    """
    The instruments of one desk wired to the amplifier.

    execute_message holds the bench lock for a whole program message, so
    a reading never observes a half-applied supply setting.
    """
    def __init__(self, ids, wiring=None, circuit=None, psu_limits=None):
        """
        Parameters
        ==========
        ids : list of InstrumentId
        wiring : BenchWiring
        circuit : CircuitParams
        psu_limits : dict
            serial -> (volt_max, curr_max) per channel
        """
        self.registry = Registry(ids)
        self.wiring = wiring or BenchWiring()
        self.circuit = circuit or CircuitParams()
        self.rng = np.random.default_rng(self.wiring.noise_seed)
        self.lock = threading.RLock()
        psu_limits = psu_limits or {}

        self.states = {}
        for ident in self.registry:
            if ident.kind is Kind.PSU:
                volt_max, curr_max = psu_limits.get(ident.serial,(None,None))
                self.states[ident.serial] = PsuState.create(ident,volt_max,curr_max)
            else:
                self.states[ident.serial] = DmmState(ident)

        psus = [ident for ident in self.registry if ident.kind is Kind.PSU]
        if self.wiring.psu is not None:
            self.psu_serial = self.registry.resolve(self.wiring.psu).serial
        elif psus:
            self.psu_serial = psus[0].serial
        else:
            self.psu_serial = None
        return

    @classmethod
    def from_config(cls, config):
        limits = {spec.serial:(spec.volt_max,spec.curr_max) for spec in config.instruments}
        ids = [InstrumentId(spec.model,spec.serial,Kind(spec.kind)) for spec in config.instruments]
        return cls(ids,config.wiring,config.circuit,limits)

    def state(self, serial):
        return self.states[serial]

    def node_voltages(self):
        """Supply voltages at V_in, V_DD and V_bias; a disabled output is 0 V."""
        if self.psu_serial is None:
            return OperatingPoint(0.0,0.0,0.0)
        channels = self.states[self.psu_serial].channels
        def level(n):
            ch = channels[n-1]
            return ch.volt_set if ch.output_on else 0.0
        w = self.wiring
        return OperatingPoint(level(w.vin_channel),level(w.vbias_channel),level(w.vdd_channel))

    def vout(self):
        """Noiseless output voltage at the present supply settings."""
        op = self.node_voltages()
        if op.vdd <= 0:
            # no supply: every node sits at ground
            return 0.0
        return solve_vout(op,self.circuit)

    def measure(self):
        """One DMM reading: the node voltage plus one Gaussian noise draw."""
        return self.vout() + self.rng.normal(0.0,self.circuit.noise_sigma)

    def execute(self, serial, unit):
        state = self.states[serial]
        if isinstance(state,PsuState):
            return psu_execute(state,unit)
        return dmm_execute(state,unit,self)

    def execute_message(self, serial, text):
        """
        Parse and run one program message on one instrument.

        Returns
        -------
        list of str
            one line per successful query, in message order
        """
        state = self.states[serial]
        responses = []
        with self.lock:
            units = parse_message(text)
            if isinstance(units,ScpiError):
                push_error(state,units)
                return responses
            for unit in units:
                response = self.execute(serial,unit)
                if response is not None:
                    responses.append(response)
        return responses
