"""
Client side of the bridge: sessions that read as instrument actions.

BridgeSession talks to a bridge server over TCP; LocalSession drives an
in-process Bench through the same SCPI messages, so harness code runs
unchanged with or without the network.
"""
# Built-in libraries
import logging
import socket
from collections import deque
# Local libraries
import labbench.input as lb_prms
from labbench.exceptions import (AmbiguousModelError, BridgeConnectionError,
                                 BridgeTimeoutError, BridgeUsageError,
                                 InstrumentNotFoundError, LabbenchError)
from labbench.instruments import InstrumentId, Kind
from labbench.scpi import ArgKind, ScpiError, parse_number

# Module logger
log = logging.getLogger(__name__)


def _number_text(value):
    """Shortest text that reads back as the same float."""
    return repr(float(value))


class InstrumentSession():
    """
    Instrument verbs on top of query/command. Subclasses provide the
    transport through _write and _readline.
    """
    def __init__(self):
        self.instrument = None
        self.request_count = 0

    @property
    def kind(self):
        return self.instrument.kind if self.instrument is not None else None

    def _write(self, text):
        raise NotImplementedError

    def _readline(self):
        raise NotImplementedError

    def command(self, text):
        """Send a message without waiting; errors stay in the error queue."""
        self._write(text)

    def query(self, text):
        """Send a message and return exactly one response line."""
        self._write(text)
        line = self._readline()
        self.request_count += 1
        return line

    # ===== VERBS =====
    def _require(self, kind):
        if self.kind is not kind:
            raise BridgeUsageError(f'{self.instrument.serial} is a {self.kind.value}, '
                                   f'not a {kind.value}')

    def _channel(self, channel):
        if int(channel) != channel or not 1 <= channel <= lb_prms.n_channels:
            raise BridgeUsageError(f'channel must be 1..{lb_prms.n_channels}, got {channel}')
        return int(channel)

    def set_voltage(self, channel, volts):
        self._require(Kind.PSU)
        self.command(f'INST:NSEL {self._channel(channel)};VOLT {_number_text(volts)}')

    def set_current_limit(self, channel, amps):
        self._require(Kind.PSU)
        self.command(f'INST:NSEL {self._channel(channel)};CURR {_number_text(amps)}')

    def set_output(self, channel, on):
        self._require(Kind.PSU)
        self.command(f'INST:NSEL {self._channel(channel)};OUTP {"ON" if on else "OFF"}')

    def measure_voltage(self):
        self._require(Kind.DMM)
        return parse_response_number(self.query('READ?'))

    def identify(self):
        return self.query('*IDN?')

    def wait(self):
        """Block until every message sent before has executed (*OPC?)."""
        return self.query('*OPC?')

    def errors(self):
        """Drain the instrument error queue."""
        found = []
        while True:
            code, _, message = self.query('SYST:ERR?').partition(',')
            if int(code) == 0:
                return found
            found.append(ScpiError(int(code),message.strip('"')))

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def parse_response_number(text):
    arg = parse_number(text)
    if arg.kind is not ArgKind.NUMBER:
        raise LabbenchError(f'expected a number, got {text!r}')
    return arg.value


def _raise_bridge_error(line, selector):
    if line.startswith('ERR 404'):
        raise InstrumentNotFoundError(f'no instrument matches {selector!r}')
    if line.startswith('ERR 409'):
        raise AmbiguousModelError(f'{selector!r} is ambiguous; use a serial')
    raise BridgeConnectionError(f'bridge refused {selector!r}: {line}')


class BridgeSession(InstrumentSession):
    """One TCP session bound to one instrument."""
    def __init__(self, host=lb_prms.host, port=lb_prms.port, timeout=lb_prms.timeout):
        super().__init__()
        self.host = host
        self.port = port
        self.timeout = timeout
        try:
            self._sock = socket.create_connection((host,port),timeout=timeout)
        except socket.timeout as err:
            raise BridgeTimeoutError(f'connecting to {host}:{port} timed out') from err
        except OSError as err:
            raise BridgeConnectionError(f'cannot reach bridge at {host}:{port}: {err}') from err
        # small request lines must not wait on delayed ACKs
        self._sock.setsockopt(socket.IPPROTO_TCP,socket.TCP_NODELAY,1)
        self._rfile = self._sock.makefile('rb')

    def _write(self, text):
        try:
            self._sock.sendall((text + '\n').encode(lb_prms.encoding))
        except socket.timeout as err:
            raise BridgeTimeoutError(f'sending to {self.host}:{self.port} timed out') from err
        except OSError as err:
            raise BridgeConnectionError(f'bridge connection lost: {err}') from err

    def _readline(self):
        try:
            raw = self._rfile.readline()
        except socket.timeout as err:
            raise BridgeTimeoutError(f'no response within {self.timeout} s') from err
        except OSError as err:
            raise BridgeConnectionError(f'bridge connection lost: {err}') from err
        if not raw:
            raise BridgeConnectionError('bridge closed the connection')
        return raw.decode(lb_prms.encoding,errors='replace').rstrip('\r\n')

    def list_instruments(self):
        """LIST handshake (only before CONNECT)."""
        self._write('LIST')
        ids = []
        while True:
            line = self._readline()
            if line == 'OK':
                return ids
            if line.startswith('ERR'):
                raise BridgeConnectionError(f'LIST refused: {line}')
            model, serial, kind = line.split()
            ids.append(InstrumentId(model,serial,Kind(kind)))

    def bind(self, selector):
        """CONNECT handshake; the session then speaks SCPI to that instrument."""
        ids = self.list_instruments()
        self._write(f'CONNECT {selector}')
        line = self._readline()
        if not line.startswith('OK '):
            _raise_bridge_error(line,selector)
        serial = line[3:].strip()
        self.instrument = next(i for i in ids if i.serial == serial)
        log.debug('Bound to %s at %s:%s',serial,self.host,self.port)
        return self

    def close(self):
        try:
            self._rfile.close()
            self._sock.close()
        except OSError:
            pass


class LocalSession(InstrumentSession):
    """In-process session on a Bench; responses queue up as on a socket."""
    def __init__(self, bench, selector):
        super().__init__()
        self.bench = bench
        self.instrument = bench.registry.resolve(selector)
        self._pending = deque()

    def _write(self, text):
        self._pending.extend(self.bench.execute_message(self.instrument.serial,text))

    def _readline(self):
        if not self._pending:
            raise BridgeTimeoutError('message produced no response')
        return self._pending.popleft()


def connect(host, port, selector, timeout=lb_prms.timeout):
    """
    Open a TCP session bound to the instrument named by selector.

    Returns
    -------
    BridgeSession
    """
    session = BridgeSession(host,port,timeout)
    try:
        return session.bind(selector)
    except Exception:
        session.close()
        raise


def list_instruments(host, port, timeout=lb_prms.timeout):
    session = BridgeSession(host,port,timeout)
    try:
        return session.list_instruments()
    finally:
        session.close()
