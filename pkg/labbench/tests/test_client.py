import socket
from collections import deque

import pytest

from labbench.client import (BridgeSession, InstrumentSession, LocalSession, connect,
                             list_instruments)
from labbench.config import BenchConfig
from labbench.exceptions import (BridgeConnectionError, BridgeTimeoutError, BridgeUsageError,
                                 InstrumentNotFoundError)
from labbench.instruments import Bench, InstrumentId, Kind
from labbench.scpi import ScpiError
from labbench.server import BridgeServer


class Recorder(InstrumentSession):
    """Session that records the bytes it would send."""
    def __init__(self, kind, replies=()):
        super().__init__()
        self.instrument = InstrumentId('MODEL','SERIAL',kind)
        self.sent = []
        self.replies = deque(replies)

    def _write(self, text):
        self.sent.append(text)

    def _readline(self):
        return self.replies.popleft()


def test_golden_strings():
    psu = Recorder(Kind.PSU,['+1'])
    psu.set_voltage(2,3.0)
    psu.set_voltage(1,3)
    psu.set_voltage(1,0.1 + 0.2)
    psu.set_current_limit(1,0.1)
    psu.set_output(3,True)
    psu.set_output(3,False)
    psu.wait()
    assert psu.sent == ['INST:NSEL 2;VOLT 3.0',
                        'INST:NSEL 1;VOLT 3.0',
                        'INST:NSEL 1;VOLT 0.30000000000000004',
                        'INST:NSEL 1;CURR 0.1',
                        'INST:NSEL 3;OUTP ON',
                        'INST:NSEL 3;OUTP OFF',
                        '*OPC?']

    dmm = Recorder(Kind.DMM,['8.58000000E-07'])
    assert dmm.measure_voltage() == 8.58e-7
    assert dmm.sent == ['READ?']
    assert dmm.request_count == 1


def test_kind_mismatch_sends_nothing():
    psu = Recorder(Kind.PSU)
    with pytest.raises(BridgeUsageError):
        psu.measure_voltage()
    dmm = Recorder(Kind.DMM)
    with pytest.raises(BridgeUsageError):
        dmm.set_voltage(1,1.0)
    with pytest.raises(BridgeUsageError):
        dmm.set_output(1,True)
    for channel in (0,4,1.5):
        with pytest.raises(BridgeUsageError):
            psu.set_voltage(channel,1.0)
    assert psu.sent == [] and dmm.sent == []


def test_errors_drain():
    psu = Recorder(Kind.PSU,['-222,"Data out of range"','-113,"Undefined header"','0,"No error"'])
    assert psu.errors() == [ScpiError(-222),ScpiError(-113)]


def test_measure_round_trip():
    for value in (1e-9,3.14159265,2.5e2,999.0):
        dmm = Recorder(Kind.DMM,[f'{value:.8E}'])
        assert dmm.measure_voltage() == pytest.approx(value,rel=1e-8)


def test_tcp_session(bridge, address):
    host, port = address
    with connect(host,port,'EDU36311A') as psu:
        assert psu.kind is Kind.PSU
        assert psu.instrument.serial == 'PSU-001'
        assert psu.query('*IDN?') == 'LABBENCH,EDU36311A,PSU-001,0.1'
        psu.command('VOLT 1.5')
        assert psu.query('VOLT?') == '1.50000000E+00'
        psu.set_voltage(2,3.0)
        assert psu.query('INST:NSEL 2;VOLT?') == '3.00000000E+00'
        psu.set_current_limit(1,0.1)
        assert psu.query('INST:NSEL 1;CURR?') == '1.00000000E-01'
        assert psu.errors() == []


def test_tcp_measurement(bridge, address):
    host, port = address
    with connect(host,port,'PSU-001') as psu, connect(host,port,'DMM-001') as dmm:
        for ch, v in ((1,0.0),(2,3.0),(3,0.0)):
            psu.set_voltage(ch,v)
            psu.set_output(ch,True)
        psu.wait()
        assert dmm.measure_voltage() == pytest.approx(3.0,abs=1e-3)


def test_list_instruments(bridge, address):
    ids = list_instruments(*address)
    assert [(i.model,i.serial,i.kind) for i in ids] == [('EDU36311A','PSU-001',Kind.PSU),
                                                        ('EDU34450A','DMM-001',Kind.DMM)]


def test_connect_errors(bridge, address):
    with pytest.raises(InstrumentNotFoundError):
        connect(*address,'NOPE')
    probe = socket.socket()
    probe.bind(('127.0.0.1',0))
    free_port = probe.getsockname()[1]
    probe.close()
    with pytest.raises(BridgeConnectionError):
        connect('127.0.0.1',free_port,'PSU-001',timeout=1)


def test_query_after_server_close():
    server = BridgeServer(BenchConfig(),host='127.0.0.1',port=0).start()
    session = connect('127.0.0.1',server.port,'DMM-001',timeout=1)
    server.shutdown()
    with pytest.raises((BridgeConnectionError,BridgeTimeoutError)):
        session.query('*IDN?')
    session.close()


def test_timeout(bridge, address):
    session = BridgeSession(*address,timeout=0.2)
    # a bound session answers nothing for a command without a query
    session.bind('PSU-001')
    session._write('VOLT 1')
    with pytest.raises(BridgeTimeoutError):
        session._readline()
    session.close()


def test_local_session():
    bench = Bench.from_config(BenchConfig())
    psu = LocalSession(bench,'EDU36311A')
    dmm = LocalSession(bench,'DMM-001')
    assert psu.identify() == 'LABBENCH,EDU36311A,PSU-001,0.1'
    psu.set_voltage(2,3.0)
    psu.set_output(2,True)
    assert psu.wait() == '+1'
    assert dmm.measure_voltage() == pytest.approx(3.0,abs=1e-3)
    psu.command('VOLT 99')
    assert [e.code for e in psu.errors()] == [-222]
    with pytest.raises(BridgeTimeoutError):
        psu.query('VOLT 1')


def test_sockets_send_without_delay(bridge, address):
    with connect(*address,'PSU-001') as psu:
        assert psu._sock.getsockopt(socket.IPPROTO_TCP,socket.TCP_NODELAY) != 0
        assert psu.wait() == '+1'
        with bridge._conn_lock:
            connections = list(bridge._connections)
        assert connections
        assert all(conn.getsockopt(socket.IPPROTO_TCP,socket.TCP_NODELAY) != 0
                   for conn in connections)
