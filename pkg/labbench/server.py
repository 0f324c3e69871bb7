"""
Bridge server: exposes the bench over a TCP line protocol.

A session first issues LIST / CONNECT <selector>; once bound, every line
is a SCPI program message for that instrument. Each instrument owns one
executor thread consuming a FIFO of queued messages, and every message
runs under the bench lock, so supply settings and meter readings are
serialized across instruments.
"""
# Built-in libraries
import itertools
import logging
import queue
import signal
import socket
import socketserver
import threading
from collections import deque
from concurrent.futures import Future
from dataclasses import dataclass, field
# Local libraries
import labbench.input as lb_prms
from labbench.config import resolve_port
from labbench.exceptions import (AmbiguousModelError, BridgeConnectionError,
                                 InstrumentNotFoundError)
from labbench.instruments import Bench, InstrumentId

# Module logger
log = logging.getLogger(__name__)

AWAITING = 'awaiting-connect'
BOUND = 'bound'


@dataclass
class SessionState:
    peer: tuple
    session_id: int = 0
    phase: str = AWAITING
    instrument: InstrumentId = None


@dataclass
class QueueEntry:
    session_id: int
    text: str
    seq: int
    future: Future = field(default_factory=Future,repr=False)


class InstrumentExecutor(threading.Thread):
    """Single consumer of one instrument's command queue."""
    def __init__(self, bench, serial, history=10000):
        super().__init__(name=f'executor-{serial}',daemon=True)
        self.bench = bench
        self.serial = serial
        self.queue = queue.Queue()
        self.history = deque(maxlen=history)
        self.last_seq = 0
        self._counter = itertools.count(1)
        self._lock = threading.Lock()
        self._closed = False

    def submit(self, session_id, text):
        """Queue one message; sequence numbers follow arrival order."""
        with self._lock:
            if self._closed:
                raise BridgeConnectionError(f'{self.serial} is shutting down')
            entry = QueueEntry(session_id,text,next(self._counter))
            self.queue.put(entry)
        return entry

    def run(self):
        while True:
            entry = self.queue.get()
            if entry is None:
                break
            if entry.seq <= self.last_seq:
                log.error('%s: sequence %d after %d',self.serial,entry.seq,self.last_seq)
            try:
                responses = self.bench.execute_message(self.serial,entry.text)
            except Exception as err:
                log.exception('%s: message %r failed',self.serial,entry.text)
                entry.future.set_exception(err)
            else:
                entry.future.set_result(responses)
            self.last_seq = entry.seq
            self.history.append(entry.seq)
            log.debug('%s executed #%d from session %d',self.serial,entry.seq,entry.session_id)

    def close(self):
        """Stop accepting; queued messages still run before the thread exits."""
        with self._lock:
            if self._closed:
                return
            self._closed = True
            pending = self.queue.qsize()
            self.queue.put(None)
        log.info('%s: draining %d queued messages',self.serial,pending)


def decode_line(raw):
    """Request bytes to a line of text; undecodable bytes become U+FFFD."""
    return raw.decode(lb_prms.encoding,errors='replace').rstrip('\r\n')


class _SessionHandler(socketserver.StreamRequestHandler):
    disable_nagle_algorithm = True

    def handle(self):
        bridge = self.server.bridge
        session = bridge.open_session(self.client_address,self.connection)
        try:
            for raw in self.rfile:
                line = decode_line(raw)
                try:
                    responses = bridge.handle_line(session,line)
                except BridgeConnectionError:
                    break
                if not responses:
                    continue
                try:
                    self.wfile.write(''.join(r + '\n' for r in responses).encode(lb_prms.encoding))
                    self.wfile.flush()
                except OSError:
                    # client went away; responses are discarded
                    break
        except OSError:
            pass
        finally:
            bridge.close_session(session,self.connection)


class _TCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True
    block_on_close = False


class BridgeServer():
    """
    TCP front end of one bench.

    Use start()/shutdown() to run it in background threads (tests, the
    CLI) or serve() to block until interrupted.
    """
    def __init__(self, config, host='', port=None):
        """
        Parameters
        ==========
        config : BenchConfig
        host : str
            interface to bind, '' for all
        port : int
            overrides the configured port; 0 picks a free one
        """
        self.config = config
        self.bench = Bench.from_config(config)
        self.executors = {ident.serial:InstrumentExecutor(self.bench,ident.serial)
                          for ident in self.bench.registry}
        port = config.port if port is None else port
        self._tcp = _TCPServer((host,port),_SessionHandler,bind_and_activate=True)
        self._tcp.bridge = self
        self._session_ids = itertools.count(1)
        self._connections = set()
        self._conn_lock = threading.Lock()
        self._thread = None
        self._stopped = threading.Event()
        return

    @property
    def address(self):
        return self._tcp.server_address[:2]

    @property
    def port(self):
        return self.address[1]

    # ===== LIFECYCLE =====
    def start(self):
        for executor in self.executors.values():
            executor.start()
        self._thread = threading.Thread(target=self._tcp.serve_forever,
                                        name='bridge-accept',daemon=True)
        self._thread.start()
        log.info('Bridge serving %d instruments on %s:%d',
                 len(self.executors),self.address[0],self.port)
        return self

    def shutdown(self):
        """Stop accepting, drain every instrument queue, close sessions."""
        if self._stopped.is_set():
            return
        self._stopped.set()
        if self._thread is not None:
            self._tcp.shutdown()
            self._thread.join()
        for executor in self.executors.values():
            executor.close()
        for executor in self.executors.values():
            if executor.is_alive():
                executor.join()
        with self._conn_lock:
            connections = list(self._connections)
        for conn in connections:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
        self._tcp.server_close()
        log.info('Bridge stopped')

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.shutdown()

    def serve(self):
        """Serve until SIGINT/SIGTERM, then shut down gracefully."""
        stop = threading.Event()
        def _interrupt(signum, frame):
            log.info('Received signal %d, shutting down',signum)
            stop.set()
        previous = {sig:signal.signal(sig,_interrupt) for sig in (signal.SIGINT,signal.SIGTERM)}
        self.start()
        try:
            while not stop.wait(0.5):
                pass
        finally:
            for sig, handler in previous.items():
                signal.signal(sig,handler)
            self.shutdown()

    # ===== SESSIONS =====
    def open_session(self, peer, conn=None):
        session = SessionState(peer=peer,session_id=next(self._session_ids))
        if conn is not None:
            with self._conn_lock:
                self._connections.add(conn)
        log.info('Session %d opened from %s',session.session_id,peer)
        return session

    def close_session(self, session, conn=None):
        if conn is not None:
            with self._conn_lock:
                self._connections.discard(conn)
        log.info('Session %d closed',session.session_id)

    def handle_line(self, session, line):
        """
        Process one request line.

        Returns
        -------
        list of str
            response lines, without terminators
        """
        if session.phase == BOUND:
            return self.enqueue_and_execute(session,line)

        verb, _, rest = line.strip().partition(' ')
        verb = verb.upper()
        selector = rest.strip()
        if verb == 'LIST' and not selector:
            return [f'{i.model} {i.serial} {i.kind.value}' for i in self.bench.registry] + ['OK']
        if verb == 'CONNECT' and selector:
            try:
                ident = self.bench.registry.resolve(selector)
            except InstrumentNotFoundError:
                return ['ERR 404 instrument not found']
            except AmbiguousModelError:
                return ['ERR 409 ambiguous model']
            session.phase = BOUND
            session.instrument = ident
            log.info('Session %d bound to %s',session.session_id,ident.serial)
            return [f'OK {ident.serial}']
        return ['ERR 400 bad verb']

    def enqueue_and_execute(self, session, text):
        """Queue a program message on the bound instrument and wait for it."""
        executor = self.executors[session.instrument.serial]
        entry = executor.submit(session.session_id,text)
        return entry.future.result()


def serve(config, host='', port=None):
    """Run a bridge for config until interrupted."""
    port = resolve_port(config,port)
    server = BridgeServer(config,host=host,port=port)
    server.serve()
