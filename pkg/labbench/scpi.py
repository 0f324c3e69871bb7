"""
SCPI program message parsing and response formatting.

Headers are folded to their canonical short form with the SCPI rule
(first four characters, or three when the fourth is a vowel). Whether a
header exists is decided by the instrument, which compares the original
tokens against its long forms with mnemonic_matches.
"""
# Built-in libraries
import enum
import math
import re
from dataclasses import dataclass, field

ERROR_MESSAGES = {0:'No error',
                  -102:'Syntax error',
                  -109:'Missing parameter',
                  -113:'Undefined header',
                  -222:'Data out of range',
                  -350:'Queue overflow'}

_MNEMONIC = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z",re.ASCII)
_COMMON = re.compile(r"\*[A-Za-z]+\Z",re.ASCII)
_NUMBER = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?\Z",re.ASCII)
_VOWELS = set('AEIOU')
# mnemonics whose short form breaks the vowel rule
_IRREGULAR = {'NSELECT':'NSEL'}


class ScpiError(Exception):
    """SCPI error queue entry: negative code plus message, 0 means no error."""
    def __init__(self, code, message=None):
        self.code = int(code)
        self.message = message if message is not None else ERROR_MESSAGES.get(self.code,'Unknown error')
        super().__init__(self.code,self.message)

    def __eq__(self, other):
        if not isinstance(other,ScpiError):
            return NotImplemented
        return (self.code,self.message) == (other.code,other.message)

    def __hash__(self):
        return hash((self.code,self.message))

    def __str__(self):
        return f'{self.code},"{self.message}"'

    def __repr__(self):
        return f'ScpiError({self.code}, {self.message!r})'


class ArgKind(enum.Enum):
    NUMBER = 'number'
    KEYWORD = 'keyword'
    TOKEN = 'token'


@dataclass(frozen=True)
class Arg:
    kind: ArgKind
    value: object

    @classmethod
    def number(cls, value):
        return cls(ArgKind.NUMBER,float(value))

    @classmethod
    def keyword(cls, name):
        return cls(ArgKind.KEYWORD,name)

    @classmethod
    def token(cls, text):
        return cls(ArgKind.TOKEN,text)


@dataclass(frozen=True)
class CommandUnit:
    """
    One header of a program message.

    Attributes
    ----------
    path : tuple of str
        canonical short-form mnemonics from the root
    headers : tuple of str
        the tokens as sent (uppercased), same length as path
    is_common : bool
        '*' command; path then holds a single element such as '*IDN'
    is_query : bool
    args : tuple of Arg
    depth : int
        number of mnemonics written in this unit itself
    rooted : bool
        the unit started with ':' (or is a common command)
    """
    path: tuple
    headers: tuple
    is_common: bool = False
    is_query: bool = False
    args: tuple = field(default_factory=tuple)
    depth: int = field(default=1,compare=False)
    rooted: bool = field(default=True,compare=False)


def short_form(mnemonic):
    """Canonical short form of a mnemonic (e.g. VOLTage -> VOLT, ERRor -> ERR)."""
    token = mnemonic.upper()
    if token in _IRREGULAR:
        return _IRREGULAR[token]
    if len(token) <= 4:
        return token
    if token[3] in _VOWELS:
        return token[:3]
    return token[:4]


def mnemonic_matches(token, long_form):
    """
    True if token is the short or the long form of long_form.

    long_form carries its short form in uppercase, e.g. 'VOLTage'.
    """
    short = ''.join(ch for ch in long_form if ch.isupper() or ch.isdigit() or ch in '*_')
    folded = token.upper()
    return folded == short.upper() or folded == long_form.upper()


def parse_number(token):
    """
    Parse one program data token.

    Returns
    -------
    Arg
        NR1/NR2/NR3 numbers, MIN/MAX/ON/OFF keywords, else a bare token
    """
    text = token.strip()
    if _NUMBER.match(text):
        value = float(text)
        if math.isfinite(value):
            return Arg.number(value)
        return Arg.token(text)
    for name, long_form in (('MIN','MINimum'),('MAX','MAXimum'),('ON','ON'),('OFF','OFF')):
        if mnemonic_matches(text,long_form):
            return Arg.keyword(name)
    return Arg.token(text)


def format_nr3(value):
    """NR3 response text, 9 significant digits: 3.0 -> '3.00000000E+00'."""
    value = float(value)
    if value == 0:
        value = 0.0
    return f'{value:.8E}'


def _split_units(line):
    # no string data is supported, so ';' always separates units
    return line.split(';')


def _parse_unit(text, parent):
    """Parse one unit. Returns (CommandUnit, new parent path) or raises ScpiError."""
    text = text.strip()
    if not text:
        raise ScpiError(-102)
    parts = text.split(None,1)
    header = parts[0]
    rest = parts[1] if len(parts) > 1 else ''

    is_query = header.endswith('?')
    if is_query:
        header = header[:-1]

    args = tuple(parse_number(tok) for tok in re.split(r'[\s,]+',rest.strip()) if tok)
    if rest.strip() and (rest.strip().startswith(',') or rest.strip().endswith(',')):
        raise ScpiError(-102)

    if header.startswith('*'):
        if not _COMMON.match(header):
            raise ScpiError(-102)
        name = header.upper()
        unit = CommandUnit(path=(name,),headers=(name,),is_common=True,
                           is_query=is_query,args=args)
        # common commands leave the tree position untouched
        return unit, parent

    from_root = header.startswith(':')
    if from_root:
        header = header[1:]
    tokens = header.split(':')
    if not tokens or not all(_MNEMONIC.match(tok) for tok in tokens):
        raise ScpiError(-102)
    prefix_path, prefix_headers = ((),()) if from_root else parent
    path = prefix_path + tuple(short_form(tok) for tok in tokens)
    headers = prefix_headers + tuple(tok.upper() for tok in tokens)
    unit = CommandUnit(path=path,headers=headers,is_query=is_query,args=args,
                       depth=len(tokens),rooted=from_root or not prefix_path)
    return unit, (path[:-1],headers[:-1])


def parse_message(line):
    """
    Parse one newline-stripped program message.

    Units are separated by ';'. A unit starting with ':' or '*' resolves
    from the root; any other unit resolves under the parent node of the
    previous header.

    Returns
    -------
    list of CommandUnit, or ScpiError
        the whole message is rejected on the first malformed unit
    """
    if not isinstance(line,str):
        return ScpiError(-102)
    if not line.strip():
        return []
    units = []
    parent = ((),())
    try:
        for text in _split_units(line):
            unit, parent = _parse_unit(text,parent)
            units.append(unit)
    except ScpiError as err:
        return err
    return units
