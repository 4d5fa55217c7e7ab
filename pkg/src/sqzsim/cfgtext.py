"""Line-oriented ``dotted.path = value`` text format.

Grammar, one statement per line::

    # comment
    chain.eta_fiber = 0.74       # trailing comments allowed
    mode = "vacuum_squeeze"
    bhd.dark_clearance_db = none

Values are numbers (decimal or scientific) or double-quoted strings.  The
bare words ``true``/``false``/``none`` are literals; any other bare word is
read as a string.
"""

import math
import re

_PATH = re.compile(r"[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$")
_NUMBER = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_WORD = re.compile(r"[A-Za-z_][A-Za-z0-9_\-]*$")
_SPECIAL = {"true": True, "false": False, "none": None, "inf": math.inf, "nan": math.nan}


class ConfigSyntaxError(ValueError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def _strip_comment(line):
    in_str = False
    for i, ch in enumerate(line):
        if ch == '"':
            in_str = not in_str
        elif ch == "#" and not in_str:
            return line[:i]
    return line


def parse_value(raw, lineno=0):
    raw = raw.strip()
    if len(raw) >= 2 and raw[0] == raw[-1] == '"':
        body = raw[1:-1]
        if '"' in body:
            raise ConfigSyntaxError(lineno, f"unescaped quote in string {raw}")
        return body
    if _NUMBER.match(raw):
        return int(raw) if re.fullmatch(r"[+-]?\d+", raw) else float(raw)
    if raw.lower() in _SPECIAL:
        return _SPECIAL[raw.lower()]
    if _WORD.match(raw):
        return raw
    raise ConfigSyntaxError(lineno, f"cannot parse value {raw!r}")


def loads(text):
    """Parse text into an ordered ``{path: value}`` dict.

    Duplicate paths are an error: every key is stated exactly once.
    """
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = _strip_comment(line).strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigSyntaxError(lineno, f"expected 'path = value', got {body!r}")
        path, _, raw = body.partition("=")
        path = path.strip()
        if not _PATH.match(path):
            raise ConfigSyntaxError(lineno, f"invalid key path {path!r}")
        if not raw.strip():
            raise ConfigSyntaxError(lineno, f"missing value for {path}")
        if path in out:
            raise ConfigSyntaxError(lineno, f"duplicate key {path}")
        out[path] = parse_value(raw, lineno)
    return out


def format_value(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return f'"{value}"'


def dumps(mapping, header=None):
    lines = [f"# {h}" for h in (header or [])]
    lines += [f"{key} = {format_value(value)}" for key, value in mapping.items()]
    return "\n".join(lines) + "\n"
