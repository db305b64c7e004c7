"""Loading channels, quasigroups and mixtures; deterministic CSV/JSON writers."""
from __future__ import annotations

import csv
import io as _io
import json
import os
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .algebra import Quasigroup, cyclic_group, example_quasigroup, validate_quasigroup, xor_group
from .dmc import Dmc, bec, bsc, identity_channel, useless_channel
from .errors import ParseError, ValidationError
from .linmac import LinearMixture, Subspace
from .macpolar import MacChannel


def fmt(x) -> str:
    """Floats with 12 significant digits; everything else via str."""
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".12g")
    if isinstance(x, (np.integer,)):
        return str(int(x))
    if isinstance(x, bool) or x is None:
        return str(x).lower() if isinstance(x, bool) else ""
    return str(x)


def _read_json(path: str):
    if not os.path.exists(path):
        raise ParseError(f"file not found: {path}")
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON ({e})") from None
    except OSError as e:
        raise ParseError(f"{path}: {e}") from None


def _split_name(source: str):
    name, _, arg = source.partition(":")
    return name, arg


def _number(arg: str, source: str, kind=float):
    try:
        return kind(arg)
    except ValueError:
        raise ParseError(f"bad parameter in {source!r}") from None


CHANNEL_BUILTINS = ("BEC", "BSC", "identity", "useless")
QUASIGROUP_BUILTINS = ("Zn", "XOR", "paperExample")


def load_channel(source: str) -> Dmc:
    name, arg = _split_name(source)
    if name in CHANNEL_BUILTINS and arg:
        if name == "BEC":
            v = _number(arg, source)
            if not 0 <= v <= 1:
                raise ValidationError(f"erasure probability {v} outside [0, 1]")
            return bec(v)
        if name == "BSC":
            v = _number(arg, source)
            if not 0 <= v <= 1:
                raise ValidationError(f"crossover probability {v} outside [0, 1]")
            return bsc(v)
        k = _number(arg, source, int)
        if k < 1:
            raise ValidationError("alphabet size must be positive")
        return identity_channel(k) if name == "identity" else useless_channel(k)
    d = _read_json(source)
    try:
        mat = np.asarray(d["matrix"], dtype=float)
        n_in, n_out = int(d["inputs"]), int(d["outputs"])
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{source}: malformed channel file ({e})") from None
    if mat.size != n_in * n_out:
        raise ParseError(f"{source}: matrix has {mat.size} entries, expected {n_in}x{n_out}")
    return Dmc(mat.reshape(n_in, n_out))


def load_quasigroup(source: str) -> Quasigroup:
    name, arg = _split_name(source)
    if name in QUASIGROUP_BUILTINS and arg:
        k = _number(arg, source, int)
        if k < 1:
            raise ValidationError("quasigroup parameter must be positive")
        return {"Zn": cyclic_group, "XOR": xor_group, "paperExample": example_quasigroup}[name](k)
    d = _read_json(source)
    try:
        table = d["table"]
        size = int(d["size"])
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{source}: malformed quasigroup file ({e})") from None
    g = validate_quasigroup(table, d.get("labels"), os.path.basename(source))
    if g.size != size:
        raise ValidationError(f"{source}: size {size} does not match a {g.size}x{g.size} table")
    return g


def load_mac(source: str) -> MacChannel:
    name, arg = _split_name(source)
    if name == "XORMAC" and arg:
        # y = x1 + ... + xm over F_2
        m = _number(arg, source, int)
        x = np.arange(1 << m)
        par = np.array([bin(int(v)).count("1") % 2 for v in x])
        return MacChannel([2] * m, np.eye(2)[par])
    if name == "perfectMAC" and arg:
        m = _number(arg, source, int)
        return MacChannel([2] * m, np.eye(1 << m))
    d = _read_json(source)
    try:
        users = [int(q) for q in d["users"]]
        n_out = int(d["outputs"])
        mat = np.asarray(d["matrix"], dtype=float)
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{source}: malformed MAC file ({e})") from None
    n_in = int(np.prod(users)) if users else 1
    if mat.size != n_in * n_out:
        raise ParseError(f"{source}: matrix has {mat.size} entries, expected {n_in}x{n_out}")
    return MacChannel(users, mat.reshape(n_in, n_out))


def load_mixture(source: str) -> LinearMixture:
    d = _read_json(source)
    try:
        q, m = int(d["q"]), int(d["m"])
        comps = [(float(c["p"]), Subspace(q, m, c.get("basis") or None)) for c in d["components"]]
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{source}: malformed mixture file ({e})") from None
    return LinearMixture.build(q, m, comps)


def header(command: str, seed, config: dict) -> str:
    items = " ".join(f"{k}={config[k]}" for k in sorted(config) if config[k] is not None)
    return f"# qpolar {__version__} command={command} seed={seed} {items}".rstrip()


def render_csv(head: str, columns: Sequence[str], rows: Iterable[Sequence], footer: Iterable[str] = ()) -> str:
    buf = _io.StringIO()
    buf.write(head + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    for line in footer:
        buf.write(f"# {line}\n")
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return float(fmt(x))
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def render_json(head: str, payload: dict) -> str:
    body = json.dumps(_jsonable(payload), indent=2, sort_keys=True)
    return head + "\n" + body + "\n"


def parse_json_with_header(text: str):
    lines = text.splitlines()
    if lines and lines[0].startswith("#"):
        lines = lines[1:]
    try:
        return json.loads("\n".join(lines))
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON ({e})") from None


def read_json_with_header(path: str):
    if not os.path.exists(path):
        raise ParseError(f"file not found: {path}")
    with open(path) as fh:
        return parse_json_with_header(fh.read())


def write_text(path, text: str):
    if path in (None, "-"):
        import sys

        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)
