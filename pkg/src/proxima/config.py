"""Flat ``section.key = value`` run configuration.

Files are INI-like without section headers; ``#`` and ``;`` start comments.
``--set key=value`` overrides are applied on top.
"""

from __future__ import annotations

import configparser
import os

from .basis import Restrictions, parse_term
from .errors import ParseError, PreconditionError

_ROOT = "root"


class RunConfig:
    def __init__(self, values=None):
        self.values = {k.strip(): str(v).strip() for k, v in (values or {}).items()}

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        return cls.from_string(text, source=str(path))

    @classmethod
    def from_string(cls, text, source="<config>") -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#", ";"), delimiters=("=",))
        cp.optionxform = str
        try:
            cp.read_string(f"[{_ROOT}]\n{text}", source=source)
        except configparser.Error as exc:
            raise ParseError(f"{source}: {exc}".replace("\n", " ")) from None
        return cls(dict(cp[_ROOT]))

    def override(self, assignments) -> "RunConfig":
        values = dict(self.values)
        for item in assignments or ():
            key, sep, value = item.partition("=")
            if not sep or not key.strip():
                raise ParseError(f"--set expects key=value, got {item!r}")
            values[key.strip()] = value.strip()
        return RunConfig(values)

    def relative_to(self, base_dir) -> "RunConfig":
        """Resolve relative ``paths.*`` entries against ``base_dir``."""
        values = dict(self.values)
        for k, v in values.items():
            if k.startswith("paths.") and v:
                if k == "paths.validation":
                    values[k] = ", ".join(f"{lab}:{_join(base_dir, p)}" for lab, p in _pairs(v))
                else:
                    values[k] = _join(base_dir, v)
        return RunConfig(values)

    def __contains__(self, key):
        return key in self.values and self.values[key] != ""

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None or v == "" else v

    def require(self, key) -> str:
        if key not in self:
            raise PreconditionError(f"{key} required")
        return self.values[key]

    def get_int(self, key, default=None):
        v = self.get(key)
        if v is None:
            return default
        try:
            return int(v)
        except ValueError:
            raise ParseError(f"{key} must be an integer, got {v!r}") from None

    def get_float(self, key, default=None):
        v = self.get(key)
        if v is None:
            return default
        try:
            return float(v)
        except ValueError:
            raise ParseError(f"{key} must be a number, got {v!r}") from None

    def get_floats(self, key, default=None):
        v = self.get(key)
        if v is None:
            return default
        try:
            return [float(x) for x in v.replace(";", ",").split(",") if x.strip()]
        except ValueError:
            raise ParseError(f"{key} must be a comma separated list of numbers") from None

    def get_terms(self, key, D, default=None):
        v = self.get(key)
        if v is None:
            return default
        return [parse_term(t, D) for t in v.split(",") if t.strip()]

    def restrictions(self) -> Restrictions:
        return Restrictions.parse(self.require("restriction"))

    def validation_paths(self):
        """``paths.validation = v:val.csv, ns:nested.csv`` as ``[(label, path), ...]``."""
        return _pairs(self.get("paths.validation", ""))

    def section(self, prefix) -> dict:
        p = prefix + "."
        return {k[len(p):]: v for k, v in self.values.items() if k.startswith(p) and v != ""}


def _join(base, p):
    return p if os.path.isabs(p) else os.path.normpath(os.path.join(base, p))


def _pairs(text):
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        label, sep, path = item.partition(":")
        if not sep:
            label, path = os.path.splitext(os.path.basename(item))[0], item
        out.append((label.strip(), path.strip()))
    return out
