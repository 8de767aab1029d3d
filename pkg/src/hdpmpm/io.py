"""File formats: coded CSV data, data dictionaries, chain configs, draws and manifests.

All writers go through :func:`atomic_write_text`, so a crashed run never
leaves a partially written file under the final name.  The formats are
described field by field in the README.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import os
import tempfile
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, ParameterError, SchemaError
from .model import ChainConfig, Dataset, Hyperparameters

DEFAULT_MISSING_TOKENS = ("", "NA", ".")
DRAWS_FORMAT = "hdpmpm-draws"
DRAWS_VERSION = 1

__all__ = [
    "DEFAULT_MISSING_TOKENS",
    "VariableSpec",
    "DataDictionary",
    "RunManifest",
    "atomic_write_text",
    "load_csv",
    "save_csv",
    "load_config",
    "config_to_dict",
    "save_draws",
    "load_draws",
    "dataset_fingerprint",
    "config_hash",
]


def atomic_write_text(path, text: str):
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- data dictionary and CSV ------------------------------------------------

@dataclass(frozen=True)
class VariableSpec:
    name: str
    levels: int
    labels: Optional[tuple] = None

    def __post_init__(self):
        if int(self.levels) < 2:
            raise SchemaError(f"variable {self.name!r} needs at least 2 levels")
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != self.levels:
                raise SchemaError(f"variable {self.name!r} has {len(labels)} labels "
                                  f"for {self.levels} levels")
            if len(set(labels)) != len(labels):
                raise SchemaError(f"variable {self.name!r} has duplicate labels")
            object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "levels", int(self.levels))


@dataclass(frozen=True)
class DataDictionary:
    """Variable names, level counts, optional level labels and missing tokens."""

    variables: tuple
    missing_tokens: tuple = DEFAULT_MISSING_TOKENS

    def __post_init__(self):
        vars_ = tuple(v if isinstance(v, VariableSpec) else VariableSpec(**v)
                      for v in self.variables)
        names = [v.name for v in vars_]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate variable names {dupes}")
        if not vars_:
            raise SchemaError("data dictionary lists no variables")
        object.__setattr__(self, "variables", vars_)
        object.__setattr__(self, "missing_tokens", tuple(str(t) for t in self.missing_tokens))

    @property
    def names(self):
        return tuple(v.name for v in self.variables)

    @property
    def levels(self):
        return np.array([v.levels for v in self.variables], dtype=np.int64)

    @classmethod
    def from_dataset(cls, ds: Dataset, missing_tokens=DEFAULT_MISSING_TOKENS):
        labels = ds.level_labels or (None,) * ds.p
        return cls(tuple(VariableSpec(n, int(d), lab)
                         for n, d, lab in zip(ds.variable_names, ds.levels, labels)),
                   missing_tokens)

    def to_dict(self):
        out = []
        for v in self.variables:
            entry = {"name": v.name, "levels": v.levels}
            if v.labels is not None:
                entry["labels"] = list(v.labels)
            out.append(entry)
        return {"variables": out, "missing_tokens": list(self.missing_tokens)}

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict) or "variables" not in doc:
            raise SchemaError("data dictionary must be an object with a 'variables' list")
        try:
            variables = tuple(VariableSpec(name=str(v["name"]), levels=int(v["levels"]),
                                           labels=v.get("labels")) for v in doc["variables"])
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed variable entry in data dictionary: {exc}") from None
        return cls(variables, tuple(doc.get("missing_tokens", DEFAULT_MISSING_TOKENS)))

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(doc)

    def save(self, path):
        atomic_write_text(path, json.dumps(self.to_dict(), indent=2) + "\n")


def load_csv(path, dictionary: DataDictionary) -> Dataset:
    """Read a coded CSV file into a :class:`~hdpmpm.model.Dataset`.

    The header must list exactly the dictionary's variable names, in order.
    A cell is a missing token, an integer level code ``1..D_j`` or one of
    the variable's level labels.  Row numbers in errors count data rows
    from 1 (the header is row 0).

    Raises
    ------
    DataError
        Empty file, header mismatch, ragged row, or unknown level.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        names = list(dictionary.names)
        if header != names:
            missing = [n for n in names if n not in header]
            extra = [h for h in header if h not in names]
            raise DataError(f"{path}: header does not match the data dictionary "
                            f"(missing {missing}, unexpected {extra}, expected order {names})",
                            row=0)
        lookups = []
        for v in dictionary.variables:
            table = {str(d): d for d in range(1, v.levels + 1)}
            if v.labels is not None:
                table.update({lab: d + 1 for d, lab in enumerate(v.labels)})
            lookups.append(table)
        tokens = set(dictionary.missing_tokens)
        rows = []
        for r, line in enumerate(reader, start=1):
            if not line:
                continue
            if len(line) != len(names):
                raise DataError(f"{path}: expected {len(names)} fields, found {len(line)}", row=r)
            codes = []
            for j, raw in enumerate(line):
                cell = raw.strip()
                if cell in tokens:
                    codes.append(0)
                    continue
                code = lookups[j].get(cell)
                if code is None:
                    raise DataError(f"{path}: unknown level {raw!r} for variable with "
                                    f"{dictionary.variables[j].levels} levels", row=r,
                                    column=names[j])
                codes.append(code)
            rows.append(codes)
    if not rows:
        raise DataError(f"{path}: no data rows")
    labels = tuple(v.labels for v in dictionary.variables)
    return Dataset(cells=np.array(rows, dtype=np.int64), levels=dictionary.levels,
                   variable_names=names,
                   level_labels=labels if any(lab is not None for lab in labels) else None)


def csv_text(ds: Dataset, missing_token: str = "NA") -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ds.variable_names)
    for row, miss in zip(ds.cells, ds.mask):
        writer.writerow([missing_token if m else str(int(c)) for c, m in zip(row, miss)])
    return buf.getvalue()


def save_csv(ds: Dataset, path, missing_token: str = "NA"):
    """Write integer level codes with a header row; masked cells as ``missing_token``."""
    atomic_write_text(path, csv_text(ds, missing_token))


# -- configuration -----------------------------------------------------------

_HP_FIELDS = {f.name for f in dataclasses.fields(Hyperparameters)}
_CFG_FIELDS = {f.name for f in dataclasses.fields(ChainConfig)}


def config_to_dict(hp: Hyperparameters, cfg: ChainConfig) -> dict:
    return {**dataclasses.asdict(hp), **dataclasses.asdict(cfg)}


def load_config(source) -> tuple:
    """Parse a chain config JSON (path or dict) into ``(Hyperparameters, ChainConfig)``.

    The document is one flat object mixing the fields of both; missing
    fields take their defaults and unknown fields are rejected.
    """
    if isinstance(source, dict):
        doc = source
    else:
        with open(source, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{source}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise SchemaError("chain config must be a JSON object")
    unknown = sorted(set(doc) - _HP_FIELDS - _CFG_FIELDS)
    if unknown:
        raise SchemaError(f"unknown chain config fields {unknown}")
    try:
        hp = Hyperparameters(**{k: v for k, v in doc.items() if k in _HP_FIELDS})
        cfg = ChainConfig(**{k: v for k, v in doc.items() if k in _CFG_FIELDS})
    except (TypeError, ParameterError) as exc:
        raise SchemaError(f"invalid chain config: {exc}") from None
    return hp, cfg


# -- hashing and manifest ----------------------------------------------------

def _sha256(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


def dataset_fingerprint(ds: Dataset) -> str:
    """Hash of the cell codes, mask, level counts and variable names."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(ds.cells, dtype="<i8").tobytes())
    h.update(np.packbits(ds.mask).tobytes())
    h.update(np.ascontiguousarray(ds.levels, dtype="<i8").tobytes())
    h.update(json.dumps(list(ds.variable_names)).encode())
    h.update(repr(ds.cells.shape).encode())
    return h.hexdigest()


def config_hash(hp: Hyperparameters, cfg: ChainConfig) -> str:
    """Hash of the full configuration, seed included."""
    return _sha256(json.dumps(config_to_dict(hp, cfg), sort_keys=True).encode())


def _iso(ts):
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(ts)) if ts else None


@dataclass
class RunManifest:
    """Provenance record written next to every draws file."""

    config_hash: str
    seed: int
    software_version: str
    dataset_fingerprint: str
    started: Optional[str] = None
    finished: Optional[str] = None
    saturation_events: list = field(default_factory=list)
    restarts: int = 0
    final_K: Optional[int] = None
    draws_file: Optional[str] = None
    config: dict = field(default_factory=dict)

    @property
    def run_id(self) -> str:
        """Changes iff the configuration (with seed) or the dataset changes."""
        return _sha256(f"{self.config_hash}:{self.dataset_fingerprint}".encode())[:16]

    @classmethod
    def for_run(cls, ds: Dataset, hp: Hyperparameters, cfg: ChainConfig, draws=None,
                draws_file=None):
        from . import __version__
        m = cls(config_hash=config_hash(hp, cfg), seed=int(cfg.seed),
                software_version=__version__, dataset_fingerprint=dataset_fingerprint(ds),
                draws_file=None if draws_file is None else os.path.basename(os.fspath(draws_file)),
                config=config_to_dict(hp, cfg))
        if draws is not None:
            m.started, m.finished = _iso(draws.started), _iso(draws.finished)
            m.saturation_events = [int(e) for e in draws.saturation_events]
            m.restarts = int(draws.restarts)
            m.final_K = int(draws.K)
        return m

    def to_dict(self):
        out = dataclasses.asdict(self)
        out["run_id"] = self.run_id
        return out

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        doc.pop("run_id", None)
        try:
            return cls(**doc)
        except TypeError as exc:
            raise SchemaError(f"malformed manifest: {exc}") from None

    def save(self, path):
        atomic_write_text(path, json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


# -- posterior draws (NDJSON) ------------------------------------------------

def _dumps(obj):
    # repr-based float formatting round-trips doubles exactly
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def _draw_record(index, d, has_pi, has_z):
    rec = {"type": "draw", "index": index, "iteration": int(d.iteration),
           "beta": d.beta.tolist(), "gamma": float(d.gamma), "alpha0": float(d.alpha0),
           "occupied": int(d.occupied), "phi": d.phi.tolist(),
           "permutation": None if d.permutation is None else [int(k) for k in d.permutation]}
    if has_pi:
        rec["pi"] = d.pi.tolist()
    if has_z:
        rec["z"] = d.z.tolist()
    return rec


def save_draws(draws, path, manifest: Optional[RunManifest] = None):
    """Write draws as newline-delimited JSON: header, one line per draw, footer.

    ``pi`` and ``z`` are written only when the draws carry them
    (``has_pi`` / ``has_z``).  The write is atomic.
    """
    hp, cfg = draws.hyperparameters, draws.config
    header = {"type": "header", "format": DRAWS_FORMAT, "version": DRAWS_VERSION,
              "K": int(draws.K), "levels": [int(v) for v in draws.levels],
              "variable_names": list(draws.variable_names),
              "has_pi": bool(draws.has_pi), "has_z": bool(draws.has_z),
              "n_draws": len(draws.draws), "config": config_to_dict(hp, cfg),
              "run_id": None if manifest is None else manifest.run_id}
    lines = [_dumps(header)]
    for s, d in enumerate(draws.draws):
        lines.append(_dumps(_draw_record(s, d, draws.has_pi, draws.has_z)))
    footer = {"type": "footer", "n_draws": len(draws.draws),
              "kept_iterations": [int(k) for k in draws.kept_iterations],
              "occupied_counts": [int(c) for c in draws.occupied_counts],
              "saturation_events": [int(e) for e in draws.saturation_events],
              "restarts": int(draws.restarts), "started": draws.started,
              "finished": draws.finished}
    lines.append(_dumps(footer))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_draws(path):
    """Inverse of :func:`save_draws`.

    Raises
    ------
    SchemaError
        Wrong format tag or version, malformed records, missing fields, or a
        truncated file (the message names the last complete draw).
    """
    from .sampler import Draw, PosteriorDraws

    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if not text.strip():
        raise SchemaError(f"{path}: empty draws file")
    raw_lines = text.split("\n")
    complete = text.endswith("\n")
    if complete:
        raw_lines = raw_lines[:-1]
    records = []
    for n, line in enumerate(raw_lines):
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError:
            if n == len(raw_lines) - 1:
                complete = False
                break
            raise SchemaError(f"{path}: line {n + 1} is not valid JSON") from None

    def last_complete():
        draws_seen = [r for r in records if isinstance(r, dict) and r.get("type") == "draw"]
        if not draws_seen:
            return "no complete draw record"
        r = draws_seen[-1]
        return f"last complete record is draw {r.get('index')} (iteration {r.get('iteration')})"

    header = records[0] if records else None
    if not isinstance(header, dict) or header.get("type") != "header":
        raise SchemaError(f"{path}: first record is not a draws header")
    if header.get("format") != DRAWS_FORMAT or header.get("version") != DRAWS_VERSION:
        raise SchemaError(f"{path}: unsupported format {header.get('format')!r} "
                          f"version {header.get('version')!r}")
    footer = records[-1] if len(records) > 1 else None
    if not complete or not isinstance(footer, dict) or footer.get("type") != "footer":
        raise SchemaError(f"{path}: truncated draws file; {last_complete()}")
    body = records[1:-1]
    if len(body) != header.get("n_draws") or len(body) != footer.get("n_draws"):
        raise SchemaError(f"{path}: expected {header.get('n_draws')} draws, found {len(body)}; "
                          f"{last_complete()}")
    has_pi, has_z = bool(header["has_pi"]), bool(header["has_z"])
    draws = []
    for s, rec in enumerate(body):
        if rec.get("type") != "draw" or rec.get("index") != s:
            raise SchemaError(f"{path}: record {s + 1} is not draw {s}")
        try:
            d = Draw(iteration=int(rec["iteration"]), beta=np.array(rec["beta"], dtype=float),
                     phi=np.array(rec["phi"], dtype=float), gamma=float(rec["gamma"]),
                     alpha0=float(rec["alpha0"]), occupied=int(rec["occupied"]),
                     pi=np.array(rec["pi"], dtype=float) if has_pi else None,
                     z=np.array(rec["z"], dtype=np.int64) if has_z else None,
                     permutation=None if rec.get("permutation") is None
                     else np.array(rec["permutation"], dtype=np.int64))
        except KeyError as exc:
            raise SchemaError(f"{path}: draw {s} lacks field {exc}") from None
        if d.beta.shape != (header["K"],) or d.phi.shape[:2] != (header["K"], len(header["levels"])):
            raise SchemaError(f"{path}: draw {s} has shapes inconsistent with the header")
        draws.append(d)
    try:
        hp, cfg = load_config(header["config"])
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    if hp.K != header["K"]:
        hp = dataclasses.replace(hp, K=int(header["K"]))
    return PosteriorDraws(
        draws=draws, kept_iterations=list(footer["kept_iterations"]),
        occupied_counts=np.array(footer["occupied_counts"], dtype=np.int64), config=cfg,
        hyperparameters=hp, levels=np.array(header["levels"], dtype=np.int64),
        variable_names=tuple(header.get("variable_names", ())),
        saturation_events=list(footer.get("saturation_events", [])),
        restarts=int(footer.get("restarts", 0)), has_pi=has_pi, has_z=has_z,
        started=footer.get("started") or 0.0, finished=footer.get("finished") or 0.0,
    )


def require_field(draws, name: str):
    """Raise a clear error when flag-gated draw content (``pi``/``z``) is absent."""
    from .errors import PreconditionError

    flag = {"pi": "has_pi", "z": "has_z"}[name]
    if not getattr(draws, flag):
        raise PreconditionError(f"the draws were saved without {name}; rerun with store_{name}")
