"""Problem configuration, input file formats and run reports.

A problem is described by one structured-text document (JSON or YAML)::

    generator: gen.txt            # coordinate file, or {matrix: [[...]]}
    weights: uniform              # or a file of numbers, or an inline list
    p: 2
    nonlinearity: {kind: logistic, mu: 3.0, beta: 1.0}
    solver: {inner_tol: 1.0e-12, k_doublings: 30}
    seed: 0
    strict: false
    uniqueness: false
    oracle: {paths: 100000, start: 0, alpha: 0.0}
    verify: {suites: [...], sizes: {kato_inequality: 200}}

Coordinate generator files hold a header ``n nnz`` followed by ``nnz``
lines ``i j value`` with 1-based indices; ``#`` and ``%`` start comments.
Relative paths are resolved against the directory of the config file.
"""

from __future__ import annotations

import json
import math
import platform
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .extended import ExtendedReal
from .nonlinearity import Nonlinearity, SamplingGrid, from_spec
from .solver import SolverOptions
from .state_model import GeneratorModel, MeasureSpace, validate_generator


def _data_lines(text: str):
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].split("%", 1)[0].strip()
        if line:
            yield line


def parse_coordinate(text: str) -> np.ndarray:
    """Dense matrix from the ``n nnz`` / ``i j value`` coordinate format."""
    lines = list(_data_lines(text))
    if not lines:
        raise ConfigError("empty generator file")
    head = lines[0].split()
    try:
        n, nnz = int(head[0]), int(head[1])
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"bad header {lines[0]!r}; expected 'n nnz'") from exc
    if n < 1 or nnz < 0:
        raise ConfigError("header needs n >= 1 and nnz >= 0")
    if len(lines) - 1 != nnz:
        raise ConfigError(f"header announces {nnz} entries, found {len(lines) - 1}")
    L = np.zeros((n, n))
    seen = set()
    for ln in lines[1:]:
        parts = ln.replace(",", " ").split()
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"bad entry line {ln!r}") from exc
        if not (1 <= i <= n and 1 <= j <= n):
            raise ConfigError(f"index ({i}, {j}) outside 1..{n}")
        if (i, j) in seen:
            raise ConfigError(f"duplicate entry ({i}, {j})")
        if not math.isfinite(v):
            raise ConfigError(f"non-finite entry at ({i}, {j})")
        seen.add((i, j))
        L[i - 1, j - 1] = v
    return L


def format_coordinate(L) -> str:
    L = np.asarray(L, float)
    rows, cols = np.nonzero(L)
    out = [f"{L.shape[0]} {rows.size}"]
    out += [f"{i + 1} {j + 1} {float(L[i, j])!r}" for i, j in zip(rows, cols)]
    return "\n".join(out) + "\n"


def parse_vector(text: str) -> np.ndarray:
    vals = [float(tok) for ln in _data_lines(text) for tok in ln.replace(",", " ").split()]
    if not vals:
        raise ConfigError("empty vector file")
    return np.array(vals)


def write_csv(path: Path, u) -> None:
    """Vector as ``state,value`` CSV (0-based states)."""
    with open(path, "w") as fh:
        fh.write("state,value\n")
        for i, x in enumerate(np.asarray(u, float)):
            fh.write(f"{i},{float(x)!r}\n")


def read_csv(path: Path) -> np.ndarray:
    rows = Path(path).read_text().splitlines()[1:]
    return np.array([float(r.split(",")[1]) for r in rows if r.strip()])


@dataclass
class ProblemConfig:
    model: GeneratorModel
    nonlinearity: Nonlinearity | None
    options: SolverOptions
    seed: int = 0
    strict: bool = False
    uniqueness: bool = False
    oracle: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    source: str | None = None


_TOP_KEYS = {"generator", "weights", "p", "nonlinearity", "solver", "seed", "strict", "uniqueness", "oracle", "verify"}


def _resolve(base: Path, ref) -> Path:
    path = Path(ref)
    if not path.is_absolute():
        path = base / path
    if not path.exists():
        raise ConfigError(f"referenced file {str(ref)!r} does not exist")
    return path


def _load_generator(doc, base: Path) -> np.ndarray:
    if isinstance(doc, str):
        return parse_coordinate(_resolve(base, doc).read_text())
    if isinstance(doc, dict):
        if "file" in doc:
            return parse_coordinate(_resolve(base, doc["file"]).read_text())
        if "matrix" in doc:
            try:
                L = np.array(doc["matrix"], dtype=float)
            except (TypeError, ValueError) as exc:
                raise ConfigError("generator matrix must be numeric") from exc
            if L.ndim != 2 or L.shape[0] != L.shape[1]:
                raise ConfigError("generator matrix must be square")
            return L
        if "coordinate" in doc:
            return parse_coordinate(str(doc["coordinate"]))
    raise ConfigError("generator must be a file path or {file|matrix|coordinate: ...}")


def _load_weights(doc, n: int, base: Path) -> np.ndarray:
    if doc is None or doc == "uniform":
        return np.ones(n)
    if isinstance(doc, str):
        w = parse_vector(_resolve(base, doc).read_text())
    elif isinstance(doc, dict) and "file" in doc:
        w = parse_vector(_resolve(base, doc["file"]).read_text())
    else:
        w = np.asarray(doc, dtype=float)
    if w.shape != (n,):
        raise ConfigError(f"weights need {n} entries, got {w.size}")
    return w


def _options(doc: dict | None) -> SolverOptions:
    doc = dict(doc or {})
    known = {f.name for f in fields(SolverOptions)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown solver options {sorted(unknown)}")
    if "grid" in doc:
        grid = dict(doc["grid"])
        if "deltas" in grid:
            grid["deltas"] = tuple(float(d) for d in grid["deltas"])
        try:
            doc["grid"] = SamplingGrid(**grid)
        except TypeError as exc:
            raise ConfigError(f"bad grid options: {exc}") from exc
    try:
        return SolverOptions(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad solver options: {exc}") from exc


def parse_config(doc: dict, base: Path | str = ".") -> ProblemConfig:
    """Build a :class:`ProblemConfig`; generator errors propagate unchanged."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    if "generator" not in doc:
        raise ConfigError("config needs a generator")
    base = Path(base)
    L = _load_generator(doc["generator"], base)
    n = L.shape[0]
    p = float(doc.get("p", 2.0))
    try:
        space = MeasureSpace(n, _load_weights(doc.get("weights", "uniform"), n, base), p)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    model = validate_generator(L, space)
    f = None
    if doc.get("nonlinearity") is not None:
        try:
            f = from_spec(doc["nonlinearity"], n)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad nonlinearity: {exc}") from exc
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    return ProblemConfig(
        model,
        f,
        _options(doc.get("solver")),
        seed,
        bool(doc.get("strict", False)),
        bool(doc.get("uniqueness", False)),
        dict(doc.get("oracle") or {}),
        dict(doc.get("verify") or {}),
    )


def load_config(path) -> ProblemConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(path)!r}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {str(path)!r}: {exc}") from exc
    cfg = parse_config(doc, path.parent)
    cfg.source = str(path)
    return cfg


# --------------------------------------------------------------------------
# reports


def to_jsonable(obj):
    """Plain JSON data; infinities become ``"+inf"``/``"-inf"``."""
    if isinstance(obj, ExtendedReal):
        return obj.to_json()
    if hasattr(obj, "to_json"):
        return to_jsonable(obj.to_json())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isinf(x):
            return "+inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return x
    if obj is None or isinstance(obj, str):
        return obj
    return repr(obj)


def environment_fingerprint() -> dict:
    import scipy

    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.system().lower(),
    }


@dataclass
class RunReport:
    command: str
    exit_code: int
    status: str
    results: dict = field(default_factory=dict)
    environment: dict = field(default_factory=environment_fingerprint)
    timing: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "exit_code": self.exit_code,
            "status": self.status,
            "results": to_jsonable(self.results),
            "environment": to_jsonable(self.environment),
            "timing": to_jsonable(self.timing),
        }

    def serialize(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def parse(cls, text: str) -> "RunReport":
        doc = json.loads(text)
        return cls(doc["command"], doc["exit_code"], doc["status"], doc["results"], doc["environment"], doc["timing"])

    def normalized(self) -> "RunReport":
        """Copy with results, environment and timing reduced to JSON data."""
        return RunReport.parse(self.serialize())
