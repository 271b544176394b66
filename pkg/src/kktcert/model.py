"""Problem representation, tolerances and certificate records.

A problem file is line oriented, with ``#`` starting a comment::

    n = 2
    box = [0,10] x [0,10]
    minimize: x1 + x2
    subject_to:
      1 - x1*x2 <= 0
      -x1 <= 0
      -x2 <= 0

The box is search-region metadata for samplers and the grid oracle; it is not
a constraint.  Bounds that belong to the feasible set have to be written out
as constraints, as above.

Certificate records are frozen dataclasses.  Constraint indices are 1-based
throughout, matching ``g_1 .. g_m``.  :func:`dumps` writes them as JSON with
reals at 17 significant digits, which round-trips every double exactly.
"""

from __future__ import annotations

import dataclasses
import json
import math
import re
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

from . import __version__
from .expr import Expr, ExprDomainError, ExprSyntaxError, evaluate, max_variable_index, parse, to_string

RNG_NAME = "numpy.random.PCG64 (SeedSequence-spawned streams)"

Vector = tuple[float, ...]


class ProblemFormatError(ValueError):
    """Malformed problem file; ``line`` is 1-based (0 when not line specific)."""

    def __init__(self, message: str, line: int = 0):
        prefix = f"line {line}: " if line else ""
        super().__init__(prefix + message)
        self.line = line


def as_vector(x: Sequence[float]) -> Vector:
    return tuple(float(v) for v in x)


# --------------------------------------------------------------------------
# Problem and tolerances
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Tolerances:
    eps_active: float = 1e-6
    eps_grad: float = 1e-6
    eps_kkt: float = 1e-6
    eps_feas: float = 1e-9

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                raise ValueError(f"{f.name} must be a positive finite number, got {v!r}")


@dataclass(frozen=True)
class Problem:
    """``minimize objective(x) subject to g_j(x) <= 0`` over ``R^n``."""

    n: int
    objective: Expr
    constraints: tuple[Expr, ...]
    box: tuple[tuple[float, float], ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "box", tuple((float(lo), float(hi)) for lo, hi in self.box))
        if self.n < 1:
            raise ValueError("dimension must be positive")
        if not self.constraints:
            raise ValueError("a problem needs at least one constraint")
        if len(self.box) != self.n:
            raise ValueError(f"box has {len(self.box)} intervals for dimension {self.n}")
        for i, (lo, hi) in enumerate(self.box, 1):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"box interval {i} must satisfy lo < hi, got [{lo}, {hi}]")
        for e in (self.objective, *self.constraints):
            if max_variable_index(e) > self.n:
                raise ValueError(f"expression {to_string(e)} references x{max_variable_index(e)}")

    @property
    def m(self) -> int:
        return len(self.constraints)

    @property
    def lower(self) -> Vector:
        return tuple(lo for lo, _ in self.box)

    @property
    def upper(self) -> Vector:
        return tuple(hi for _, hi in self.box)

    @property
    def box_center(self) -> Vector:
        return tuple(0.5 * (lo + hi) for lo, hi in self.box)

    def scaled(self, j: int, c: float) -> "Problem":
        """Copy with constraint ``j`` (1-based) replaced by ``c * g_j``."""
        from .expr import Binary, Const

        if c <= 0:
            raise ValueError("scale factor must be positive")
        cons = list(self.constraints)
        cons[j - 1] = Binary("*", Const(float(c)), cons[j - 1])
        return dataclasses.replace(self, constraints=tuple(cons))

    def to_text(self) -> str:
        lines = [f"n = {self.n}"]
        lines.append("box = " + " x ".join(f"[{lo!r},{hi!r}]" for lo, hi in self.box))
        lines.append(f"minimize: {to_string(self.objective)}")
        lines.append("subject_to:")
        lines.extend(f"  {to_string(g)} <= 0" for g in self.constraints)
        return "\n".join(lines) + "\n"


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_INTERVAL_RE = re.compile(rf"\[\s*({_NUM})\s*,\s*({_NUM})\s*\]")


def _parse_box(text: str, lineno: int) -> list[tuple[float, float]]:
    parts = [p.strip() for p in re.split(r"\s+x\s+", text.strip())]
    box = []
    for part in parts:
        m = _INTERVAL_RE.fullmatch(part)
        if m is None:
            raise ProblemFormatError(f"malformed box interval {part!r}", lineno)
        lo, hi = float(m.group(1)), float(m.group(2))
        if not lo < hi:
            raise ProblemFormatError(f"box interval {part!r} needs lo < hi", lineno)
        box.append((lo, hi))
    return box


def _parse_expr(text: str, n: int, lineno: int) -> Expr:
    try:
        return parse(text, n)
    except ExprSyntaxError as exc:
        raise ProblemFormatError(str(exc), lineno) from None


def load_problem(text: str, name: str = "") -> Problem:
    """Parse a problem file into a validated :class:`Problem`."""
    n: Optional[int] = None
    box = None
    objective = None
    constraints: list[Expr] = []
    in_constraints = False

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key = re.match(r"(n|box)\s*=\s*(.*)$", line)
        if key:
            in_constraints = False
            if key.group(1) == "n":
                if not re.fullmatch(r"\d+", key.group(2)) or int(key.group(2)) < 1:
                    raise ProblemFormatError(f"dimension must be a positive integer, got {key.group(2)!r}", lineno)
                n = int(key.group(2))
            else:
                box = (_parse_box(key.group(2), lineno), lineno)
            continue
        if line.startswith("minimize:"):
            in_constraints = False
            if n is None:
                raise ProblemFormatError("'n = ...' must precede the objective", lineno)
            objective = _parse_expr(line[len("minimize:"):], n, lineno)
            continue
        if line.startswith("subject_to:"):
            if n is None:
                raise ProblemFormatError("'n = ...' must precede the constraints", lineno)
            in_constraints = True
            rest = line[len("subject_to:"):].strip()
            if rest:
                constraints.append(_parse_constraint(rest, n, lineno))
            continue
        if in_constraints:
            constraints.append(_parse_constraint(line, n, lineno))
            continue
        raise ProblemFormatError(f"unrecognized line {line!r}", lineno)

    if n is None:
        raise ProblemFormatError("missing 'n = <int>'")
    if box is None:
        raise ProblemFormatError("missing 'box = [lo,hi] x ...'")
    if objective is None:
        raise ProblemFormatError("missing 'minimize:' objective")
    if not constraints:
        raise ProblemFormatError("no constraints given (at least one '<expr> <= 0' is required)")
    box_intervals, box_line = box
    if len(box_intervals) != n:
        raise ProblemFormatError(f"box has {len(box_intervals)} intervals but n = {n}", box_line)
    return Problem(n, objective, tuple(constraints), tuple(box_intervals), name)


def _parse_constraint(line: str, n: int, lineno: int) -> Expr:
    m = re.fullmatch(r"(.*?)<=\s*0(?:\.0*)?", line)
    if m is None:
        raise ProblemFormatError(f"constraint must read '<expr> <= 0', got {line!r}", lineno)
    return _parse_expr(m.group(1), n, lineno)


def read_problem(path) -> Problem:
    from pathlib import Path

    path = Path(path)
    return load_problem(path.read_text(), name=path.stem)


@dataclass(frozen=True)
class Diagnostics:
    messages: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.messages


def validate(p: Problem) -> Diagnostics:
    """Consistency report; problems are listed, never raised."""
    messages = []
    for label, e in [("objective", p.objective)] + [
        (f"constraint {j}", g) for j, g in enumerate(p.constraints, 1)
    ]:
        k = max_variable_index(e)
        if k > p.n:
            messages.append(f"{label} references x{k} but n = {p.n}")
            continue
        try:
            evaluate(e, p.box_center)
        except ExprDomainError as exc:
            messages.append(f"{label} not evaluable at box center: {exc}")
    return Diagnostics(tuple(messages))


# --------------------------------------------------------------------------
# Certificate records
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class KktPoint:
    x: Vector
    lambda_: Vector
    stationarity_residual: float
    complementarity_residual: float

    def __post_init__(self):
        if any(v < 0 for v in self.lambda_):
            raise ValueError("multipliers must be nonnegative")


@dataclass(frozen=True)
class SlaterCertificate:
    x0: Vector
    margin: float  # -max_j g_j(x0)


@dataclass(frozen=True)
class SlaterFailure:
    best_point: Vector
    best_value: float  # smallest max_j g_j reached
    starts: int


@dataclass(frozen=True)
class ConvexityViolation:
    j: int
    x: Vector
    y: Vector
    inner_product: float
    witness_t: float
    witness_point: Vector
    witness_gval: float


@dataclass(frozen=True)
class UnconfirmedViolation:
    j: int
    x: Vector
    y: Vector
    inner_product: float


@dataclass(frozen=True)
class ConvexityReport:
    """Outcome of the boundary-convexity falsifier.

    Only ``violations`` (those with a verified infeasible witness point) count
    against a set.  Not finding any is evidence, never a proof of convexity.
    """

    violations: tuple[ConvexityViolation, ...]
    unconfirmed: tuple[UnconfirmedViolation, ...]
    pairs_tested: int


@dataclass(frozen=True)
class FritzJohnCertificate:
    x: Vector
    lambda0: float
    lambda_: Vector
    residual: float
    status: str  # DEGENERATE_FJ, KKT, NOT_FJ_POINT


@dataclass(frozen=True)
class NondegeneracyFailure:
    point: Vector
    gradient_norm: float


@dataclass(frozen=True)
class ConstraintNondegeneracy:
    j: int
    samples_tested: int
    min_gradient_norm: Optional[float]  # None when no boundary point was found
    failures: tuple[NondegeneracyFailure, ...]


@dataclass(frozen=True)
class NondegeneracyReport:
    constraints: tuple[ConstraintNondegeneracy, ...]

    @property
    def ok(self) -> bool:
        return not any(c.failures for c in self.constraints)

    @property
    def min_gradient_norm(self) -> Optional[float]:
        norms = [c.min_gradient_norm for c in self.constraints if c.min_gradient_norm is not None]
        return min(norms) if norms else None


@dataclass(frozen=True)
class Provenance:
    version: str
    rng: str
    seed: int
    samples: int
    tolerances: Tolerances


def provenance(seed: int, samples: int, tol: Tolerances) -> Provenance:
    return Provenance(f"kktcert {__version__}", RNG_NAME, int(seed), int(samples), tol)


STATUSES = (
    "CERTIFIED_MODULO_SAMPLING",
    "REFUTED_CONVEXITY",
    "DEGENERATE_FJ",
    "NO_SLATER",
    "KKT_RESIDUAL_TOO_LARGE",
)


@dataclass(frozen=True)
class GlobalOptimalityCertificate:
    status: str
    x: Vector
    objective_value: Optional[float]
    kkt: Optional[KktPoint]
    slater: Optional[SlaterCertificate]
    slater_failure: Optional[SlaterFailure]
    nondegeneracy: Optional[NondegeneracyReport]
    convexity_violations: tuple[ConvexityViolation, ...]
    unconfirmed_violations: tuple[UnconfirmedViolation, ...]
    fritz_john: Optional[FritzJohnCertificate]
    provenance: Provenance

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")


@dataclass(frozen=True)
class NonnegViolation:
    point: Vector
    value: float


@dataclass(frozen=True)
class LagrangianProbeResult:
    lambda_: Vector
    fstar: float
    min_hessian_eigenvalue_seen: float
    nonneg_violations: tuple[NonnegViolation, ...]
    convex_evidence: bool
    samples_evaluated: int
    samples_skipped: int


# --------------------------------------------------------------------------
# JSON
# --------------------------------------------------------------------------

RECORD_TYPES: dict[str, type] = {}


def register(cls):
    RECORD_TYPES[cls.__name__] = cls
    return cls


for _cls in (
    Tolerances,
    KktPoint,
    SlaterCertificate,
    SlaterFailure,
    ConvexityViolation,
    UnconfirmedViolation,
    ConvexityReport,
    FritzJohnCertificate,
    NondegeneracyFailure,
    ConstraintNondegeneracy,
    NondegeneracyReport,
    Provenance,
    GlobalOptimalityCertificate,
    NonnegViolation,
    LagrangianProbeResult,
    Diagnostics,
):
    register(_cls)


def _key(name: str) -> str:
    # ``lambda`` is a Python keyword
    return name[:-1] if name.endswith("_") else name


def to_jsonable(obj: Any) -> Any:
    """Convert records into plain JSON-ready data, tagging each with its type."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        out = {"type": type(obj).__name__}
        for f in dataclasses.fields(obj):
            out[_key(f.name)] = to_jsonable(getattr(obj, f.name))
        return out
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return obj
    if hasattr(obj, "item"):  # numpy scalars
        return to_jsonable(obj.item())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def from_jsonable(data: Any) -> Any:
    """Inverse of :func:`to_jsonable`; sequences come back as tuples."""
    if isinstance(data, dict):
        if "type" in data and data["type"] in RECORD_TYPES:
            cls = RECORD_TYPES[data["type"]]
            kwargs = {}
            for f in dataclasses.fields(cls):
                if _key(f.name) in data:
                    kwargs[f.name] = from_jsonable(data[_key(f.name)])
            return cls(**kwargs)
        return {k: from_jsonable(v) for k, v in data.items()}
    if isinstance(data, list):
        return tuple(from_jsonable(v) for v in data)
    return data


def _encode(obj: Any, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1)) if indent else ""
    end = "\n" + " " * (indent * level) if indent else ""
    sep = "," if indent else ", "
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError(f"refusing to serialize non-finite value {obj!r}")
        text = format(obj, ".17g")
        return text if any(c in text for c in ".en") else text + ".0"
    if isinstance(obj, (int, str)):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{" + sep.join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[" + sep.join(items) + end + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    """Deterministic JSON text; reals carry 17 significant digits."""
    return _encode(to_jsonable(obj), indent, 0)


def loads(text: str) -> Any:
    return from_jsonable(json.loads(text))
