"""Grid case input and structured documents.

Reads the MATPOWER case subset used throughout this package (bus, gen and
branch matrices with numeric entries, percent comments, semicolon rows),
exposes the bundled test systems, and round-trips the schedule documents
consumed by the planning tools and the command line.

Branch numbering convention: branches are identified by their 1-based row
position in the case file branch matrix. Out-of-service rows are dropped at
parse time and the surviving branches are renumbered contiguously; the
original file row of every kept branch is recorded in ``source_rows``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources

import numpy as np

__all__ = [
    "Bus",
    "Generator",
    "Branch",
    "GridCase",
    "MtdScheduleDocument",
    "CaseParseError",
    "CaseValidationError",
    "DocumentFormatError",
    "BUNDLED_CASES",
    "parse_matpower_case",
    "load_bundled_case",
    "net_injections",
    "write_schedule",
    "read_schedule",
    "doa_curve_csv",
    "adp_csv",
]

BUNDLED_CASES = ("bus3", "bus6", "bus14", "bus39", "bus57", "bus118")

_BUS_KIND = {1: "pq", 2: "pv", 3: "ref"}


class CaseParseError(ValueError):
    """Case text could not be tokenized into numeric matrices."""


class CaseValidationError(ValueError):
    """Parsed case data violates a structural requirement."""


class DocumentFormatError(ValueError):
    """Schedule document fails a schema or invariant check."""


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str  # "ref", "pv" or "pq"
    pd: float  # MW


@dataclass(frozen=True)
class Generator:
    bus: int
    pg: float  # MW


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float


@dataclass(frozen=True)
class GridCase:
    """Immutable snapshot of one parsed case."""

    name: str
    base_mva: float
    buses: tuple[Bus, ...]
    generators: tuple[Generator, ...]
    branches: tuple[Branch, ...]
    source_rows: tuple[int, ...]  # original 1-based file row per kept branch

    @property
    def m(self) -> int:
        return len(self.branches)

    @property
    def n(self) -> int:
        # state dimension: every bus except the reference
        return len(self.buses) - 1

    @property
    def ref_bus(self) -> int:
        return next(b.id for b in self.buses if b.kind == "ref")

    def reactances(self) -> np.ndarray:
        return np.array([br.x for br in self.branches])

    def resistances(self) -> np.ndarray:
        return np.array([br.r for br in self.branches])


_MATRIX_OPEN = re.compile(r"^\s*(?:mpc\.)?(bus|gen|branch)\s*=\s*\[(.*)$")
_SCALAR = re.compile(r"^\s*(?:mpc\.)?baseMVA\s*=\s*([^;%]+);")


def _strip_comment(line: str) -> str:
    cut = line.find("%")
    return line if cut < 0 else line[:cut]


def _scan_matrices(text: str):
    """Return (base_mva, {name: [(line_no, row_values), ...]})."""
    base_mva = None
    matrices: dict[str, list] = {}
    current = None  # name of the matrix being accumulated
    row_buf: list[str] = []
    row_line = 0

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if current is None:
            m = _SCALAR.match(line)
            if m:
                try:
                    base_mva = float(m.group(1))
                except ValueError:
                    raise CaseParseError(f"line {line_no}: bad baseMVA value {m.group(1)!r}")
                continue
            m = _MATRIX_OPEN.match(line)
            if m:
                current = m.group(1)
                if current in matrices:
                    raise CaseParseError(f"line {line_no}: duplicate matrix {current!r}")
                matrices[current] = []
                line = m.group(2)
            else:
                continue
        # inside a matrix: rows end at ';', matrix ends at ']'
        while line:
            done = line.find("]")
            semi = line.find(";")
            if done >= 0 and (semi < 0 or done < semi):
                chunk, line = line[:done], ""
                closing = True
            elif semi >= 0:
                chunk, line = line[:semi], line[semi + 1 :]
                closing = False
            else:
                chunk, line = line, ""
                closing = False
            if chunk.strip():
                if not row_buf:
                    row_line = line_no
                row_buf.append(chunk)
            if closing or (semi >= 0 and not closing):
                if row_buf:
                    row_text = " ".join(row_buf)
                    values = []
                    for tok in row_text.split():
                        try:
                            values.append(float(tok))
                        except ValueError:
                            raise CaseParseError(
                                f"line {row_line}: non-numeric entry {tok!r} in {current!r} matrix"
                            )
                    matrices[current].append((row_line, values))
                    row_buf = []
            if closing:
                current = None
                break

    if row_buf:
        raise CaseParseError(f"line {row_line}: unterminated row in matrix")
    if current is not None:
        raise CaseParseError(f"matrix {current!r} never closed with ']'")
    if base_mva is None:
        raise CaseParseError("no baseMVA declaration found")
    if "bus" not in matrices:
        raise CaseParseError("no bus matrix found")
    return base_mva, matrices


def parse_matpower_case(text: str, name: str = "case") -> GridCase:
    """Parse MATPOWER case text into a validated GridCase.

    Only the columns used by the DC machinery are read: bus id, bus type and
    Pd from the bus matrix; bus and Pg from the gen matrix; endpoints, r, x
    and status from the branch matrix. Everything else is ignored.
    """
    base_mva, matrices = _scan_matrices(text)

    buses = []
    seen = set()
    for line_no, row in matrices["bus"]:
        if len(row) < 3:
            raise CaseParseError(f"line {line_no}: bus row needs at least 3 columns")
        bus_id = int(row[0])
        if bus_id in seen:
            raise CaseValidationError(f"line {line_no}: duplicate bus id {bus_id}")
        seen.add(bus_id)
        code = int(row[1])
        if code not in _BUS_KIND:
            raise CaseValidationError(f"line {line_no}: unsupported bus type code {code}")
        buses.append(Bus(id=bus_id, kind=_BUS_KIND[code], pd=row[2]))

    refs = [b.id for b in buses if b.kind == "ref"]
    if len(refs) != 1:
        raise CaseValidationError(f"expected exactly one reference bus, found {len(refs)}")

    gens = []
    for line_no, row in matrices.get("gen", []):
        if len(row) < 2:
            raise CaseParseError(f"line {line_no}: gen row needs at least 2 columns")
        bus_id = int(row[0])
        if bus_id not in seen:
            raise CaseValidationError(f"line {line_no}: generator at undeclared bus {bus_id}")
        gens.append(Generator(bus=bus_id, pg=row[1]))

    branches = []
    source_rows = []
    for file_row, (line_no, row) in enumerate(matrices.get("branch", []), start=1):
        if len(row) < 4:
            raise CaseParseError(f"line {line_no}: branch row needs at least 4 columns")
        status = int(row[10]) if len(row) > 10 else 1
        if status == 0:
            continue
        f, t = int(row[0]), int(row[1])
        if f not in seen or t not in seen:
            raise CaseValidationError(f"line {line_no}: branch endpoint {f}-{t} not declared")
        x = row[3]
        if x <= 0:
            raise CaseValidationError(f"line {line_no}: branch reactance must be positive, got {x}")
        branches.append(Branch(from_bus=f, to_bus=t, r=row[2], x=x))
        source_rows.append(file_row)

    return GridCase(
        name=name,
        base_mva=base_mva,
        buses=tuple(buses),
        generators=tuple(gens),
        branches=tuple(branches),
        source_rows=tuple(source_rows),
    )


def load_bundled_case(name: str) -> GridCase:
    """Load one of the bundled systems by name (see BUNDLED_CASES)."""
    if name not in BUNDLED_CASES:
        raise KeyError(f"unknown case {name!r}; bundled cases: {', '.join(BUNDLED_CASES)}")
    text = (resources.files("gridmtd") / "data" / f"{name}.m").read_text()
    return parse_matpower_case(text, name=name)


def net_injections(case: GridCase) -> np.ndarray:
    """Net MW injection (generation minus load) per bus, in case bus order."""
    pg = {b.id: 0.0 for b in case.buses}
    for g in case.generators:
        pg[g.bus] += g.pg
    return np.array([pg[b.id] - b.pd for b in case.buses])


# ---------------------------------------------------------------------------
# schedule documents

@dataclass(frozen=True)
class MtdScheduleDocument:
    """Persisted perturbation schedule.

    ``deployment`` holds 1-based branch indices. ``stages`` are full-length
    reactance vectors; each may differ from ``x0`` only on deployment
    branches and must stay inside the declared tau box.
    """

    case_name: str
    deployment: tuple[int, ...]
    tau: float
    x0: tuple[float, ...]
    stages: tuple[tuple[float, ...], ...]
    achieved_rank: int
    supremum: int


def _check_schedule(doc: MtdScheduleDocument) -> None:
    m = len(doc.x0)
    if doc.tau <= 0:
        raise DocumentFormatError(f"field 'tau': must be positive, got {doc.tau}")
    dep = doc.deployment
    if list(dep) != sorted(set(dep)):
        raise DocumentFormatError("field 'deployment': indices must be sorted and unique")
    if dep and (dep[0] < 1 or dep[-1] > m):
        raise DocumentFormatError(f"field 'deployment': indices must lie in 1..{m}")
    if any(v <= 0 for v in doc.x0):
        raise DocumentFormatError("field 'x0': reactances must be positive")
    dep_set = set(d - 1 for d in dep)
    for k, stage in enumerate(doc.stages):
        if len(stage) != m:
            raise DocumentFormatError(f"field 'stages[{k}]': length {len(stage)} != {m}")
        for l, (v, v0) in enumerate(zip(stage, doc.x0)):
            if l not in dep_set and v != v0:
                raise DocumentFormatError(
                    f"field 'stages[{k}]': branch {l + 1} changed outside the deployment set"
                )
            # tau box with a hair of slack for serialized rounding
            if abs(v - v0) > doc.tau * v0 * (1 + 1e-12):
                raise DocumentFormatError(
                    f"field 'stages[{k}]': branch {l + 1} outside the tau={doc.tau} box"
                )
    if not (0 <= doc.achieved_rank <= doc.supremum):
        raise DocumentFormatError(
            f"field 'achieved_rank': {doc.achieved_rank} not in 0..supremum={doc.supremum}"
        )


def write_schedule(doc: MtdScheduleDocument) -> str:
    """Serialize a schedule document to JSON text (bit-exact round trip)."""
    _check_schedule(doc)
    payload = {
        "case": doc.case_name,
        "branch_indexing": "file-order-1-based",
        "deployment": list(doc.deployment),
        "tau": doc.tau,
        "x0": list(doc.x0),
        "stages": [list(s) for s in doc.stages],
        "achieved_rank": doc.achieved_rank,
        "supremum": doc.supremum,
    }
    return json.dumps(payload, indent=2)


def _field(payload: dict, key: str, kind) -> object:
    if key not in payload:
        raise DocumentFormatError(f"field {key!r}: missing")
    value = payload[key]
    if not isinstance(value, kind):
        raise DocumentFormatError(f"field {key!r}: expected {kind}, got {type(value).__name__}")
    return value


def read_schedule(text: str) -> MtdScheduleDocument:
    """Parse and validate schedule JSON text."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as err:
        raise DocumentFormatError(f"not valid JSON: {err}") from err
    if not isinstance(payload, dict):
        raise DocumentFormatError("document root must be an object")
    doc = MtdScheduleDocument(
        case_name=_field(payload, "case", str),
        deployment=tuple(int(i) for i in _field(payload, "deployment", list)),
        tau=float(_field(payload, "tau", (int, float))),
        x0=tuple(float(v) for v in _field(payload, "x0", list)),
        stages=tuple(tuple(float(v) for v in s) for s in _field(payload, "stages", list)),
        achieved_rank=int(_field(payload, "achieved_rank", int)),
        supremum=int(_field(payload, "supremum", int)),
    )
    _check_schedule(doc)
    return doc


# ---------------------------------------------------------------------------
# CSV emitters

def doa_curve_csv(doa_by_stage, n: int) -> str:
    """Rows of ``stage,doa_over_n``; stage 0 is the unperturbed system."""
    if n <= 0:
        raise ValueError("n must be positive")
    lines = ["stage,doa_over_n"]
    for k, d in enumerate(doa_by_stage):
        lines.append(f"{k},{d / n:.6g}")
    return "\n".join(lines) + "\n"


def adp_csv(rows) -> str:
    """Rows of ``strategy,case,adp`` from (strategy, case, rate) triples."""
    lines = ["strategy,case,adp"]
    for strategy, case_name, rate in rows:
        lines.append(f"{strategy},{case_name},{rate:.6g}")
    return "\n".join(lines) + "\n"
