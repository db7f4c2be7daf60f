"""Vocabulary loading, entity annotation, financial filtering, and per-bucket
document-entity matrices.

The occurrence matrix is strictly binary: a document either mentions an entity
(at least once, as a whole-token sequence) or it does not. Multiplicity is
discarded at annotation time.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import (
    ConfigError,
    IntegrityError,
    ParseError,
    VocabularyConflictError,
)

_TOKEN_RE = re.compile(r"[0-9a-z]+")

# Comparison operators allowed in filter rules.
_OPS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}

# Pseudo-category: number of distinct taxonomy roots represented in a document.
DISTINCT_ROOTS = "distinct_roots"


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs. No stemming."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class EntityDef:
    """One vocabulary entry: a concept with its lexical surface forms."""

    id: int
    canonical: str
    surface_forms: tuple[str, ...]
    taxonomy_path: tuple[str, ...]  # root -> leaf


@dataclass
class Vocabulary:
    """Immutable entity inventory with a token-phrase lookup index.

    Entity ids are dense integers ``0..n-1`` in file order. Surface forms are
    unique across entities after normalization (lowercasing, token split).
    """

    entities: list[EntityDef]
    index: dict[tuple[str, ...], int] = field(repr=False)

    def __init__(self, entities: list[EntityDef]):
        self.entities = list(entities)
        self.index = {}
        for ent in self.entities:
            for form in ent.surface_forms:
                phrase = tuple(tokenize(form))
                if not phrase:
                    raise VocabularyConflictError(
                        f"entity {ent.canonical!r}: surface form {form!r} is empty "
                        "after normalization"
                    )
                other = self.index.get(phrase)
                if other is not None and other != ent.id:
                    raise VocabularyConflictError(
                        f"surface form {form!r} maps to both "
                        f"{self.entities[other].canonical!r} and {ent.canonical!r}"
                    )
                self.index[phrase] = ent.id
        # first-token -> [(phrase, id)], longest phrase first, for greedy matching
        self._by_first: dict[str, list[tuple[tuple[str, ...], int]]] = {}
        for phrase, eid in self.index.items():
            self._by_first.setdefault(phrase[0], []).append((phrase, eid))
        for cands in self._by_first.values():
            cands.sort(key=lambda pe: (-len(pe[0]), pe[0]))

    @property
    def n(self) -> int:
        return len(self.entities)

    @property
    def roots(self) -> set[str]:
        return {e.taxonomy_path[0] for e in self.entities}

    @property
    def labels(self) -> set[str]:
        """Every taxonomy label occurring at any depth."""
        out: set[str] = set()
        for e in self.entities:
            out.update(e.taxonomy_path)
        return out


def load_vocabulary(path: str | Path) -> Vocabulary:
    """Load the vocabulary CSV: ``id,canonical,surface_forms,taxonomy_path``.

    ``surface_forms`` is pipe-separated, ``taxonomy_path`` slash-separated.
    Ids must equal the row position (dense assignment in file order).
    """
    path = Path(path)
    entities: list[EntityDef] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "missing header") from None
        if [h.strip() for h in header] != ["id", "canonical", "surface_forms", "taxonomy_path"]:
            raise ParseError(path, 1, f"unexpected header {header!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise ParseError(path, line_no, f"expected 4 columns, got {len(row)}")
            raw_id, canonical, forms_raw, tax_raw = (c.strip() for c in row)
            try:
                ent_id = int(raw_id)
            except ValueError:
                raise ParseError(path, line_no, f"non-integer id {raw_id!r}") from None
            if ent_id != len(entities):
                raise ParseError(
                    path, line_no, f"id {ent_id} out of order (expected {len(entities)})"
                )
            forms = tuple(dict.fromkeys(f.strip() for f in forms_raw.split("|") if f.strip()))
            if not forms:
                raise ParseError(path, line_no, "entity has no surface forms")
            tax = tuple(t.strip() for t in tax_raw.split("/") if t.strip())
            if not tax:
                raise ParseError(path, line_no, "empty taxonomy path")
            entities.append(EntityDef(ent_id, canonical, forms, tax))
    return Vocabulary(entities)


def annotate_document(text: str, vocab: Vocabulary) -> tuple[int, ...]:
    """Entity ids whose surface form occurs in ``text`` as a whole-token sequence.

    Matching is case-insensitive and greedy: at each position the longest
    matching phrase wins and its tokens are consumed. Occurrence counts are
    discarded; the result is a sorted set of ids.
    """
    tokens = tokenize(text)
    found: set[int] = set()
    i = 0
    n_tok = len(tokens)
    by_first = vocab._by_first
    while i < n_tok:
        advance = 1
        for phrase, eid in by_first.get(tokens[i], ()):
            k = len(phrase)
            if i + k <= n_tok and tuple(tokens[i : i + k]) == phrase:
                found.add(eid)
                advance = k
                break
        i += advance
    return tuple(sorted(found))


@dataclass(frozen=True)
class DocumentRecord:
    """One news document reduced to its entity occurrence set."""

    doc_id: str
    timestamp: datetime  # timezone-aware UTC
    source: str
    entity_ids: tuple[int, ...]  # sorted, duplicate-free

    def bucket(self) -> date:
        """UTC calendar day this document belongs to."""
        return self.timestamp.astimezone(timezone.utc).date()


def _parse_timestamp(raw: str) -> datetime:
    ts = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def load_documents(path: str | Path, vocab: Vocabulary) -> list[DocumentRecord]:
    """Read a JSON-lines document stream.

    Each line carries ``doc_id``, ``timestamp`` (RFC 3339), ``source`` and
    either raw ``text`` (annotated here) or precomputed ``entity_ids``.
    """
    path = Path(path)
    docs: list[DocumentRecord] = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, f"invalid JSON: {exc}") from None
            try:
                doc_id = str(obj["doc_id"])
                ts = _parse_timestamp(str(obj["timestamp"]))
                source = str(obj.get("source", ""))
            except KeyError as exc:
                raise ParseError(path, line_no, f"missing field {exc}") from None
            except ValueError as exc:
                raise ParseError(path, line_no, f"bad timestamp: {exc}") from None
            if "entity_ids" in obj:
                ids = sorted(set(int(i) for i in obj["entity_ids"]))
                if ids and (ids[0] < 0 or ids[-1] >= vocab.n):
                    raise ParseError(path, line_no, f"entity id out of range 0..{vocab.n - 1}")
                entity_ids = tuple(ids)
            elif "text" in obj:
                entity_ids = annotate_document(str(obj["text"]), vocab)
            else:
                raise ParseError(path, line_no, "need either 'text' or 'entity_ids'")
            docs.append(DocumentRecord(doc_id, ts, source, entity_ids))
    return docs


@dataclass(frozen=True)
class FilterRule:
    """Ordered conjunction of category-count comparisons with an action."""

    action: str  # "accept" | "reject"
    terms: tuple[tuple[str, str, int], ...]  # (category, op, threshold)

    def matches(self, counts: dict[str, int]) -> bool:
        return all(_OPS[op](counts.get(cat, 0), thr) for cat, op, thr in self.terms)


@dataclass(frozen=True)
class FilterRuleset:
    """First matching rule wins; no match falls through to ``default``."""

    rules: tuple[FilterRule, ...]
    default: str  # "accept" | "reject"

    def decide(self, counts: dict[str, int]) -> str:
        for rule in self.rules:
            if rule.matches(counts):
                return rule.action
        return self.default


def default_financial_ruleset() -> FilterRuleset:
    """Accept a document iff at least two distinct taxonomy roots are present."""
    return FilterRuleset(
        rules=(FilterRule("accept", ((DISTINCT_ROOTS, ">=", 2),)),),
        default="reject",
    )


_RULE_RE = re.compile(r"^(accept|reject)\s+if\s+(.+)$")
_TERM_RE = re.compile(r"^(\S+)\s*(<=|>=|==|!=|<|>)\s*(\d+)$")


def load_ruleset(path: str | Path, vocab: Vocabulary) -> FilterRuleset:
    """Parse a declarative ruleset file and validate categories against ``vocab``.

    Line forms (order significant)::

        accept if instrument >= 1 and region >= 1
        reject if company == 0
        default accept

    Categories are taxonomy labels at any depth, plus the pseudo-category
    ``distinct_roots``. Unknown categories raise at load time.
    """
    path = Path(path)
    known = vocab.labels | {DISTINCT_ROOTS}
    rules: list[FilterRule] = []
    default: str | None = None
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if stripped.startswith("default"):
                parts = stripped.split()
                if len(parts) != 2 or parts[1] not in ("accept", "reject"):
                    raise ConfigError(f"{path}:{line_no}: bad default line {stripped!r}")
                if default is not None:
                    raise ConfigError(f"{path}:{line_no}: duplicate default line")
                default = parts[1]
                continue
            m = _RULE_RE.match(stripped)
            if not m:
                raise ConfigError(f"{path}:{line_no}: unrecognized rule {stripped!r}")
            action, cond = m.group(1), m.group(2)
            terms = []
            for term_raw in cond.split(" and "):
                tm = _TERM_RE.match(term_raw.strip())
                if not tm:
                    raise ConfigError(f"{path}:{line_no}: bad comparison {term_raw.strip()!r}")
                cat, op, thr = tm.group(1), tm.group(2), int(tm.group(3))
                if cat not in known:
                    raise ConfigError(
                        f"{path}:{line_no}: unknown taxonomy category {cat!r}"
                    )
                terms.append((cat, op, thr))
            rules.append(FilterRule(action, tuple(terms)))
    if default is None:
        raise ConfigError(f"{path}: missing 'default accept|reject' line")
    return FilterRuleset(tuple(rules), default)


def category_counts(entity_ids: tuple[int, ...], vocab: Vocabulary) -> dict[str, int]:
    """Per-label entity counts for one document, plus ``distinct_roots``.

    An entity contributes 1 to every label on its taxonomy path.
    """
    counts: dict[str, int] = {}
    roots: set[str] = set()
    for eid in entity_ids:
        path = vocab.entities[eid].taxonomy_path
        roots.add(path[0])
        for label in path:
            counts[label] = counts.get(label, 0) + 1
    counts[DISTINCT_ROOTS] = len(roots)
    return counts


def filter_financial(
    docs: list[DocumentRecord], vocab: Vocabulary, rules: FilterRuleset
) -> list[DocumentRecord]:
    """Keep the subsequence of ``docs`` the ruleset accepts; order preserved."""
    out = []
    for doc in docs:
        if doc.entity_ids and doc.entity_ids[-1] >= vocab.n:
            raise IntegrityError(
                f"document {doc.doc_id!r}: entity id {doc.entity_ids[-1]} >= n={vocab.n}"
            )
        if rules.decide(category_counts(doc.entity_ids, vocab)) == "accept":
            out.append(doc)
    return out


@dataclass
class EntityMatrix:
    """Sparse binary document-entity occurrence matrix for one calendar day.

    ``rows[i]`` holds the strictly ascending entity ids of document ``i``
    (CSR-style). ``m`` may be zero for an empty bucket.
    """

    bucket: date
    m: int
    n: int
    rows: list[np.ndarray]
    nnz: int
    doc_ids: list[str] | None = None

    def __post_init__(self):
        if self.m != len(self.rows):
            raise IntegrityError(f"m={self.m} but {len(self.rows)} rows")
        total = 0
        for i, row in enumerate(self.rows):
            row = np.asarray(row, dtype=np.int64)
            self.rows[i] = row
            if row.size:
                if row[0] < 0 or row[-1] >= self.n:
                    raise IntegrityError(
                        f"row {i}: entity id outside [0, {self.n})"
                    )
                if np.any(np.diff(row) <= 0):
                    raise IntegrityError(f"row {i}: ids not strictly ascending")
            total += int(row.size)
        if self.nnz != total:
            raise IntegrityError(f"nnz={self.nnz} but rows sum to {total}")
        if self.doc_ids is not None and len(self.doc_ids) != self.m:
            raise IntegrityError("doc_ids length does not match m")

    @classmethod
    def from_rows(
        cls,
        bucket: date,
        n: int,
        rows: list,
        doc_ids: list[str] | None = None,
    ) -> "EntityMatrix":
        rows = [np.asarray(r, dtype=np.int64) for r in rows]
        nnz = int(sum(r.size for r in rows))
        return cls(bucket=bucket, m=len(rows), n=n, rows=rows, nnz=nnz, doc_ids=doc_ids)

    def to_csr(self) -> sp.csr_matrix:
        """Float CSR view (ones at occurrences); cached per instance."""
        cached = getattr(self, "_csr", None)
        if cached is not None:
            return cached
        indptr = np.zeros(self.m + 1, dtype=np.int64)
        for i, row in enumerate(self.rows):
            indptr[i + 1] = indptr[i] + row.size
        indices = (
            np.concatenate(self.rows) if self.rows else np.empty(0, dtype=np.int64)
        )
        data = np.ones(self.nnz, dtype=np.float64)
        csr = sp.csr_matrix((data, indices, indptr), shape=(self.m, self.n))
        self._csr = csr
        return csr


def build_matrix(
    docs: list[DocumentRecord], vocab: Vocabulary, bucket: date
) -> EntityMatrix:
    """Assemble the binary occurrence matrix for one bucket, row order = input order."""
    rows = []
    doc_ids = []
    for doc in docs:
        if doc.bucket() != bucket:
            raise IntegrityError(
                f"document {doc.doc_id!r} dated {doc.bucket()} placed in bucket {bucket}"
            )
        if doc.entity_ids and doc.entity_ids[-1] >= vocab.n:
            raise IntegrityError(
                f"document {doc.doc_id!r}: entity id {doc.entity_ids[-1]} >= n={vocab.n}"
            )
        rows.append(np.asarray(doc.entity_ids, dtype=np.int64))
        doc_ids.append(doc.doc_id)
    return EntityMatrix.from_rows(bucket, vocab.n, rows, doc_ids)


def entity_occurrence_totals(matrix: EntityMatrix) -> np.ndarray:
    """Per-entity document frequency (column sums of the binary matrix)."""
    totals = np.zeros(matrix.n, dtype=np.int64)
    for row in matrix.rows:
        totals[row] += 1
    return totals


def group_by_bucket(docs: list[DocumentRecord]) -> dict[date, list[DocumentRecord]]:
    """Split documents into UTC calendar-day buckets, preserving input order."""
    buckets: dict[date, list[DocumentRecord]] = {}
    for doc in docs:
        buckets.setdefault(doc.bucket(), []).append(doc)
    return buckets


def save_matrix(matrix: EntityMatrix, path: str | Path) -> None:
    """Write the canonical textual sparse format (bit-exact round trip).

    Line 1 is ``m n nnz bucket``; each following line is one document's
    sorted id list (blank line for an empty document).
    """
    path = Path(path)
    lines = [f"{matrix.m} {matrix.n} {matrix.nnz} {matrix.bucket.isoformat()}"]
    for row in matrix.rows:
        lines.append(" ".join(str(int(i)) for i in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_matrix(path: str | Path) -> EntityMatrix:
    """Read the textual sparse format written by :func:`save_matrix`."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError(path, 1, "empty matrix file")
    head = lines[0].split()
    if len(head) != 4:
        raise ParseError(path, 1, f"bad header {lines[0]!r}")
    try:
        m, n, nnz = int(head[0]), int(head[1]), int(head[2])
        bucket = date.fromisoformat(head[3])
    except ValueError as exc:
        raise ParseError(path, 1, f"bad header: {exc}") from None
    if len(lines) - 1 != m:
        raise ParseError(path, len(lines), f"expected {m} row lines, found {len(lines) - 1}")
    rows = []
    for line_no, line in enumerate(lines[1:], start=2):
        try:
            row = np.array([int(t) for t in line.split()], dtype=np.int64)
        except ValueError:
            raise ParseError(path, line_no, f"non-integer id in {line!r}") from None
        rows.append(row)
    try:
        return EntityMatrix(bucket=bucket, m=m, n=n, rows=rows, nnz=nnz)
    except IntegrityError as exc:
        raise ParseError(path, 1, str(exc)) from None
