"""Contract segmentation, tracked-edit handling, and weak labeling.

Contracts are parsed into numbered provisions. Negotiated documents carry
inline tracked-edit markers (``{++inserted++}``, ``{--deleted--}``); applying
or reverting those markers yields the two sides of a negotiation, which the
weak-labeling heuristic turns into labeled revisions: an edited provision is
unacceptable, an unedited provision that differs from the template is
acceptable.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum

from .errors import MalformedDocument, UnbalancedMarkers

log = logging.getLogger(__name__)

_NUMBER_RE = re.compile(r"^\d+(\.\d+)*$")
_HEADING_RE = re.compile(r"^([ \t]*)(\d+(?:\.\d+)*)([.)])[ \t]+(\S.*?)\s*$")

INSERT_OPEN, INSERT_CLOSE = "{++", "++}"
DELETE_OPEN, DELETE_CLOSE = "{--", "--}"


class ContractKind(str, Enum):
    SERVICE = "Service"
    PURCHASE = "Purchase"
    OTHER = "Other"


class Label(str, Enum):
    ACCEPTABLE = "Acceptable"
    UNACCEPTABLE = "Unacceptable"
    UNLABELED = "Unlabeled"


class Source(str, Enum):
    FALLBACK = "Fallback"
    NEGOTIATED = "Negotiated"
    SYNTHETIC = "Synthetic"
    PARAPHRASE = "Paraphrase"


@dataclass(frozen=True)
class Provision:
    """One numbered clause: current text plus the template wording, if known."""

    number: str
    title: str
    text: str
    template_text: str | None = None
    heading: str = ""  # verbatim heading line (PlainText parses only)

    def __post_init__(self):
        if not _NUMBER_RE.match(self.number):
            raise MalformedDocument(f"invalid provision number {self.number!r}")
        if not self.text:
            raise MalformedDocument(f"provision {self.number} has empty text")


@dataclass(frozen=True)
class Contract:
    id: str
    kind: ContractKind
    provisions: tuple[Provision, ...]
    preamble: str = ""  # text before the first heading (PlainText parses only)

    def __post_init__(self):
        numbers = [p.number for p in self.provisions]
        dupes = {n for n in numbers if numbers.count(n) > 1}
        if dupes:
            raise MalformedDocument(f"duplicate provision numbers: {sorted(dupes)}")

    def provision(self, number: str) -> Provision | None:
        for p in self.provisions:
            if p.number == number:
                return p
        return None


@dataclass(frozen=True)
class Revision:
    """A proposed provision text with its acceptability label and provenance."""

    id: str
    provision_number: str
    contract_id: str
    text: str
    label: Label
    source: Source
    created_at: datetime = field(
        default_factory=lambda: datetime.now(timezone.utc)
    )

    def __post_init__(self):
        if not self.text:
            raise ValueError("revision text must be non-empty")
        if self.source in (Source.SYNTHETIC, Source.PARAPHRASE) and self.label is Label.UNLABELED:
            raise ValueError(f"{self.source.value} revisions must carry a label")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "provision_number": self.provision_number,
            "contract_id": self.contract_id,
            "text": self.text,
            "label": self.label.value,
            "source": self.source.value,
            "created_at": self.created_at.isoformat(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Revision":
        return cls(
            id=d["id"],
            provision_number=d["provision_number"],
            contract_id=d["contract_id"],
            text=d["text"],
            label=Label(d["label"]),
            source=Source(d["source"]),
            created_at=datetime.fromisoformat(d["created_at"]),
        )


class EditOpKind(str, Enum):
    KEEP = "Keep"
    INSERT = "Insert"
    DELETE = "Delete"


@dataclass(frozen=True)
class EditOp:
    op: EditOpKind
    tokens: tuple[str, ...]


@dataclass(frozen=True)
class EditScript:
    """Word-level edit script; Keep+Delete replays the source, Keep+Insert the target."""

    operations: tuple[EditOp, ...]

    def source_tokens(self) -> list[str]:
        out: list[str] = []
        for op in self.operations:
            if op.op in (EditOpKind.KEEP, EditOpKind.DELETE):
                out.extend(op.tokens)
        return out

    def target_tokens(self) -> list[str]:
        out: list[str] = []
        for op in self.operations:
            if op.op in (EditOpKind.KEEP, EditOpKind.INSERT):
                out.extend(op.tokens)
        return out

    def to_ops(self) -> list[dict]:
        return [{"op": op.op.value, "tokens": list(op.tokens)} for op in self.operations]


class DocumentFormat(str, Enum):
    PLAIN_TEXT = "PlainText"
    STRUCTURED = "Structured"


def normalize_text(text: str) -> str:
    """Collapse whitespace runs and trim; case is preserved."""
    return re.sub(r"\s+", " ", text).strip()


def parse_contract(
    raw: str,
    format: DocumentFormat = DocumentFormat.PLAIN_TEXT,
    *,
    contract_id: str | None = None,
    kind: ContractKind = ContractKind.OTHER,
) -> Contract:
    """Segment a contract document into its numbered provisions.

    PlainText documents are split on heading lines (``4.2. Payment`` or
    ``4.2) Payment``); the parse is lossless, so :func:`serialize_contract`
    reproduces the input byte for byte. Structured documents are a single
    JSON object per the workspace contract schema.
    """
    if not raw:
        raise MalformedDocument("empty document")
    if format is DocumentFormat.STRUCTURED:
        return _parse_structured(raw)
    return _parse_plain_text(raw, contract_id=contract_id, kind=kind)


def _parse_plain_text(raw: str, *, contract_id: str | None, kind: ContractKind) -> Contract:
    lines = raw.splitlines(keepends=True)
    sections: list[tuple[str, str, str, list[str]]] = []  # number, title, heading, body lines
    preamble_lines: list[str] = []
    for line in lines:
        m = _HEADING_RE.match(line)
        if m:
            sections.append((m.group(2), m.group(4), line, []))
        elif sections:
            sections[-1][3].append(line)
        else:
            preamble_lines.append(line)
    if not sections:
        raise MalformedDocument("no recognizable provision headings")

    provisions = []
    for number, title, heading, body in sections:
        text = "".join(body)
        if not text.strip():
            raise MalformedDocument(f"provision {number} has no body text")
        provisions.append(Provision(number=number, title=title, text=text, heading=heading))

    if contract_id is None:
        contract_id = hashlib.sha256(raw.encode("utf-8")).hexdigest()[:12]
    return Contract(
        id=contract_id,
        kind=kind,
        provisions=tuple(provisions),
        preamble="".join(preamble_lines),
    )


def _parse_structured(raw: str) -> Contract:
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"not valid JSON: {exc}") from exc
    return contract_from_dict(doc)


def contract_from_dict(doc) -> Contract:
    """Build a Contract from one structured-format document object."""
    if not isinstance(doc, dict):
        raise MalformedDocument("structured contract must be a JSON object")
    try:
        kind = ContractKind(doc.get("kind", "Other"))
    except ValueError as exc:
        raise MalformedDocument(f"unknown contract kind {doc.get('kind')!r}") from exc
    raw_provisions = doc.get("provisions")
    if not doc.get("id") or not isinstance(raw_provisions, list) or not raw_provisions:
        raise MalformedDocument("structured contract needs an id and a provisions list")
    provisions = []
    for entry in raw_provisions:
        if not isinstance(entry, dict):
            raise MalformedDocument("provision entries must be objects")
        try:
            provisions.append(
                Provision(
                    number=str(entry["number"]),
                    title=str(entry.get("title", "")),
                    text=str(entry["text"]),
                    template_text=entry.get("template_text"),
                )
            )
        except KeyError as exc:
            raise MalformedDocument(f"provision entry missing field {exc}") from exc
    return Contract(id=str(doc["id"]), kind=kind, provisions=tuple(provisions))


def serialize_contract(contract: Contract) -> str:
    """Re-serialize a parsed contract; inverse of the PlainText parse."""
    parts = [contract.preamble]
    for p in contract.provisions:
        heading = p.heading or f"{p.number}. {p.title}\n"
        parts.append(heading)
        parts.append(p.text)
    return "".join(parts)


def contract_to_dict(contract: Contract) -> dict:
    return {
        "id": contract.id,
        "kind": contract.kind.value,
        "provisions": [
            {
                "number": p.number,
                "title": p.title,
                "text": p.text,
                **({"template_text": p.template_text} if p.template_text is not None else {}),
            }
            for p in contract.provisions
        ],
    }


def detect_tracked_edits(text: str) -> tuple[bool, str, str]:
    """Split tracked-edit markup into the accepted and the original text.

    Returns ``(has_edits, accepted_text, original_text)``: the accepted text
    applies insertions and drops deletions, the original does the reverse.
    Raises :class:`UnbalancedMarkers` when a marker opens without closing or
    a closer appears on its own.
    """
    accepted: list[str] = []
    original: list[str] = []
    has_edits = False
    pos = 0
    while pos < len(text):
        next_ins = text.find(INSERT_OPEN, pos)
        next_del = text.find(DELETE_OPEN, pos)
        candidates = [idx for idx in (next_ins, next_del) if idx != -1]
        marker_at = min(candidates) if candidates else -1
        plain_end = marker_at if marker_at != -1 else len(text)
        plain = text[pos:plain_end]
        for closer in (INSERT_CLOSE, DELETE_CLOSE):
            if closer in plain:
                raise UnbalancedMarkers(f"closer {closer!r} without opener near offset {pos}")
        accepted.append(plain)
        original.append(plain)
        if marker_at == -1:
            break
        has_edits = True
        is_insert = marker_at == next_ins
        closer = INSERT_CLOSE if is_insert else DELETE_CLOSE
        payload_start = marker_at + len(INSERT_OPEN)
        closer_at = text.find(closer, payload_start)
        if closer_at == -1:
            raise UnbalancedMarkers(f"unclosed marker at offset {marker_at}")
        payload = text[payload_start:closer_at]
        if is_insert:
            accepted.append(payload)
        else:
            original.append(payload)
        pos = closer_at + len(closer)
    return has_edits, "".join(accepted), "".join(original)


def weak_label(
    contract: Contract,
    template: Contract,
    *,
    created_at: datetime | None = None,
) -> list[Revision]:
    """Derive labeled revisions from a negotiated contract against its template.

    Edited provisions (tracked-edit markers present) become Unacceptable
    revisions carrying the accepted text; unedited provisions whose
    normalized text differs from the template become Acceptable; provisions
    identical to the template emit nothing. Provisions absent from the
    template are skipped and logged.
    """
    template_texts = {
        p.number: (p.template_text if p.template_text is not None else p.text)
        for p in template.provisions
    }
    stamp = created_at or datetime.now(timezone.utc)
    revisions: list[Revision] = []
    for provision in contract.provisions:
        if provision.number not in template_texts:
            log.warning(
                "weak_label: provision %s of contract %s not in template %s; skipped",
                provision.number, contract.id, template.id,
            )
            continue
        has_edits, accepted, _original = detect_tracked_edits(provision.text)
        if has_edits:
            label, text = Label.UNACCEPTABLE, accepted.strip()
        elif normalize_text(provision.text) != normalize_text(template_texts[provision.number]):
            label, text = Label.ACCEPTABLE, provision.text.strip()
        else:
            continue
        if not text:
            log.warning(
                "weak_label: provision %s of %s is empty after applying edits; skipped",
                provision.number, contract.id,
            )
            continue
        revisions.append(
            Revision(
                id=f"{contract.id}:{provision.number}",
                provision_number=provision.number,
                contract_id=contract.id,
                text=text,
                label=label,
                source=Source.NEGOTIATED,
                created_at=stamp,
            )
        )
    return revisions


def diff_words(a: str, b: str) -> EditScript:
    """Minimal word-level edit script between two texts (LCS alignment)."""
    src = a.split()
    dst = b.split()
    n, m = len(src), len(dst)
    # lcs[i][j] = LCS length of src[i:], dst[j:]
    lcs = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row, nxt = lcs[i], lcs[i + 1]
        for j in range(m - 1, -1, -1):
            if src[i] == dst[j]:
                row[j] = nxt[j + 1] + 1
            else:
                row[j] = max(nxt[j], row[j + 1])
    ops: list[tuple[EditOpKind, str]] = []
    i = j = 0
    while i < n and j < m:
        if src[i] == dst[j]:
            ops.append((EditOpKind.KEEP, src[i]))
            i += 1
            j += 1
        elif lcs[i + 1][j] >= lcs[i][j + 1]:
            ops.append((EditOpKind.DELETE, src[i]))
            i += 1
        else:
            ops.append((EditOpKind.INSERT, dst[j]))
            j += 1
    ops.extend((EditOpKind.DELETE, tok) for tok in src[i:])
    ops.extend((EditOpKind.INSERT, tok) for tok in dst[j:])

    merged: list[EditOp] = []
    for kind, token in ops:
        if merged and merged[-1].op is kind:
            merged[-1] = replace(merged[-1], tokens=merged[-1].tokens + (token,))
        else:
            merged.append(EditOp(op=kind, tokens=(token,)))
    return EditScript(operations=tuple(merged))
