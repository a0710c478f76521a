"""Record persistence.

XML schema: ``<ecg version="1" sample_rate="500">`` with one
``<lead id="I" unit="uV">`` element per lead holding whitespace-separated
microvolt integers (mV x 1000, rounded half away from zero), a run-length
``<mask>`` child (``count:value`` pairs, 1 = observed), and a
``<metadata>`` element only when anonymization is off.

CSV: header of the 12 lead names, then 5,000 rows of millivolt values.
The mask and metadata do not survive CSV; readers treat such records as
fully observed.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from .errors import IoFailure, SchemaViolation
from .extract import EcgRecord
from .layouts import LEAD_ORDER, RECORD_SAMPLES, SAMPLE_RATE
from .textscrub import PageMetadata, TextBox

_XML_DECL = b'<?xml version="1.0" encoding="UTF-8"?>\n'


def _to_uv(samples: np.ndarray) -> np.ndarray:
    """Millivolts to integer microvolts, half away from zero."""
    scaled = samples * 1000.0
    return np.copysign(np.floor(np.abs(scaled) + 0.5), scaled).astype(np.int64)


def _rle(mask: np.ndarray) -> str:
    runs = []
    start = 0
    values = mask.astype(np.uint8)
    changes = np.flatnonzero(np.diff(values)) + 1
    for stop in list(changes) + [len(values)]:
        runs.append(f"{stop - start}:{int(values[start])}")
        start = stop
    return " ".join(runs)


def _unrle(text: str, context: str) -> np.ndarray:
    out = np.empty(RECORD_SAMPLES, dtype=bool)
    pos = 0
    for token in text.split():
        try:
            count_s, value_s = token.split(":")
            count, value = int(count_s), int(value_s)
        except ValueError as exc:
            raise SchemaViolation(f"{context}: bad mask token {token!r}") from exc
        if value not in (0, 1) or count < 1 or pos + count > RECORD_SAMPLES:
            raise SchemaViolation(f"{context}: mask run {token!r} out of range")
        out[pos:pos + count] = bool(value)
        pos += count
    if pos != RECORD_SAMPLES:
        raise SchemaViolation(f"{context}: mask covers {pos} of {RECORD_SAMPLES} samples")
    return out


def record_to_xml(record: EcgRecord, anonymize: bool) -> bytes:
    root = ET.Element("ecg", version="1", sample_rate=str(SAMPLE_RATE))
    for i, lead in enumerate(LEAD_ORDER):
        el = ET.SubElement(root, "lead", id=lead, unit="uV")
        el.text = " ".join(str(v) for v in _to_uv(record.leads[i]))
        mask = ET.SubElement(el, "mask")
        mask.text = _rle(record.observed[i])
    if not anonymize and record.metadata is not None and record.metadata.entries:
        meta = ET.SubElement(root, "metadata")
        for text, box in record.metadata.entries:
            el = ET.SubElement(meta, "text", x0=str(box.x0), y0=str(box.y0),
                               x1=str(box.x1), y1=str(box.y1),
                               confidence=f"{box.confidence:g}")
            el.text = text
    return _XML_DECL + ET.tostring(root, encoding="unicode").encode("utf-8") + b"\n"


def record_to_csv(record: EcgRecord) -> bytes:
    lines = [",".join(LEAD_ORDER)]
    cols = record.leads.T
    for row in cols:
        lines.append(",".join(f"{v:.6f}" for v in row))
    return ("\n".join(lines) + "\n").encode("ascii")


def write_record(record: EcgRecord, path: str | Path, fmt: str = "xml",
                 anonymize: bool = False) -> None:
    if fmt == "xml":
        data = record_to_xml(record, anonymize)
    elif fmt == "csv":
        data = record_to_csv(record)
    else:
        raise ValueError(f"unknown record format {fmt!r}")
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _parse_xml(path: Path) -> EcgRecord:
    try:
        tree = ET.parse(path)
    except ET.ParseError as exc:
        raise SchemaViolation(f"{path}: XML parse error at "
                              f"line {exc.position[0]}: {exc.msg}") from exc
    root = tree.getroot()
    if root.tag != "ecg":
        raise SchemaViolation(f"{path}: root element is <{root.tag}>, expected <ecg>")
    if root.get("version") != "1":
        raise SchemaViolation(f"{path}: unsupported version {root.get('version')!r}")
    if root.get("sample_rate") != str(SAMPLE_RATE):
        raise SchemaViolation(f"{path}: sample_rate must be {SAMPLE_RATE}")

    leads = np.zeros((len(LEAD_ORDER), RECORD_SAMPLES))
    observed = np.ones((len(LEAD_ORDER), RECORD_SAMPLES), dtype=bool)
    seen = set()
    for el in root.findall("lead"):
        lead = el.get("id")
        if lead not in LEAD_ORDER:
            raise SchemaViolation(f"{path}: unknown lead id {lead!r}")
        if lead in seen:
            raise SchemaViolation(f"{path}: duplicate lead {lead}")
        seen.add(lead)
        try:
            values = np.array([int(tok) for tok in (el.text or "").split()],
                              dtype=np.int64)
        except ValueError as exc:
            raise SchemaViolation(f"{path}: lead {lead}: non-integer sample") from exc
        if values.size != RECORD_SAMPLES:
            raise SchemaViolation(
                f"{path}: lead {lead} has {values.size} samples, "
                f"expected {RECORD_SAMPLES}")
        i = LEAD_ORDER.index(lead)
        leads[i] = values / 1000.0
        mask_el = el.find("mask")
        if mask_el is not None and (mask_el.text or "").strip():
            observed[i] = _unrle(mask_el.text, f"{path}: lead {lead}")
    missing = set(LEAD_ORDER) - seen
    if missing:
        raise SchemaViolation(f"{path}: missing leads {sorted(missing)}")

    metadata = None
    meta_el = root.find("metadata")
    if meta_el is not None:
        entries = []
        for el in meta_el.findall("text"):
            try:
                box = TextBox(x0=int(el.get("x0")), y0=int(el.get("y0")),
                              x1=int(el.get("x1")), y1=int(el.get("y1")),
                              text=el.text or "",
                              confidence=float(el.get("confidence", 0)))
            except (TypeError, ValueError) as exc:
                raise SchemaViolation(f"{path}: bad <text> element") from exc
            entries.append((box.text, box))
        metadata = PageMetadata(entries=entries)
    return EcgRecord(leads=leads, observed=observed, metadata=metadata)


def _parse_csv(path: Path) -> EcgRecord:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaViolation(f"{path}: {exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise SchemaViolation(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    if header != list(LEAD_ORDER):
        raise SchemaViolation(
            f"{path}: line 1: header must be the 12 lead names in order, got {header}")
    rows = lines[1:]
    if len(rows) != RECORD_SAMPLES:
        raise SchemaViolation(
            f"{path}: expected {RECORD_SAMPLES} data rows, got {len(rows)}")
    leads = np.empty((len(LEAD_ORDER), RECORD_SAMPLES))
    for n, line in enumerate(rows):
        parts = line.split(",")
        if len(parts) != len(LEAD_ORDER):
            raise SchemaViolation(
                f"{path}: line {n + 2}: {len(parts)} columns, expected {len(LEAD_ORDER)}")
        try:
            leads[:, n] = [float(p) for p in parts]
        except ValueError as exc:
            raise SchemaViolation(f"{path}: line {n + 2}: non-numeric value") from exc
    return EcgRecord(leads=leads,
                     observed=np.ones((len(LEAD_ORDER), RECORD_SAMPLES), dtype=bool))


def read_record(path: str | Path) -> EcgRecord:
    """Parse a record in this package's XML or CSV schema (by extension,
    with XML as the default)."""
    path = Path(path)
    if not path.exists():
        raise SchemaViolation(f"{path}: no such file")
    if path.suffix.lower() == ".csv":
        return _parse_csv(path)
    return _parse_xml(path)
