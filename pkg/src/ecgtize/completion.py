"""Filling the unobserved part of each lead.

Three routes, composable by `complete`:

* algebra — exact limb-lead identities (III, aVR, aVL, aVF from I and II);
* tiled   — per-lead median beat repeated at the rhythm lead's R positions;
* backend — an external reconstruction process speaking a binary frame
            protocol over subprocess stdio or TCP, falling back to `tiled`
            when unreachable or malformed.

Observed samples always pass through bit-identical, and per-sample
provenance records which route produced every value.
"""

from __future__ import annotations

import logging
import shlex
import socket
import struct
import subprocess
from dataclasses import dataclass

import numpy as np

from .errors import BackendMalformedOutput, BackendUnavailable, NoRhythmAnchor
from .extract import EcgRecord
from .features import BEAT_POST, BEAT_PRE, detect_r_peaks
from .layouts import LEAD_INDEX, LEAD_ORDER, RECORD_SAMPLES, SAMPLE_RATE

log = logging.getLogger("ecgtize.completion")

# Sample provenance codes.
PROV_OBSERVED = 0
PROV_ALGEBRA = 1
PROV_TILED = 2
PROV_BACKEND = 3
PROV_MISSING = 4
PROVENANCE_NAMES = {0: "observed", 1: "algebra", 2: "tiled",
                    3: "backend", 4: "missing"}

CROSSFADE_SAMPLES = int(0.040 * SAMPLE_RATE)   # 40 ms seams

# Requests are plain records: 12 x 5,000 values plus the observed mask.
CompletionRequest = EcgRecord

# Wire protocol: request ECGC, response ECGR, error ECGE; version u16 LE;
# payload 12 x 5,000 little-endian float32 row-major in canonical lead order
# (request additionally carries 12 x 5,000 mask bytes, 1 = observed).
MAGIC_REQUEST = b"ECGC"
MAGIC_RESPONSE = b"ECGR"
MAGIC_ERROR = b"ECGE"
PROTOCOL_VERSION = 1
_N_FLOATS = len(LEAD_ORDER) * RECORD_SAMPLES
_FLOAT_BYTES = _N_FLOATS * 4
RESPONSE_SIZE = 6 + _FLOAT_BYTES
REQUEST_SIZE = 6 + _FLOAT_BYTES + _N_FLOATS


@dataclass
class CompletionResult:
    record: EcgRecord
    provenance: np.ndarray        # (12, 5000) uint8 of PROV_* codes

    def __post_init__(self):
        if self.provenance.shape != self.record.leads.shape:
            raise ValueError("provenance shape mismatch")


def _initial_result(record: EcgRecord) -> CompletionResult:
    prov = np.where(record.observed, PROV_OBSERVED, PROV_MISSING).astype(np.uint8)
    return CompletionResult(record=record.copy(), provenance=prov)


# ---------------------------------------------------------------------------
# Algebraic route


def complete_algebra(record: EcgRecord) -> CompletionResult:
    """Fill limb leads from the Einthoven/Goldberger identities.

    Where I and II are observed: III = II - I, aVR = -(I+II)/2,
    aVL = I - II/2, aVF = II - I/2.  Where II and III are observed but I is
    not, I = II - III first, then the augmented leads.  Nothing else is
    touched; the result may still have missing samples.
    """
    result = _initial_result(record)
    leads, obs, prov = result.record.leads, record.observed, result.provenance
    i_i, i_ii, i_iii = LEAD_INDEX["I"], LEAD_INDEX["II"], LEAD_INDEX["III"]

    derive_i = obs[i_ii] & obs[i_iii] & ~obs[i_i]
    if derive_i.any():
        leads[i_i, derive_i] = leads[i_ii, derive_i] - leads[i_iii, derive_i]
        prov[i_i, derive_i] = PROV_ALGEBRA
    know_i = obs[i_i] | derive_i

    pair = know_i & obs[i_ii]
    fill_iii = pair & ~obs[i_iii]
    leads[i_iii, fill_iii] = leads[i_ii, fill_iii] - leads[i_i, fill_iii]
    prov[i_iii, fill_iii] = PROV_ALGEBRA
    for lead, formula in (
        ("aVR", lambda a, b: -(a + b) / 2.0),
        ("aVL", lambda a, b: a - b / 2.0),
        ("aVF", lambda a, b: b - a / 2.0),
    ):
        k = LEAD_INDEX[lead]
        fill = pair & ~obs[k]
        leads[k, fill] = formula(leads[i_i, fill], leads[i_ii, fill])
        prov[k, fill] = PROV_ALGEBRA
    return result


# ---------------------------------------------------------------------------
# Tiled route


def _median_beat(samples: np.ndarray, observed: np.ndarray,
                 anchors: list[int]) -> np.ndarray | None:
    windows = []
    for r in anchors:
        lo, hi = r - BEAT_PRE, r + BEAT_POST
        if lo >= 0 and hi <= len(samples) and observed[lo:hi].all():
            windows.append(samples[lo:hi])
    if not windows:
        return None
    return np.median(np.stack(windows), axis=0)


def _tile_track(samples: np.ndarray, observed: np.ndarray,
                anchors: list[int]) -> np.ndarray:
    """Synthetic full-length track: baseline plus the median beat stamped at
    every anchor."""
    baseline = float(np.median(samples[observed])) if observed.any() else 0.0
    beat = _median_beat(samples, observed, anchors)
    track = np.full(len(samples), baseline)
    if beat is None:
        return track
    for r in anchors:
        lo, hi = r - BEAT_PRE, r + BEAT_POST
        blo, bhi = max(0, lo), min(len(samples), hi)
        track[blo:bhi] = beat[blo - lo:bhi - lo]
    return track


def _crossfade_fill(samples: np.ndarray, track: np.ndarray,
                    missing: np.ndarray) -> np.ndarray:
    """Copy `track` into missing runs, easing in/out of kept samples over
    the crossfade length to avoid step discontinuities at seams."""
    out = samples.copy()
    idx = np.flatnonzero(missing)
    if idx.size == 0:
        return out
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate(([idx[0]], idx[breaks + 1]))
    ends = np.concatenate((idx[breaks] + 1, [idx[-1] + 1]))
    for start, end in zip(starts, ends):
        out[start:end] = track[start:end]
        n = end - start
        fade = min(CROSSFADE_SAMPLES, n)
        if start > 0:
            left = samples[start - 1]
            w = np.arange(1, fade + 1) / (fade + 1)
            out[start:start + fade] = (1 - w) * left + w * track[start:start + fade]
        if end < len(samples):
            right = samples[end]
            w = np.arange(1, fade + 1)[::-1] / (fade + 1)
            out[end - fade:end] = (1 - w) * track[end - fade:end] + w * right
    return out


def _rhythm_anchors(record: EcgRecord) -> list[int] | None:
    candidates = ["II"] + [l for l in LEAD_ORDER if l != "II"]
    for lead in candidates:
        i = LEAD_INDEX[lead]
        if record.observed[i].all():
            try:
                return detect_r_peaks(record.leads[i], SAMPLE_RATE)
            except Exception:
                continue
    return None


def complete_tiled(record: EcgRecord,
                   keep: np.ndarray | None = None) -> CompletionResult:
    """Tile each lead's median beat over its missing samples.

    Beat anchors come from a fully observed rhythm lead; without one
    (NoRhythmAnchor), each lead falls back to beats detected in its own
    observed stretch.
    """
    result = _initial_result(record)
    if keep is None:
        keep = record.observed
    missing_any = ~keep
    if not missing_any.any():
        return result

    anchors = _rhythm_anchors(record)
    if anchors is None:
        log.warning("no full-length lead for beat anchors; "
                    "tiling on each lead's own beats")
    for li, lead in enumerate(LEAD_ORDER):
        missing = missing_any[li]
        if not missing.any():
            continue
        samples = result.record.leads[li]
        observed = record.observed[li]
        lead_anchors = anchors
        if lead_anchors is None:
            try:
                lead_anchors = detect_r_peaks(
                    np.where(observed, samples, np.median(samples[observed])),
                    SAMPLE_RATE)
            except Exception as exc:
                raise NoRhythmAnchor(
                    f"lead {lead}: no anchors available ({exc})") from None
        track = _tile_track(samples, observed, lead_anchors)
        result.record.leads[li] = _crossfade_fill(samples, track, missing)
        result.provenance[li, missing] = PROV_TILED
    if not np.all(np.isfinite(result.record.leads)):
        raise NoRhythmAnchor("tiling produced non-finite samples")
    return result


# ---------------------------------------------------------------------------
# Backend route


def pack_request(record: EcgRecord) -> bytes:
    values = record.leads.astype(np.float32)
    values[~record.observed] = np.float32("nan")
    mask = record.observed.astype(np.uint8)
    return (MAGIC_REQUEST + struct.pack("<H", PROTOCOL_VERSION)
            + values.tobytes() + mask.tobytes())


def parse_response(buf: bytes) -> np.ndarray:
    if len(buf) < 6:
        raise BackendMalformedOutput(f"response truncated at {len(buf)} bytes")
    magic, version = buf[:4], struct.unpack("<H", buf[4:6])[0]
    if magic == MAGIC_ERROR:
        msg = buf[10:10 + struct.unpack("<I", buf[6:10])[0]] if len(buf) >= 10 else b""
        raise BackendMalformedOutput(f"backend error: {msg.decode('utf-8', 'replace')}")
    if magic != MAGIC_RESPONSE:
        raise BackendMalformedOutput(f"bad response magic {magic!r}")
    if version != PROTOCOL_VERSION:
        raise BackendMalformedOutput(f"unsupported protocol version {version}")
    if len(buf) < RESPONSE_SIZE:
        raise BackendMalformedOutput(
            f"short response: {len(buf)} of {RESPONSE_SIZE} bytes")
    values = np.frombuffer(buf[6:RESPONSE_SIZE], dtype="<f4")
    arr = values.reshape(len(LEAD_ORDER), RECORD_SAMPLES).astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise BackendMalformedOutput("backend returned non-finite samples")
    return arr


class SubprocessBackend:
    """One backend process per request over stdin/stdout."""

    def __init__(self, cmd: str):
        self.argv = shlex.split(cmd)

    def roundtrip(self, frame: bytes, timeout: float = 300.0) -> bytes:
        try:
            proc = subprocess.run(self.argv, input=frame, capture_output=True,
                                  timeout=timeout)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise BackendUnavailable(f"backend process failed: {exc}") from exc
        if proc.returncode != 0:
            raise BackendUnavailable(
                f"backend exited {proc.returncode}: "
                f"{proc.stderr.decode('utf-8', 'replace')[:200]}")
        return proc.stdout


class TcpBackend:
    """One connection per request to host:port."""

    def __init__(self, addr: str):
        host, _, port = addr.rpartition(":")
        if not host or not port.isdigit():
            raise BackendUnavailable(f"bad backend address {addr!r}")
        self.host, self.port = host, int(port)

    def roundtrip(self, frame: bytes, timeout: float = 300.0) -> bytes:
        try:
            with socket.create_connection((self.host, self.port), timeout=timeout) as sock:
                sock.sendall(frame)
                sock.shutdown(socket.SHUT_WR)
                chunks = []
                while True:
                    chunk = sock.recv(1 << 16)
                    if not chunk:
                        break
                    chunks.append(chunk)
        except OSError as exc:
            raise BackendUnavailable(f"backend connection failed: {exc}") from exc
        return b"".join(chunks)


def complete_backend(record: EcgRecord, backend,
                     keep: np.ndarray | None = None) -> CompletionResult:
    """Ask an external backend to reconstruct the missing samples.

    Kept (observed) samples are overwritten back from the request record,
    so the backend can never alter extracted data.  Unreachable backends
    and malformed responses fall back to the tiled route with a warning.
    """
    result = _initial_result(record)
    if keep is None:
        keep = record.observed
    missing = ~keep
    if not missing.any():
        return result
    try:
        reply = backend.roundtrip(pack_request(record))
        values = parse_response(reply)
    except (BackendUnavailable, BackendMalformedOutput) as exc:
        log.warning("completion backend failed (%s); falling back to tiled", exc)
        return complete_tiled(record, keep=keep)
    result.record.leads[missing] = values[missing]
    result.provenance[missing] = PROV_BACKEND
    return result


# ---------------------------------------------------------------------------
# Composition


def complete(record: EcgRecord, mode: str, backend=None) -> CompletionResult:
    """Run the configured completion route.

    Algebra always runs first (it is exact); the tiled or backend route then
    fills what algebra could not, never overwriting observed or algebraic
    samples.
    """
    if mode == "off":
        return _initial_result(record)
    algebra = complete_algebra(record)
    if mode == "algebra":
        return algebra
    keep = record.observed | (algebra.provenance == PROV_ALGEBRA)
    base = algebra.record
    patched = EcgRecord(leads=base.leads, observed=keep, metadata=record.metadata)
    if mode == "tiled":
        return _merge(record, algebra, complete_tiled(patched))
    if mode == "backend":
        if backend is None:
            log.warning("no completion backend configured; falling back to tiled")
            return _merge(record, algebra, complete_tiled(patched))
        return _merge(record, algebra, complete_backend(patched, backend))
    raise ValueError(f"unknown completion mode {mode!r}")


def _merge(record: EcgRecord, algebra: CompletionResult,
           filled: CompletionResult) -> CompletionResult:
    prov = algebra.provenance.copy()
    was_missing = prov == PROV_MISSING
    prov[was_missing] = filled.provenance[was_missing]
    merged = EcgRecord(leads=filled.record.leads.copy(),
                       observed=record.observed.copy(),
                       metadata=record.metadata)
    return CompletionResult(record=merged, provenance=prov)
