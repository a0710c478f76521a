import shlex
import struct
import sys

import numpy as np
import pytest

from ecgtize import completion as comp
from ecgtize import synth
from ecgtize.errors import BackendMalformedOutput, BackendUnavailable
from ecgtize.extract import EcgRecord
from ecgtize.features import pcc
from ecgtize.layouts import LEAD_INDEX, LEAD_ORDER, preset


def limb_only_request(seed=2):
    """Consistent record with only I and II marked observed."""
    record, truth = synth.make_record(seed=seed)
    request = record.copy()
    request.observed[:] = False
    request.observed[LEAD_INDEX["I"]] = True
    request.observed[LEAD_INDEX["II"]] = True
    return record, request


class TestAlgebra:
    def test_identities_hand_values(self):
        record = EcgRecord.empty()
        record.leads[LEAD_INDEX["I"], 0] = 0.3
        record.leads[LEAD_INDEX["II"], 0] = 0.8
        record.observed[LEAD_INDEX["I"], 0] = True
        record.observed[LEAD_INDEX["II"], 0] = True
        result = comp.complete_algebra(record)
        got = {lead: result.record.leads[LEAD_INDEX[lead], 0]
               for lead in ("III", "aVR", "aVL", "aVF")}
        assert got == {"III": pytest.approx(0.5),
                       "aVR": pytest.approx(-0.55),
                       "aVL": pytest.approx(-0.1),
                       "aVF": pytest.approx(0.65)}

    def test_zero_case(self):
        record = EcgRecord.empty()
        record.observed[LEAD_INDEX["I"]] = True
        record.observed[LEAD_INDEX["II"]] = True
        result = comp.complete_algebra(record)
        for lead in ("III", "aVR", "aVL", "aVF"):
            assert (result.record.lead(lead) == 0).all()
            assert (result.provenance[LEAD_INDEX[lead]] == comp.PROV_ALGEBRA).all()

    def test_untouched_without_pair(self):
        record = EcgRecord.empty()
        record.leads[LEAD_INDEX["V3"]] = 0.7
        record.observed[LEAD_INDEX["V3"]] = True
        result = comp.complete_algebra(record)
        assert (result.provenance[LEAD_INDEX["III"]] == comp.PROV_MISSING).all()
        assert (result.record.lead("III") == 0).all()

    def test_exact_reconstruction_on_consistent_record(self):
        record, request = limb_only_request()
        result = comp.complete_algebra(request)
        for lead in ("III", "aVR", "aVL", "aVF"):
            i = LEAD_INDEX[lead]
            err = np.max(np.abs(result.record.leads[i] - record.leads[i]))
            assert err <= 1e-9

    def test_derive_lead_one_from_two_three(self):
        record, _ = limb_only_request()
        request = record.copy()
        request.observed[:] = False
        request.observed[LEAD_INDEX["II"]] = True
        request.observed[LEAD_INDEX["III"]] = True
        result = comp.complete_algebra(request)
        i = LEAD_INDEX["I"]
        assert np.max(np.abs(result.record.leads[i] - record.leads[i])) <= 1e-9
        assert (result.provenance[i] == comp.PROV_ALGEBRA).all()

    def test_observed_pass_through(self):
        record, request = limb_only_request()
        result = comp.complete_algebra(request)
        assert np.array_equal(result.record.leads[request.observed],
                              request.leads[request.observed])


def masked_3x4(seed=5, sine_amp=0.25):
    record, truth = synth.make_record(seed=seed, sine_amp=sine_amp)
    masked = synth.apply_observation_mask(record, preset("3x4", rhythm=True))
    return record, masked, truth


class TestTiled:
    def test_fully_observed_identity(self):
        record, _ = synth.make_record(seed=1)
        result = comp.complete_tiled(record)
        assert np.array_equal(result.record.leads, record.leads)
        assert (result.provenance == comp.PROV_OBSERVED).all()

    def test_periodic_record_beats_recovered(self):
        # exact periodicity: beat train only, no additive sines
        record, masked, truth = masked_3x4(sine_amp=0.0)
        result = comp.complete_tiled(masked)
        assert np.all(np.isfinite(result.record.leads))
        fs = 500
        scored = 0
        for li in range(12):
            missing = ~masked.observed[li]
            if not missing.any():
                continue
            for r in truth.r_positions:
                lo, hi = r - 200, r + 300
                if lo < 0 or hi > 5000 or not missing[lo:hi].all():
                    continue
                scored += 1
                assert pcc(result.record.leads[li, lo:hi],
                           record.leads[li, lo:hi]) >= 0.9
        assert scored > 20

    def test_observed_pass_through_bit_identical(self):
        record, masked, _ = masked_3x4()
        result = comp.complete_tiled(masked)
        assert np.array_equal(result.record.leads[masked.observed],
                              masked.leads[masked.observed])

    def test_single_beat_window_tiles_that_beat(self):
        fs, n = 500, 5000
        beat = np.zeros(500)
        beat[200] = 1.0
        x = np.zeros(n)
        anchors = list(range(400, 4600, 500))
        for r in anchors:
            x[r - 200:r + 300] += beat
        record = EcgRecord.empty()
        record.leads[:] = x
        record.observed[:] = False
        record.observed[LEAD_INDEX["II"]] = True          # rhythm anchor
        record.observed[:, 0:1000] = True                 # one observed window each
        result = comp.complete_tiled(record)
        for li in range(12):
            for r in anchors:
                assert result.record.leads[li, r] == pytest.approx(1.0, abs=0.05)

    def test_no_rhythm_anchor_falls_back_to_own_beats(self):
        record, masked, truth = masked_3x4(seed=7)
        masked.observed[LEAD_INDEX["II"]] = False
        masked.observed[LEAD_INDEX["II"], 0:1250] = True   # no full-length lead left
        result = comp.complete_tiled(masked)
        assert np.all(np.isfinite(result.record.leads))
        filled = result.provenance == comp.PROV_TILED
        assert filled.any()

    def test_provenance_exactly_one_tag(self):
        _, masked, _ = masked_3x4()
        result = comp.complete_tiled(masked)
        assert set(np.unique(result.provenance)) <= {comp.PROV_OBSERVED,
                                                     comp.PROV_TILED}
        assert ((result.provenance == comp.PROV_OBSERVED) == masked.observed).all()


ECHO_BACKEND = (
    "import sys,struct;"
    "buf=sys.stdin.buffer.read();"
    "assert buf[:4]==b'ECGC' and struct.unpack('<H',buf[4:6])[0]==1;"
    "vals=bytearray(buf[6:6+240000]);"
    "\n"
    "import numpy as np;"
    "arr=np.frombuffer(bytes(vals),dtype='<f4').copy();"
    "arr[~np.isfinite(arr)]=0.25;"
    "sys.stdout.buffer.write(b'ECGR'+struct.pack('<H',1)+arr.tobytes())"
)

NAN_BACKEND = (
    "import sys,struct;"
    "sys.stdin.buffer.read();"
    "sys.stdout.buffer.write(b'ECGR'+struct.pack('<H',1)+b'\\x00\\x00\\xc0\\x7f'*60000)"
)

SHORT_BACKEND = (
    "import sys,struct;"
    "sys.stdin.buffer.read();"
    "sys.stdout.buffer.write(b'ECGR'+struct.pack('<H',1)+b'\\x00'*400)"
)


def py_backend(code):
    return comp.SubprocessBackend(f"{sys.executable} -c {shlex.quote(code)}")


class TestBackend:
    def test_round_trip_fills_missing(self):
        _, masked, _ = masked_3x4()
        result = comp.complete_backend(masked, py_backend(ECHO_BACKEND))
        missing = ~masked.observed
        assert (result.record.leads[missing] == 0.25).all()
        assert (result.provenance[missing] == comp.PROV_BACKEND).all()
        assert np.array_equal(result.record.leads[masked.observed],
                              masked.leads[masked.observed])

    def test_nan_response_falls_back_to_tiled(self):
        _, masked, _ = masked_3x4()
        result = comp.complete_backend(masked, py_backend(NAN_BACKEND))
        missing = ~masked.observed
        assert (result.provenance[missing] == comp.PROV_TILED).all()
        assert np.all(np.isfinite(result.record.leads))

    def test_short_response_falls_back(self):
        _, masked, _ = masked_3x4()
        result = comp.complete_backend(masked, py_backend(SHORT_BACKEND))
        assert (result.provenance[~masked.observed] == comp.PROV_TILED).all()

    def test_unreachable_backend_falls_back(self):
        _, masked, _ = masked_3x4()
        backend = comp.SubprocessBackend("/no/such/backend-binary")
        result = comp.complete_backend(masked, backend)
        assert (result.provenance[~masked.observed] == comp.PROV_TILED).all()

    def test_parse_response_error_frame(self):
        frame = comp.MAGIC_ERROR + struct.pack("<H", 1) + struct.pack("<I", 4) + b"boom"
        with pytest.raises(BackendMalformedOutput, match="boom"):
            comp.parse_response(frame)

    def test_request_frame_layout(self):
        _, masked, _ = masked_3x4()
        frame = comp.pack_request(masked)
        assert len(frame) == comp.REQUEST_SIZE
        assert frame[:4] == b"ECGC"
        assert struct.unpack("<H", frame[4:6])[0] == 1
        floats = np.frombuffer(frame[6:6 + 240000], dtype="<f4").reshape(12, 5000)
        mask = np.frombuffer(frame[6 + 240000:], dtype=np.uint8).reshape(12, 5000)
        assert np.array_equal(mask.astype(bool), masked.observed)
        assert np.isnan(floats[~masked.observed]).all()
        assert np.allclose(floats[masked.observed],
                           masked.leads[masked.observed], atol=1e-4)


class TestComposition:
    def test_algebra_runs_before_tiling(self):
        record, masked, _ = masked_3x4()
        result = comp.complete(masked, "tiled")
        prov = result.provenance
        # limb identities hold wherever I and II were both visible; aVR is
        # unobserved there (it is printed in the second window)
        both = masked.observed[LEAD_INDEX["I"]] & masked.observed[LEAD_INDEX["II"]]
        avr = LEAD_INDEX["aVR"]
        algebra_at = both & ~masked.observed[avr]
        assert algebra_at.any()
        assert (prov[avr, algebra_at] == comp.PROV_ALGEBRA).all()
        err = np.abs(result.record.leads[avr, algebra_at]
                     - record.leads[avr, algebra_at])
        assert err.max() <= 1e-9

    def test_idempotent_on_complete_record(self):
        record, _ = synth.make_record(seed=3)
        for mode in ("algebra", "tiled", "off"):
            result = comp.complete(record, mode)
            assert np.array_equal(result.record.leads, record.leads)

    def test_every_sample_single_provenance(self):
        _, masked, _ = masked_3x4()
        result = comp.complete(masked, "tiled")
        assert result.provenance.shape == (12, 5000)
        assert set(np.unique(result.provenance)) <= {
            comp.PROV_OBSERVED, comp.PROV_ALGEBRA, comp.PROV_TILED}

    def test_backend_never_overwrites_algebra(self):
        _, masked, _ = masked_3x4()
        result = comp.complete(masked, "backend", backend=py_backend(ECHO_BACKEND))
        algebra_mask = result.provenance == comp.PROV_ALGEBRA
        assert algebra_mask.any()
        assert not (result.record.leads[algebra_mask] == 0.25).any()

    def test_missing_backend_falls_back(self):
        _, masked, _ = masked_3x4()
        result = comp.complete(masked, "backend", backend=None)
        assert np.all(np.isfinite(result.record.leads))
        assert (result.provenance != comp.PROV_BACKEND).all()
