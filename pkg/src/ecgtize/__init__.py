"""ecgtize: paper-format ECG pages to calibrated 12-lead numeric signals."""

__version__ = "0.1.0"

from .extract import EcgRecord, LeadSignal
from .layouts import LEAD_ORDER, LayoutSpec, preset
from .pipeline import DigitizeOptions, digitize_page
from .raster import RasterPage, load_document, to_gray
from .recordio import read_record, write_record

__all__ = [
    "EcgRecord", "LeadSignal", "LEAD_ORDER", "LayoutSpec", "preset",
    "DigitizeOptions", "digitize_page", "RasterPage", "load_document",
    "to_gray", "read_record", "write_record", "__version__",
]
