"""Minimal PDF writer and rasterizer.

No PDF toolkit is available in the target environments, so this module
implements the small subset the pipeline needs: writing single-image pages
(deterministic bytes, no timestamps), and rasterizing generated PDFs whose
content streams use path construction (m/l/c/re/h), stroking/filling and
embedded Flate RGB/gray images.  Anything outside that subset raises
UnreadableDocument rather than guessing.
"""

from __future__ import annotations

import re
import zlib

import numpy as np
from PIL import Image, ImageDraw

from .errors import EmptyDocument, UnreadableDocument

# ---------------------------------------------------------------------------
# Writer


def image_pdf_bytes(rgb: np.ndarray, dpi: float) -> bytes:
    """Encode an RGB uint8 array as a one-page PDF at the given DPI."""
    h, w = rgb.shape[:2]
    w_pt = w * 72.0 / dpi
    h_pt = h * 72.0 / dpi
    raw = zlib.compress(np.ascontiguousarray(rgb, dtype=np.uint8).tobytes(), 6)

    objs = []
    objs.append(b"<< /Type /Catalog /Pages 2 0 R >>")
    objs.append(b"<< /Type /Pages /Kids [3 0 R] /Count 1 >>")
    objs.append((
        f"<< /Type /Page /Parent 2 0 R /MediaBox [0 0 {w_pt:.4f} {h_pt:.4f}] "
        f"/Resources << /XObject << /Im0 5 0 R >> >> /Contents 4 0 R >>"
    ).encode())
    content = f"q {w_pt:.4f} 0 0 {h_pt:.4f} 0 0 cm /Im0 Do Q".encode()
    objs.append(b"<< /Length %d >>\nstream\n%s\nendstream" % (len(content), content))
    objs.append(
        (f"<< /Type /XObject /Subtype /Image /Width {w} /Height {h} "
         f"/ColorSpace /DeviceRGB /BitsPerComponent 8 /Filter /FlateDecode "
         f"/Length {len(raw)} >>\nstream\n").encode() + raw + b"\nendstream")

    out = bytearray(b"%PDF-1.4\n")
    offsets = [0]
    for i, body in enumerate(objs, start=1):
        offsets.append(len(out))
        out += b"%d 0 obj\n" % i + body + b"\nendobj\n"
    xref_at = len(out)
    out += b"xref\n0 %d\n" % (len(objs) + 1)
    out += b"0000000000 65535 f \n"
    for off in offsets[1:]:
        out += b"%010d 00000 n \n" % off
    out += (b"trailer\n<< /Size %d /Root 1 0 R >>\nstartxref\n%d\n%%%%EOF\n"
            % (len(objs) + 1, xref_at))
    return bytes(out)


def write_image_pdf(path: str, rgb: np.ndarray, dpi: float) -> None:
    with open(path, "wb") as fh:
        fh.write(image_pdf_bytes(rgb, dpi))


# ---------------------------------------------------------------------------
# Object parser

_WS = b"\x00\t\n\x0c\r "
_DELIM = b"()<>[]{}/%"


class _Lexer:
    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def _skip_ws(self):
        data, n = self.data, len(self.data)
        while self.pos < n:
            ch = data[self.pos:self.pos + 1]
            if ch in b"%":
                while self.pos < n and data[self.pos] not in b"\r\n":
                    self.pos += 1
            elif ch in _WS:
                self.pos += 1
            else:
                return

    def peek_token(self) -> bytes:
        save = self.pos
        tok = self.next_token()
        self.pos = save
        return tok

    def next_token(self) -> bytes:
        self._skip_ws()
        data, n = self.data, len(self.data)
        if self.pos >= n:
            return b""
        ch = data[self.pos:self.pos + 1]
        if data[self.pos:self.pos + 2] in (b"<<", b">>"):
            self.pos += 2
            return data[self.pos - 2:self.pos]
        if ch in b"[]{}()<>":
            self.pos += 1
            return ch
        if ch == b"/":
            start = self.pos
            self.pos += 1
            while self.pos < n and data[self.pos:self.pos + 1] not in _WS \
                    and data[self.pos:self.pos + 1] not in _DELIM:
                self.pos += 1
            return data[start:self.pos]
        start = self.pos
        while self.pos < n and data[self.pos:self.pos + 1] not in _WS \
                and data[self.pos:self.pos + 1] not in _DELIM:
            self.pos += 1
        return data[start:self.pos]


class _Ref:
    __slots__ = ("num",)

    def __init__(self, num: int):
        self.num = num


def _parse_value(lex: _Lexer):
    tok = lex.next_token()
    if tok == b"<<":
        d = {}
        while True:
            key = lex.next_token()
            if key == b">>":
                return d
            if not key.startswith(b"/"):
                raise UnreadableDocument("malformed PDF dictionary")
            d[key[1:].decode("latin-1")] = _parse_value(lex)
    if tok == b"[":
        arr = []
        while lex.peek_token() != b"]":
            arr.append(_parse_value(lex))
        lex.next_token()
        return arr
    if tok.startswith(b"/"):
        return ("name", tok[1:].decode("latin-1"))
    if tok == b"(":
        # Literal string; minimal escape handling.
        out, depth = bytearray(), 1
        data = lex.data
        while depth:
            ch = data[lex.pos:lex.pos + 1]
            lex.pos += 1
            if not ch:
                raise UnreadableDocument("unterminated PDF string")
            if ch == b"\\":
                out += data[lex.pos:lex.pos + 1]
                lex.pos += 1
            elif ch == b"(":
                depth += 1
                out += ch
            elif ch == b")":
                depth -= 1
                if depth:
                    out += ch
            else:
                out += ch
        return bytes(out)
    if tok in (b"true", b"false"):
        return tok == b"true"
    if tok == b"null":
        return None
    try:
        if re.fullmatch(rb"[+-]?\d+", tok):
            # Possible indirect reference "N G R".
            save = lex.pos
            gen = lex.next_token()
            r = lex.next_token()
            if r == b"R" and re.fullmatch(rb"\d+", gen):
                return _Ref(int(tok))
            lex.pos = save
            return int(tok)
        return float(tok)
    except ValueError as exc:
        raise UnreadableDocument(f"bad PDF token {tok!r}") from exc


class PdfFile:
    """Parsed object store for a generated PDF (scans obj..endobj pairs)."""

    def __init__(self, data: bytes):
        if not data.startswith(b"%PDF"):
            raise UnreadableDocument("missing %PDF header")
        self.data = data
        self.objects: dict[int, object] = {}
        self.streams: dict[int, bytes] = {}
        for m in re.finditer(rb"(?m)^(\d+)\s+\d+\s+obj\b", data):
            num = int(m.group(1))
            lex = _Lexer(data, m.end())
            value = _parse_value(lex)
            if isinstance(value, dict):
                lex._skip_ws()
                if data[lex.pos:lex.pos + 6] == b"stream":
                    start = lex.pos + 6
                    if data[start:start + 2] == b"\r\n":
                        start += 2
                    elif data[start:start + 1] == b"\n":
                        start += 1
                    length = self._resolve_later(value.get("Length"), data)
                    self.streams[num] = data[start:start + length]
            self.objects[num] = value
        tr = data.rfind(b"trailer")
        if tr < 0:
            raise UnreadableDocument("missing PDF trailer")
        lex = _Lexer(data, tr + len(b"trailer"))
        self.trailer = _parse_value(lex)

    @staticmethod
    def _resolve_later(length, data) -> int:
        if isinstance(length, int):
            return length
        if isinstance(length, _Ref):
            m = re.search(rb"(?m)^%d\s+\d+\s+obj\s+(\d+)" % length.num, data)
            if not m:
                raise UnreadableDocument("unresolvable stream /Length")
            return int(m.group(1))
        raise UnreadableDocument("stream without /Length")

    def resolve(self, value):
        while isinstance(value, _Ref):
            value = self.objects.get(value.num)
        return value

    def stream_for(self, ref) -> tuple[dict, bytes]:
        if not isinstance(ref, _Ref) or ref.num not in self.streams:
            raise UnreadableDocument("expected a stream object")
        info = self.objects[ref.num]
        raw = self.streams[ref.num]
        filt = self.resolve(info.get("Filter"))
        if filt is None:
            return info, raw
        if filt == ("name", "FlateDecode"):
            try:
                return info, zlib.decompress(raw)
            except zlib.error as exc:
                raise UnreadableDocument("corrupt Flate stream") from exc
        raise UnreadableDocument(f"unsupported stream filter {filt}")

    def pages(self) -> list[dict]:
        root = self.resolve(self.trailer.get("Root"))
        if not isinstance(root, dict):
            raise UnreadableDocument("missing document root")
        tree = self.resolve(root.get("Pages"))
        out: list[dict] = []

        def walk(node):
            node = self.resolve(node)
            if not isinstance(node, dict):
                raise UnreadableDocument("bad page tree node")
            if node.get("Type") == ("name", "Pages"):
                for kid in self.resolve(node.get("Kids", [])):
                    walk(kid)
            else:
                out.append(node)

        if tree is not None:
            walk(tree)
        return out


# ---------------------------------------------------------------------------
# Rasterizer


def _mat_mul(m, n):
    a, b, c, d, e, f = m
    a2, b2, c2, d2, e2, f2 = n
    return (a * a2 + b * c2, a * b2 + b * d2,
            c * a2 + d * c2, c * b2 + d * d2,
            e * a2 + f * c2 + e2, e * b2 + f * d2 + f2)


def _apply(m, x, y):
    a, b, c, d, e, f = m
    return (a * x + c * y + e, b * x + d * y + f)


def _flatten_bezier(p0, p1, p2, p3, steps=16):
    pts = []
    for i in range(1, steps + 1):
        t = i / steps
        u = 1.0 - t
        x = u**3 * p0[0] + 3 * u * u * t * p1[0] + 3 * u * t * t * p2[0] + t**3 * p3[0]
        y = u**3 * p0[1] + 3 * u * u * t * p1[1] + 3 * u * t * t * p2[1] + t**3 * p3[1]
        pts.append((x, y))
    return pts


class _Raster:
    def __init__(self, pdf: PdfFile, page: dict, dpi: float):
        self.pdf = pdf
        self.dpi = dpi
        box = pdf.resolve(page.get("MediaBox", [0, 0, 612, 792]))
        self.x0, self.y0 = float(box[0]), float(box[1])
        self.w_pt = float(box[2]) - self.x0
        self.h_pt = float(box[3]) - self.y0
        self.width = max(1, round(self.w_pt * dpi / 72.0))
        self.height = max(1, round(self.h_pt * dpi / 72.0))
        self.img = Image.new("RGB", (self.width, self.height), (255, 255, 255))
        self.draw = ImageDraw.Draw(self.img)

    def to_device(self, pt):
        # User space origin is bottom-left; device rows grow downward.
        x = (pt[0] - self.x0) * self.dpi / 72.0
        y = self.height - (pt[1] - self.y0) * self.dpi / 72.0
        return (x, y)

    def run(self, content: bytes, resources: dict):
        lex = _Lexer(content)
        stack: list = []
        ctm = (1.0, 0.0, 0.0, 1.0, 0.0, 0.0)
        gstack: list = []
        stroke = (0, 0, 0)
        fill = (0, 0, 0)
        width = 1.0
        path: list[list[tuple]] = []
        start = None

        def as_num(v):
            return float(v)

        while True:
            save = lex.pos
            tok = lex.next_token()
            if tok == b"":
                break
            if re.fullmatch(rb"[+-]?[\d.]+", tok) or tok in (b"[", b"(", b"<<") or tok.startswith(b"/"):
                lex.pos = save
                stack.append(_parse_value(lex))
                continue
            op = tok.decode("latin-1")
            if op == "q":
                gstack.append((ctm, stroke, fill, width))
            elif op == "Q":
                if gstack:
                    ctm, stroke, fill, width = gstack.pop()
            elif op == "cm":
                m = tuple(as_num(v) for v in stack[-6:])
                ctm = _mat_mul(m, ctm)
                stack.clear()
            elif op == "w":
                width = as_num(stack[-1])
                stack.clear()
            elif op in ("RG", "rg"):
                col = tuple(int(round(as_num(v) * 255)) for v in stack[-3:])
                if op == "RG":
                    stroke = col
                else:
                    fill = col
                stack.clear()
            elif op in ("G", "g"):
                v = int(round(as_num(stack[-1]) * 255))
                if op == "G":
                    stroke = (v, v, v)
                else:
                    fill = (v, v, v)
                stack.clear()
            elif op == "m":
                x, y = as_num(stack[-2]), as_num(stack[-1])
                path.append([_apply(ctm, x, y)])
                start = path[-1][0]
                stack.clear()
            elif op == "l":
                x, y = as_num(stack[-2]), as_num(stack[-1])
                if not path:
                    path.append([(0.0, 0.0)])
                path[-1].append(_apply(ctm, x, y))
                stack.clear()
            elif op == "c":
                x1, y1, x2, y2, x3, y3 = (as_num(v) for v in stack[-6:])
                if path:
                    p0 = path[-1][-1]
                    pts = _flatten_bezier(p0, _apply(ctm, x1, y1),
                                          _apply(ctm, x2, y2), _apply(ctm, x3, y3))
                    path[-1].extend(pts)
                stack.clear()
            elif op == "re":
                x, y, w, h = (as_num(v) for v in stack[-4:])
                corners = [(x, y), (x + w, y), (x + w, y + h), (x, y + h), (x, y)]
                path.append([_apply(ctm, *pt) for pt in corners])
                stack.clear()
            elif op == "h":
                if path and start is not None:
                    path[-1].append(start)
                stack.clear()
            elif op in ("S", "s"):
                if op == "s" and path and start is not None:
                    path[-1].append(start)
                self._stroke(path, stroke, width, ctm)
                path, start = [], None
                stack.clear()
            elif op in ("f", "F", "f*", "b", "B"):
                self._fill(path, fill)
                if op in ("b", "B"):
                    self._stroke(path, stroke, width, ctm)
                path, start = [], None
                stack.clear()
            elif op == "n":
                path, start = [], None
                stack.clear()
            elif op == "Do":
                name = stack[-1]
                stack.clear()
                self._draw_xobject(name, resources, ctm)
            elif op == "BT":
                # Text is not rasterized; skip to ET.
                while True:
                    t = lex.next_token()
                    if t in (b"ET", b""):
                        break
            elif op in ("W", "W*"):
                stack.clear()      # clipping unsupported; paths here are page-sized
            else:
                stack.clear()      # unknown operators are ignored

    def _stroke(self, path, color, width, ctm):
        scale = self.dpi / 72.0 * max(abs(ctm[0]), abs(ctm[3]), 1e-9)
        # `width` is in pre-CTM user units; approximate with the dominant scale.
        px = max(1, round(width * scale))
        for sub in path:
            dev = [self.to_device(pt) for pt in sub]
            if len(dev) >= 2:
                self.draw.line(dev, fill=color, width=px)

    def _fill(self, path, color):
        for sub in path:
            dev = [self.to_device(pt) for pt in sub]
            if len(dev) >= 3:
                self.draw.polygon(dev, fill=color)

    def _draw_xobject(self, name, resources, ctm):
        if not (isinstance(name, tuple) and name[0] == "name"):
            raise UnreadableDocument("bad XObject operand")
        xobjects = self.pdf.resolve(resources.get("XObject", {}))
        ref = xobjects.get(name[1])
        if ref is None:
            raise UnreadableDocument(f"unknown XObject /{name[1]}")
        info, data = self.pdf.stream_for(ref)
        if self.pdf.resolve(info.get("Subtype")) != ("name", "Image"):
            raise UnreadableDocument("only image XObjects are supported")
        w = int(self.pdf.resolve(info["Width"]))
        h = int(self.pdf.resolve(info["Height"]))
        cs = self.pdf.resolve(info.get("ColorSpace"))
        if cs == ("name", "DeviceRGB"):
            arr = np.frombuffer(data, dtype=np.uint8)
            if arr.size != w * h * 3:
                raise UnreadableDocument("image stream size mismatch")
            arr = arr.reshape(h, w, 3)
        elif cs == ("name", "DeviceGray"):
            arr = np.frombuffer(data, dtype=np.uint8)
            if arr.size != w * h:
                raise UnreadableDocument("image stream size mismatch")
            arr = np.repeat(arr.reshape(h, w, 1), 3, axis=2)
        else:
            raise UnreadableDocument(f"unsupported image color space {cs}")
        a, b, c, d, e, f = ctm
        if abs(b) > 1e-9 or abs(c) > 1e-9 or a <= 0 or d <= 0:
            raise UnreadableDocument("rotated/skewed images are not supported")
        # Unit square maps to [e, e+a] x [f, f+d] in user space.
        x_dev, y_dev = self.to_device((e, f + d))
        w_px = max(1, round(a * self.dpi / 72.0))
        h_px = max(1, round(d * self.dpi / 72.0))
        tile = Image.fromarray(arr, "RGB")
        if tile.size != (w_px, h_px):
            tile = tile.resize((w_px, h_px), Image.BILINEAR)
        self.img.paste(tile, (round(x_dev), round(y_dev)))


def rasterize(data: bytes, dpi: float, page_index: int = 0) -> np.ndarray:
    """Rasterize one page of a generated PDF to an RGB uint8 array."""
    pdf = PdfFile(data)
    pages = pdf.pages()
    if not pages:
        raise EmptyDocument("PDF has no pages")
    if not 0 <= page_index < len(pages):
        raise EmptyDocument(f"page {page_index} out of range (document has {len(pages)})")
    page = pages[page_index]
    ras = _Raster(pdf, page, dpi)
    contents = page.get("Contents")
    refs = contents if isinstance(contents, list) else [contents]
    resources = pdf.resolve(page.get("Resources", {})) or {}
    for ref in refs:
        if ref is None:
            continue
        _, stream = pdf.stream_for(ref)
        ras.run(stream, resources)
    return np.asarray(ras.img)


def page_count(data: bytes) -> int:
    return len(PdfFile(data).pages())
