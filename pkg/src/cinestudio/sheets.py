"""Composition of keyframes into bordered vertical sheets and their recovery.

Images are numpy uint8 arrays of shape (height, width, 3), row-major RGB.
A sheet stacks N frames of identical width and height, separated by N-1
checkerboard border bands; no band at the top or bottom. Two detectors
recover the frame boundaries: a checkerboard matcher guided by a
Canny-style edge map (for sheets produced by this codec) and an
adjacent-row-difference peak picker (for borderless sheets, which needs
the expected frame count).
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from enum import Enum
from typing import Sequence

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage


class SheetError(Exception):
    pass


class DegenerateImageError(SheetError):
    pass


class HeightMismatchError(SheetError):
    pass


class WidthMismatchError(SheetError):
    pass


class EmptyFrameListError(SheetError):
    pass


class InsufficientHeightError(SheetError):
    pass


class InconsistentReportError(SheetError):
    pass


@dataclass(frozen=True)
class LayoutSpec:
    frame_height: int = 272
    border_thickness: int = 16
    checker_cell: int = 8
    checker_colors: tuple[tuple[int, int, int], tuple[int, int, int]] = ((0, 0, 0), (255, 255, 255))
    width_multiple: int = 16

    def __post_init__(self):
        if self.frame_height <= 0 or self.border_thickness <= 0 or self.checker_cell <= 0 or self.width_multiple <= 0:
            raise ValueError("layout dimensions must be positive")
        if self.frame_height % 8 != 0:
            raise ValueError("frame_height must be divisible by 8")
        if self.border_thickness % self.checker_cell != 0:
            raise ValueError("border_thickness must be divisible by checker_cell")

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["checker_colors"] = [list(c) for c in self.checker_colors]
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "LayoutSpec":
        d = dict(d)
        if "checker_colors" in d:
            d["checker_colors"] = tuple(tuple(c) for c in d["checker_colors"])
        return cls(**d)


class BoundaryMethod(Enum):
    CHECKERBOARD = "checkerboard"
    ROW_DIFF = "rowdiff"


@dataclass(frozen=True)
class BoundaryReport:
    cut_rows: tuple[int, ...]
    method: BoundaryMethod
    scores: tuple[float, ...]

    def __post_init__(self):
        if list(self.cut_rows) != sorted(set(self.cut_rows)):
            raise ValueError("cut rows must be strictly increasing")
        if len(self.scores) != len(self.cut_rows):
            raise ValueError("one score per cut")


@dataclass(frozen=True)
class Sheet:
    image: np.ndarray
    layout: LayoutSpec
    frame_count_hint: int | None = None

    def __post_init__(self):
        _check_image(self.image)
        if self.frame_count_hint is not None:
            want = expected_sheet_height(self.frame_count_hint, self.layout)
            if self.image.shape[0] != want:
                raise HeightMismatchError(
                    f"sheet height {self.image.shape[0]} != {want} for {self.frame_count_hint} frames"
                )


def _check_image(img: np.ndarray) -> None:
    if not isinstance(img, np.ndarray) or img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise DegenerateImageError("image must be a (H, W, 3) uint8 array")
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise DegenerateImageError("image has a zero dimension")


def load_png(path) -> np.ndarray:
    with PILImage.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_png(img: np.ndarray, path) -> None:
    _check_image(img)
    PILImage.fromarray(img, mode="RGB").save(path, format="PNG")


def normalize_frame(img: np.ndarray, layout: LayoutSpec, target_width: int) -> np.ndarray:
    """Scale to layout.frame_height preserving aspect (bilinear), then center
    on black padding or center-crop horizontally to target_width. Never crops
    vertically."""
    _check_image(img)
    if target_width % layout.width_multiple != 0:
        raise ValueError(f"target_width must be a multiple of {layout.width_multiple}")
    h, w = img.shape[:2]
    fh = layout.frame_height
    new_w = max(1, round(w * fh / h))
    if (h, w) != (fh, new_w):
        pil = PILImage.fromarray(img, mode="RGB").resize((new_w, fh), PILImage.BILINEAR)
        scaled = np.asarray(pil, dtype=np.uint8)
    else:
        scaled = img
    out = np.zeros((fh, target_width, 3), dtype=np.uint8)
    if new_w <= target_width:
        x0 = (target_width - new_w) // 2
        out[:, x0:x0 + new_w] = scaled
    else:
        x0 = (new_w - target_width) // 2
        out[:] = scaled[:, x0:x0 + target_width]
    return out


def render_border(width: int, layout: LayoutSpec) -> np.ndarray:
    """Checkerboard band of border_thickness x width; cell color alternates by
    (row_cell + col_cell) parity, origin-anchored, top-left = colors[0]."""
    if width <= 0:
        raise ValueError("width must be positive")
    rows = np.arange(layout.border_thickness) // layout.checker_cell
    cols = np.arange(width) // layout.checker_cell
    parity = (rows[:, None] + cols[None, :]) % 2
    colors = np.array(layout.checker_colors, dtype=np.uint8)
    return colors[parity]


def expected_sheet_height(n: int, layout: LayoutSpec) -> int:
    if n < 1:
        raise ValueError("frame count must be >= 1")
    return n * layout.frame_height + (n - 1) * layout.border_thickness


def border_row_positions(n: int, layout: LayoutSpec) -> list[int]:
    """Top rows of the N-1 border bands in an N-frame sheet."""
    step = layout.frame_height + layout.border_thickness
    return [layout.frame_height + k * step for k in range(n - 1)]


def compose_sheet(frames: Sequence[np.ndarray], layout: LayoutSpec) -> Sheet:
    """Stack frames vertically with a checkerboard band between consecutive
    frames. All frames must share width and be exactly frame_height tall."""
    if not frames:
        raise EmptyFrameListError("no frames to compose")
    for f in frames:
        _check_image(f)
    width = frames[0].shape[1]
    for i, f in enumerate(frames):
        if f.shape[0] != layout.frame_height:
            raise HeightMismatchError(f"frame {i} height {f.shape[0]} != {layout.frame_height}")
        if f.shape[1] != width:
            raise WidthMismatchError(f"frame {i} width {f.shape[1]} != {width}")
    border = render_border(width, layout)
    parts: list[np.ndarray] = []
    for i, f in enumerate(frames):
        if i:
            parts.append(border)
        parts.append(f)
    return Sheet(image=np.concatenate(parts, axis=0), layout=layout, frame_count_hint=len(frames))


def canny_edge_map(
    img: np.ndarray,
    sigma: float = 1.4,
    low_frac: float = 0.1,
    high_frac: float = 0.3,
) -> np.ndarray:
    """Boolean edge map: grayscale -> 5x5 Gaussian blur -> Sobel gradient
    magnitude -> hysteresis thresholding at (low_frac, high_frac) of the max
    gradient. Pixels above high are edges; pixels above low join if
    connected to one through above-low neighbors."""
    _check_image(img)
    gray = img.astype(np.float32) @ np.array([0.299, 0.587, 0.114], dtype=np.float32)

    ax = np.arange(-2, 3, dtype=np.float32)
    g1 = np.exp(-(ax**2) / (2 * sigma**2))
    g1 /= g1.sum()

    sobel = np.array([1.0, 2.0, 1.0], dtype=np.float32)
    deriv = np.array([1.0, 0.0, -1.0], dtype=np.float32)
    # separable Gaussian-then-Sobel collapses to one combined kernel per axis
    g_sobel = np.convolve(g1, sobel)
    g_deriv = np.convolve(g1, deriv)
    gx = ndimage.convolve1d(ndimage.convolve1d(gray, g_sobel, axis=0, mode="nearest"), g_deriv, axis=1, mode="nearest")
    gy = ndimage.convolve1d(ndimage.convolve1d(gray, g_sobel, axis=1, mode="nearest"), g_deriv, axis=0, mode="nearest")
    # threshold on squared magnitude: mag >= f*peak <=> mag^2 >= f^2*peak^2
    mag2 = gx * gx + gy * gy
    peak2 = mag2.max()
    if peak2 == 0:
        return np.zeros(mag2.shape, dtype=bool)
    strong = mag2 >= (high_frac * high_frac) * peak2
    weak = mag2 >= (low_frac * low_frac) * peak2

    # hysteresis: keep weak components that touch a strong pixel
    labels, n = ndimage.label(weak)
    if n == 0:
        return strong
    keep = np.zeros(n + 1, dtype=bool)
    keep[labels[strong]] = True
    keep[0] = False
    return keep[labels]


def detect_borders_checker(
    sheet: Sheet,
    pixel_tolerance: int = 24,
    accept_threshold: float = 0.80,
    edge_density_floor: float = 0.05,
) -> BoundaryReport:
    """Find checkerboard border bands. Candidate start rows come from a
    Canny-style edge map (bands are dense in cell-boundary edges); each
    candidate band is scored by the fraction of pixels within
    pixel_tolerance per channel of the expected origin-anchored pattern.
    Bands with score >= accept_threshold are kept greedily by score,
    non-overlapping, ties toward the smaller row."""
    img = sheet.image
    layout = sheet.layout
    h, w = img.shape[:2]
    bt = layout.border_thickness
    cell = layout.checker_cell
    if h < layout.frame_height:
        raise InsufficientHeightError("sheet shorter than one frame")
    if h < bt:
        return BoundaryReport(cut_rows=(), method=BoundaryMethod.CHECKERBOARD, scores=())

    # per-row match fraction against each of the two checker row phases.
    # Per-pixel match against each checker color is a uint8 range test; the
    # phase patterns then reduce to two matrix-vector column sums.
    cols = np.arange(w) // cell
    colors = np.array(layout.checker_colors, dtype=np.int16)
    ok_color = np.empty((2, h, w), dtype=np.float32)
    if all(len(set(int(v) for v in c)) == 1 for c in colors):
        # grayscale checker colors (the default black/white): all channels in
        # [c-tol, c+tol] is equivalent to channel max <= c+tol and min >= c-tol
        ch = np.ascontiguousarray(img.transpose(2, 0, 1))
        ch_max = np.maximum(np.maximum(ch[0], ch[1]), ch[2])
        ch_min = np.minimum(np.minimum(ch[0], ch[1]), ch[2])
        for c in (0, 1):
            v = int(colors[c][0])
            ok_color[c] = (ch_min >= max(v - pixel_tolerance, 0)) & (
                ch_max <= min(v + pixel_tolerance, 255)
            )
    else:
        for c in (0, 1):
            lo = np.clip(colors[c] - pixel_tolerance, 0, 255).astype(np.uint8)
            hi = np.clip(colors[c] + pixel_tolerance, 0, 255).astype(np.uint8)
            ok_color[c] = ((img >= lo) & (img <= hi)).all(axis=2)
    row_match = np.empty((2, h))
    for phase in (0, 1):
        pattern = (phase + cols) % 2  # which color each column expects
        w0 = (pattern == 0).astype(np.float32)
        w1 = (pattern == 1).astype(np.float32)
        row_match[phase] = (ok_color[0] @ w0 + ok_color[1] @ w1) / w

    # band score: mean of row matches using the band-local phase sequence
    phases = (np.arange(bt) // cell) % 2
    starts = np.arange(h - bt + 1)
    band_scores = np.zeros(len(starts))
    for i, ph in enumerate(phases):
        band_scores += row_match[ph][i: i + len(starts)]
    band_scores /= bt

    edges = canny_edge_map(img)
    row_edge_frac = edges.mean(axis=1)
    band_edge = np.convolve(row_edge_frac, np.ones(bt) / bt, mode="valid")
    candidates = starts[(band_edge >= edge_density_floor) & (band_scores >= accept_threshold)]

    order = sorted(candidates, key=lambda s: (-band_scores[s], s))
    chosen: list[int] = []
    for s in order:
        if all(abs(s - c) >= bt for c in chosen):
            chosen.append(int(s))
    chosen.sort()
    return BoundaryReport(
        cut_rows=tuple(chosen),
        method=BoundaryMethod.CHECKERBOARD,
        scores=tuple(float(band_scores[s]) for s in chosen),
    )


def detect_borders_rowdiff(sheet: Sheet, expected_n: int) -> BoundaryReport:
    """Pick the expected_n - 1 strongest adjacent-row differences as cut
    lines. d[r] = mean absolute channel difference between rows r and r+1;
    non-maximum suppression window of frame_height / 2; ties break toward
    the smaller row. A cut at row r means rows 0..r belong to the segment
    above the cut."""
    if expected_n < 1:
        raise ValueError("expected_n must be >= 1")
    img = sheet.image
    h = img.shape[0]
    if h < expected_n:
        raise InsufficientHeightError(f"height {h} < expected_n {expected_n}")
    if expected_n == 1:
        return BoundaryReport(cut_rows=(), method=BoundaryMethod.ROW_DIFF, scores=())

    d = np.abs(np.diff(img.astype(np.int32), axis=0)).mean(axis=(1, 2))
    window = sheet.layout.frame_height // 2
    order = sorted(range(len(d)), key=lambda r: (-d[r], r))
    chosen: list[int] = []
    for r in order:
        if len(chosen) == expected_n - 1:
            break
        if all(abs(r - c) >= window for c in chosen):
            chosen.append(r)
    chosen.sort()
    dmax = float(d.max()) if d.max() > 0 else 1.0
    return BoundaryReport(
        cut_rows=tuple(chosen),
        method=BoundaryMethod.ROW_DIFF,
        scores=tuple(float(d[r]) / dmax for r in chosen),
    )


def split_sheet(sheet: Sheet, report: BoundaryReport) -> list[np.ndarray]:
    """Cut the sheet back into frames. Checkerboard cuts mark border bands,
    which are discarded; rowdiff cuts are single lines and nothing is
    discarded (rows 0..cut form the upper segment)."""
    img = sheet.image
    h = img.shape[0]
    bt = sheet.layout.border_thickness
    segments: list[np.ndarray] = []
    top = 0
    for cut in report.cut_rows:
        if report.method is BoundaryMethod.CHECKERBOARD:
            if cut < top or cut + bt > h:
                raise InconsistentReportError(f"band at {cut} outside sheet")
            segments.append(img[top:cut])
            top = cut + bt
        else:
            if cut < top or cut >= h:
                raise InconsistentReportError(f"cut at {cut} outside sheet")
            segments.append(img[top:cut + 1])
            top = cut + 1
    segments.append(img[top:h])
    return [s.copy() for s in segments]


def count_frames(sheet: Sheet, borderless_expected_n: int | None = None) -> int:
    """1 + number of detected cuts. Uses the checkerboard detector unless the
    sheet is flagged borderless, in which case rowdiff runs with the
    externally supplied expected count."""
    if borderless_expected_n is not None:
        report = detect_borders_rowdiff(sheet, borderless_expected_n)
    else:
        report = detect_borders_checker(sheet)
    return 1 + len(report.cut_rows)


def frame_count_accuracy(pairs: Sequence[tuple[int, int]]) -> float:
    """Fraction of (expected, detected) pairs that agree."""
    if not pairs:
        raise ValueError("empty input")
    return sum(1 for e, d in pairs if e == d) / len(pairs)


def sheet_sidecar(sheet: Sheet, cut_rows: Sequence[int], source_plan_id: str | None = None) -> dict:
    return {
        "layout": sheet.layout.to_json_dict(),
        "frame_count": sheet.frame_count_hint,
        "cut_rows": list(cut_rows),
        "source_plan_id": source_plan_id,
    }
