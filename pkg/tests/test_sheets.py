import numpy as np
import pytest

from cinestudio.generation import destroy_borders
from cinestudio.sheets import (
    BoundaryMethod,
    BoundaryReport,
    DegenerateImageError,
    EmptyFrameListError,
    HeightMismatchError,
    InconsistentReportError,
    LayoutSpec,
    Sheet,
    WidthMismatchError,
    border_row_positions,
    compose_sheet,
    count_frames,
    detect_borders_checker,
    detect_borders_rowdiff,
    expected_sheet_height,
    frame_count_accuracy,
    load_png,
    normalize_frame,
    render_border,
    save_png,
    split_sheet,
)

LAYOUT = LayoutSpec()


def noise_frames(rng, n, width=160, height=None):
    height = height or LAYOUT.frame_height
    return [rng.integers(0, 256, (height, width, 3), dtype=np.uint8) for _ in range(n)]


def solid(color, height, width=160):
    return np.full((height, width, 3), color, dtype=np.uint8)


# --- layout arithmetic ---


def test_expected_sheet_height_spot_values():
    assert expected_sheet_height(1, LAYOUT) == 272
    assert expected_sheet_height(4, LAYOUT) == 1136
    assert expected_sheet_height(10, LAYOUT) == 2864


def test_expected_sheet_height_formula():
    for n in range(1, 33):
        assert expected_sheet_height(n, LAYOUT) == n * 272 + (n - 1) * 16


def test_expected_sheet_height_rejects_zero():
    with pytest.raises(ValueError):
        expected_sheet_height(0, LAYOUT)


def test_layout_invariants_enforced():
    with pytest.raises(ValueError):
        LayoutSpec(frame_height=270)
    with pytest.raises(ValueError):
        LayoutSpec(border_thickness=12, checker_cell=8)
    with pytest.raises(ValueError):
        LayoutSpec(frame_height=0)


# --- render_border ---


def test_border_formula_16px():
    border = render_border(16, LAYOUT)
    assert border.shape == (16, 16, 3)
    assert (border[0, 0] == [0, 0, 0]).all()       # top-left black
    assert (border[0, 8] == [255, 255, 255]).all()  # parity 1
    assert (border[8, 8] == [0, 0, 0]).all()        # parity 0 again


def test_border_deterministic():
    a = render_border(100, LAYOUT)
    b = render_border(100, LAYOUT)
    assert (a == b).all()


# --- normalize_frame ---


def test_normalize_exact_half_scale():
    img = np.full((544, 544, 3), 200, dtype=np.uint8)
    out = normalize_frame(img, LAYOUT, 272)
    assert out.shape == (272, 272, 3)
    assert (out == 200).all()  # uniform input, no padding


def test_normalize_pads_narrow_input():
    img = np.full((272, 100, 3), 90, dtype=np.uint8)
    out = normalize_frame(img, LAYOUT, 272)
    assert out.shape == (272, 272, 3)
    assert (out[:, 86:186] == 90).all()
    assert (out[:, :86] == 0).all()
    assert (out[:, 186:] == 0).all()


def test_normalize_preserves_solid_color():
    rng = np.random.default_rng(3)
    for h, w in [(123, 456), (700, 300), (272, 272)]:
        img = np.zeros((h, w, 3), dtype=np.uint8)
        img[:, :] = (200, 10, 30)
        out = normalize_frame(img, LAYOUT, 464)
        colors = {tuple(c) for c in out.reshape(-1, 3)}
        assert colors <= {(200, 10, 30), (0, 0, 0)}


def test_normalize_rejects_bad_width():
    img = np.zeros((272, 100, 3), dtype=np.uint8)
    with pytest.raises(ValueError):
        normalize_frame(img, LAYOUT, 270)


def test_normalize_rejects_degenerate():
    with pytest.raises(DegenerateImageError):
        normalize_frame(np.zeros((0, 5, 3), dtype=np.uint8), LAYOUT, 272)


# --- compose / split ---


def test_compose_three_frames_layout():
    frames = [solid(c, 272, 400) for c in (10, 120, 240)]
    sheet = compose_sheet(frames, LAYOUT)
    assert sheet.image.shape == (848, 400, 3)
    assert border_row_positions(3, LAYOUT) == [272, 560]
    assert sheet.frame_count_hint == 3


def test_compose_single_frame_is_identity():
    frame = solid(55, 272)
    sheet = compose_sheet([frame], LAYOUT)
    assert (sheet.image == frame).all()


def test_compose_rejects_mismatches():
    with pytest.raises(EmptyFrameListError):
        compose_sheet([], LAYOUT)
    with pytest.raises(HeightMismatchError):
        compose_sheet([solid(1, 200)], LAYOUT)
    with pytest.raises(WidthMismatchError):
        compose_sheet([solid(1, 272, 100), solid(1, 272, 200)], LAYOUT)


def test_roundtrip_bit_exact(rng):
    for n in range(1, 17):
        frames = noise_frames(rng, n)
        sheet = compose_sheet(frames, LAYOUT)
        report = detect_borders_checker(sheet)
        out = split_sheet(sheet, report)
        assert len(out) == n
        for a, b in zip(frames, out):
            assert (a == b).all()


def test_split_empty_report_returns_whole_sheet(rng):
    sheet = compose_sheet(noise_frames(rng, 2), LAYOUT)
    report = BoundaryReport(cut_rows=(), method=BoundaryMethod.CHECKERBOARD, scores=())
    out = split_sheet(sheet, report)
    assert len(out) == 1
    assert (out[0] == sheet.image).all()


def test_split_rejects_out_of_range_cut(rng):
    sheet = compose_sheet(noise_frames(rng, 2), LAYOUT)
    report = BoundaryReport(cut_rows=(10_000,), method=BoundaryMethod.CHECKERBOARD, scores=(1.0,))
    with pytest.raises(InconsistentReportError):
        split_sheet(sheet, report)


# --- checker detection ---


def test_checker_detects_exact_rows(rng):
    sheet = compose_sheet(noise_frames(rng, 5), LAYOUT)
    report = detect_borders_checker(sheet)
    assert list(report.cut_rows) == [272, 560, 848, 1136]
    assert all(s >= 0.99 for s in report.scores)


def test_checker_single_frame_no_cuts(rng):
    sheet = compose_sheet(noise_frames(rng, 1), LAYOUT)
    assert detect_borders_checker(sheet).cut_rows == ()


def test_checker_survives_destroyed_band(rng):
    sheet = compose_sheet(noise_frames(rng, 5), LAYOUT)
    damaged = destroy_borders(sheet, [1])
    report = detect_borders_checker(damaged)
    truth = border_row_positions(5, LAYOUT)
    assert len(report.cut_rows) == 3
    assert set(report.cut_rows) == set(truth) - {truth[1]}  # no false extra cut


# --- rowdiff detection ---


def test_rowdiff_two_solid_frames():
    sheet = Sheet(
        image=np.concatenate([solid((255, 0, 0), 272), solid((0, 0, 255), 272)]),
        layout=LAYOUT,
    )
    report = detect_borders_rowdiff(sheet, 2)
    assert list(report.cut_rows) == [271]


def test_rowdiff_degenerate_uniform_sheet():
    sheet = Sheet(image=solid(77, 544), layout=LAYOUT)
    report = detect_borders_rowdiff(sheet, 2)
    assert list(report.cut_rows) == [0]  # all-zero signal, tie-break to row 0


def test_rowdiff_four_distinct_solid_frames():
    colors = [(255, 0, 0), (0, 255, 0), (0, 0, 255), (255, 255, 0)]
    sheet = Sheet(image=np.concatenate([solid(c, 272) for c in colors]), layout=LAYOUT)
    report = detect_borders_rowdiff(sheet, 4)
    assert list(report.cut_rows) == [271, 543, 815]


def test_rowdiff_matches_bruteforce_oracle(rng):
    # independent oracle: top-(N-1) adjacent-row differences, brute force
    for trial in range(5):
        n = int(rng.integers(2, 8))
        colors = rng.integers(0, 256, (n, 3))
        sheet = Sheet(image=np.concatenate([solid(tuple(c), 272) for c in colors]), layout=LAYOUT)
        d = [
            float(np.abs(sheet.image[r + 1].astype(int) - sheet.image[r].astype(int)).mean())
            for r in range(sheet.image.shape[0] - 1)
        ]
        oracle = sorted(sorted(range(len(d)), key=lambda r: (-d[r], r))[: n - 1])
        report = detect_borders_rowdiff(sheet, n)
        assert list(report.cut_rows) == oracle


def test_rowdiff_split_discards_nothing():
    sheet = Sheet(
        image=np.concatenate([solid((255, 0, 0), 272), solid((0, 0, 255), 272)]),
        layout=LAYOUT,
    )
    report = detect_borders_rowdiff(sheet, 2)
    parts = split_sheet(sheet, report)
    assert (np.concatenate(parts) == sheet.image).all()


def test_rowdiff_insufficient_height():
    sheet = Sheet(image=solid(1, 272), layout=LAYOUT)
    with pytest.raises(Exception):
        detect_borders_rowdiff(sheet, 300)


# --- counting ---


def test_count_frames_composed(rng):
    sheet = compose_sheet(noise_frames(rng, 7), LAYOUT)
    assert count_frames(sheet) == 7


def test_count_frames_single(rng):
    sheet = compose_sheet(noise_frames(rng, 1), LAYOUT)
    assert count_frames(sheet) == 1


def test_count_frames_with_destroyed_border(rng):
    sheet = compose_sheet(noise_frames(rng, 4), LAYOUT)
    assert count_frames(destroy_borders(sheet, [0])) == 3


def test_frame_count_accuracy_values():
    assert frame_count_accuracy([(3, 3), (3, 3), (3, 2), (3, 3)]) == 0.75
    assert frame_count_accuracy([(5, 5)] * 10) == 1.0
    with pytest.raises(ValueError):
        frame_count_accuracy([])


def test_frame_count_accuracy_permutation_invariant(rng):
    pairs = [(int(a), int(b)) for a, b in rng.integers(1, 5, (30, 2))]
    shuffled = list(pairs)
    np.random.default_rng(9).shuffle(shuffled)
    assert frame_count_accuracy(pairs) == frame_count_accuracy(shuffled)


# --- PNG io ---


def test_png_roundtrip_bit_exact(tmp_path, rng):
    img = noise_frames(rng, 1)[0]
    path = tmp_path / "frame.png"
    save_png(img, path)
    assert (load_png(path) == img).all()
