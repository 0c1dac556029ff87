"""Alignment transforms, warping, paste regions, and the Poisson solver."""

from __future__ import annotations

import math

import numpy as np
import pytest

import oracles
from berrysmith.blend import (
    SOR_MAX_SWEEPS,
    SOR_OMEGA,
    SOR_TOL,
    AlignmentTransform,
    ConvergenceError,
    _laplacian,
    _sor_solve,
    compute_alignment,
    mask_centroid,
    paste_region,
    poisson_blend,
    set_debug_dump_dir,
    solve_poisson_plane,
    sor_solve_python,
    warp,
)
from berrysmith.imgcore import ImageRgb, principal_axis
from berrysmith.masks import SegMask


def _rect_mask(w, h, x0, y0, bw, bh, mask_id="m"):
    dense = np.zeros((h, w), dtype=bool)
    dense[y0 : y0 + bh, x0 : x0 + bw] = True
    return SegMask.from_dense(dense, mask_id=mask_id)


def _blob_mask(rng, w, h, mask_id="b"):
    while True:
        dense = rng.random((h, w)) < 0.35
        if dense.sum() >= 3:
            return SegMask.from_dense(dense, mask_id=mask_id)


def _rgb(data):
    return ImageRgb(np.asarray(data, dtype=np.uint8))


def _random_rgb(rng, w, h):
    return ImageRgb(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


# --------------------------------------------------------------------------
# alignment


def test_transform_validation():
    with pytest.raises(ValueError):
        AlignmentTransform(0.0, 1.0, 0.0, 0.0, (0.0, 0.0))
    with pytest.raises(ValueError):
        AlignmentTransform(1.0, -1.0, 0.0, 0.0, (0.0, 0.0))
    with pytest.raises(ValueError):
        AlignmentTransform(1.0, 1.0, 4.0, 0.0, (0.0, 0.0))
    with pytest.raises(ValueError):
        AlignmentTransform(1.0, 1.0, 0.0, 0.0, (0.0, 0.0), scale_mode="other")


def test_mask_centroid_rectangle():
    m = _rect_mask(20, 12, 4, 2, 6, 3)
    assert mask_centroid(m) == pytest.approx((4 + 5 / 2, 2 + 2 / 2), abs=1e-12)


def test_mask_centroid_handles_row_wrapping_runs():
    # one run spanning a row boundary: pixels (0,6), (0,7), (1,0), (1,1)
    m = SegMask(mask_id="w", width=8, height=3, runs=((6, 4),))
    dense = m.to_dense()
    ys, xs = np.nonzero(dense)
    assert mask_centroid(m) == pytest.approx((xs.mean(), ys.mean()), abs=1e-12)


def test_mask_centroid_matches_dense_mean_random():
    rng = np.random.default_rng(11)
    for _ in range(25):
        m = _blob_mask(rng, 13, 9)
        ys, xs = np.nonzero(m.to_dense())
        assert mask_centroid(m) == pytest.approx((xs.mean(), ys.mean()), abs=1e-9)


def test_alignment_identity():
    m = _rect_mask(30, 30, 5, 10, 12, 4)
    t = compute_alignment(m, m)
    assert t.gamma == pytest.approx(1.0, abs=1e-12)
    assert t.linear_scale == pytest.approx(1.0, abs=1e-12)
    assert t.phi == pytest.approx(0.0, abs=1e-9)
    assert t.signed_rotation == pytest.approx(0.0, abs=1e-9)
    assert t.translation == pytest.approx((0.0, 0.0), abs=1e-12)


def test_alignment_area_ratio_and_scale_modes():
    src = _rect_mask(40, 40, 2, 2, 8, 2, "s")  # area 16
    dst = _rect_mask(40, 40, 5, 9, 16, 4, "d")  # area 64
    t = compute_alignment(src, dst)
    assert t.gamma == pytest.approx(4.0, abs=1e-12)
    assert t.linear_scale == pytest.approx(2.0, abs=1e-12)
    t_lit = compute_alignment(src, dst, scale_mode="literal")
    assert t_lit.linear_scale == pytest.approx(4.0, abs=1e-12)
    with pytest.raises(ValueError):
        compute_alignment(src, dst, scale_mode="nope")


def test_alignment_orthogonal_axes():
    src = _rect_mask(40, 40, 3, 3, 15, 3, "s")  # horizontal
    dst = _rect_mask(40, 40, 20, 10, 3, 15, "d")  # vertical
    t = compute_alignment(src, dst)
    assert t.phi == pytest.approx(math.pi / 2, abs=1e-9)
    assert abs(t.signed_rotation) == pytest.approx(math.pi / 2, abs=1e-9)


def test_alignment_translation_moves_centroid():
    src = _rect_mask(50, 50, 2, 2, 9, 3, "s")
    dst = _rect_mask(50, 50, 30, 20, 9, 3, "d")
    t = compute_alignment(src, dst)
    assert t.translation == pytest.approx((28.0, 18.0), abs=1e-12)
    assert t.signed_rotation == pytest.approx(0.0, abs=1e-9)


def test_alignment_swap_symmetry():
    rng = np.random.default_rng(12)
    for _ in range(20):
        a = _blob_mask(rng, 16, 12, "a")
        b = _blob_mask(rng, 16, 12, "b")
        fwd = compute_alignment(a, b)
        rev = compute_alignment(b, a)
        assert fwd.gamma * rev.gamma == pytest.approx(1.0, rel=1e-12)
        assert fwd.phi == pytest.approx(rev.phi, abs=1e-9)
        assert fwd.signed_rotation == pytest.approx(-rev.signed_rotation, abs=1e-9)
        assert fwd.translation[0] == pytest.approx(-rev.translation[0], abs=1e-9)
        assert fwd.translation[1] == pytest.approx(-rev.translation[1], abs=1e-9)


def test_alignment_degenerate_source_zeroes_rotation():
    square = _rect_mask(30, 30, 4, 4, 6, 6, "s")  # equal eigenvalues
    tilted = SegMask.from_dense(
        np.tri(20, 20, 1, dtype=bool) & ~np.tri(20, 20, -2, dtype=bool), mask_id="d"
    )
    assert principal_axis(square).degenerate
    assert not principal_axis(tilted).degenerate
    t = compute_alignment(square, tilted)
    assert t.signed_rotation == 0.0
    assert compute_alignment(tilted, square).signed_rotation == 0.0


def test_alignment_signed_magnitude_is_phi_or_its_complement():
    rng = np.random.default_rng(13)
    checked = 0
    while checked < 30:
        a = _blob_mask(rng, 14, 14, "a")
        b = _blob_mask(rng, 14, 14, "b")
        if principal_axis(a).degenerate or principal_axis(b).degenerate:
            continue
        t = compute_alignment(a, b)
        mag = abs(t.signed_rotation)
        assert mag <= math.pi / 2 + 1e-12
        assert min(abs(mag - t.phi), abs(mag - (math.pi - t.phi))) < 1e-9
        checked += 1


def test_alignment_rotation_aligns_axis_lines():
    rng = np.random.default_rng(14)
    checked = 0
    while checked < 40:
        a = _blob_mask(rng, 15, 11, "a")
        b = _blob_mask(rng, 15, 11, "b")
        pa, pb = principal_axis(a), principal_axis(b)
        if pa.degenerate or pb.degenerate:
            continue
        t = compute_alignment(a, b)
        c, s = math.cos(t.signed_rotation), math.sin(t.signed_rotation)
        rx = c * pa.axis[0] - s * pa.axis[1]
        ry = s * pa.axis[0] + c * pa.axis[1]
        assert abs(rx * pb.axis[0] + ry * pb.axis[1]) >= 1.0 - 1e-6
        checked += 1


# --------------------------------------------------------------------------
# warp and paste region


def _identity_transform(translation=(0.0, 0.0), linear_scale=1.0, signed=0.0):
    return AlignmentTransform(
        gamma=linear_scale * linear_scale,
        linear_scale=linear_scale,
        phi=abs(signed),
        signed_rotation=signed,
        translation=translation,
    )


def test_warp_identity_is_exact():
    rng = np.random.default_rng(15)
    img = _random_rgb(rng, 18, 14)
    mask = _rect_mask(18, 14, 4, 3, 6, 5)
    out_img, out_mask = warp(img, mask, _identity_transform(), 18, 14)
    assert np.array_equal(out_img.data, img.data)
    assert out_mask.to_dense().tolist() == mask.to_dense().tolist()
    assert out_mask.mask_id == "m@warp"


def test_warp_integer_translation_is_exact():
    rng = np.random.default_rng(16)
    img = _random_rgb(rng, 16, 12)
    mask = _rect_mask(16, 12, 2, 2, 5, 4)
    out_img, out_mask = warp(img, mask, _identity_transform(translation=(3.0, 2.0)), 16, 12)
    assert np.array_equal(out_img.data[2:, 3:], img.data[:-2, :-3])
    expected = np.zeros((12, 16), dtype=bool)
    expected[4:8, 5:10] = True
    assert np.array_equal(out_mask.to_dense(), expected)


def test_warp_scale_two_quadruples_area():
    mask = _rect_mask(40, 40, 10, 10, 10, 10)
    img = _rgb(np.full((40, 40, 3), 90))
    _, out_mask = warp(img, mask, _identity_transform(linear_scale=2.0), 60, 60)
    assert abs(out_mask.area - 400) <= 20  # within 5%


def test_warp_quarter_turn_transposes_rectangle():
    mask = _rect_mask(40, 40, 10, 18, 11, 3)
    img = _rgb(np.full((40, 40, 3), 90))
    _, out_mask = warp(img, mask, _identity_transform(signed=math.pi / 2), 40, 40)
    assert abs(out_mask.area - mask.area) <= 4
    ax = principal_axis(out_mask).axis
    assert abs(ax[1]) > 0.99  # now vertical


def test_warp_off_canvas_mask_is_none():
    img = _rgb(np.full((10, 10, 3), 50))
    mask = _rect_mask(10, 10, 2, 2, 4, 4)
    _, out_mask = warp(img, mask, _identity_transform(translation=(500.0, 500.0)), 10, 10)
    assert out_mask is None


def test_warp_rejects_empty_canvas():
    img = _rgb(np.full((5, 5, 3), 50))
    mask = _rect_mask(5, 5, 1, 1, 2, 2)
    with pytest.raises(ValueError):
        warp(img, mask, _identity_transform(), 0, 5)


def test_paste_region_full_overlap():
    m = _rect_mask(20, 20, 5, 5, 6, 6, "a")
    d = _rect_mask(20, 20, 5, 5, 6, 6, "b")
    pr = paste_region(m, d, min_overlap=0.9)
    assert pr.overlap_ratio == pytest.approx(1.0)
    assert pr.region.area == 36
    assert pr.region.mask_id == "a&b"


def test_paste_region_disjoint_is_none():
    m = _rect_mask(20, 20, 0, 0, 4, 4, "a")
    d = _rect_mask(20, 20, 10, 10, 4, 4, "b")
    assert paste_region(m, d, min_overlap=0.0) is None


def test_paste_region_overlap_threshold():
    m = _rect_mask(20, 20, 5, 5, 6, 3, "a")  # covers half of d
    d = _rect_mask(20, 20, 5, 5, 6, 6, "b")
    pr = paste_region(m, d, min_overlap=0.5)
    assert pr is not None and pr.overlap_ratio == pytest.approx(0.5)
    assert paste_region(m, d, min_overlap=0.51) is None


# --------------------------------------------------------------------------
# Poisson solver


def _interior_region(rng, h, w, max_pixels=None):
    while True:
        dense = np.zeros((h, w), dtype=bool)
        dense[1 : h - 1, 1 : w - 1] = rng.random((h - 2, w - 2)) < 0.5
        if dense.any() and (max_pixels is None or dense.sum() <= max_pixels):
            return dense


def test_laplacian_hand_values():
    plane = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]])
    lap = _laplacian(plane)
    # center: 4*5 - 2 - 8 - 4 - 6 = 0; corner (0,0): 4*1 - 1 - 4 - 1 - 2 = -4
    assert lap[1, 1] == 0.0
    assert lap[0, 0] == -4.0


def test_poisson_plane_empty_region_copies_destination():
    dst = np.arange(12.0).reshape(3, 4)
    out, rel, sweeps = solve_poisson_plane(dst, dst + 5.0, np.zeros((3, 4), dtype=bool))
    assert np.array_equal(out, dst)
    assert out is not dst
    assert (rel, sweeps) == (0.0, 0)


def test_poisson_plane_source_equals_destination_is_exact():
    rng = np.random.default_rng(17)
    dst = rng.uniform(0, 255, size=(9, 9))
    region = _interior_region(rng, 9, 9)
    out, rel, sweeps = solve_poisson_plane(dst, dst, region)
    assert np.array_equal(out, dst)
    assert sweeps == 0


def test_poisson_plane_constant_boundary_gives_constant_interior():
    rng = np.random.default_rng(18)
    dst = np.full((10, 10), 77.0)
    region = np.zeros((10, 10), dtype=bool)
    region[2:8, 3:7] = True
    dst[region] = rng.uniform(0, 255, size=int(region.sum()))
    src = np.full((10, 10), 200.0)  # zero guidance gradients
    out, rel, _ = solve_poisson_plane(dst, src, region)
    assert rel <= SOR_TOL
    assert np.allclose(out[region], 77.0, atol=1e-4)


def test_poisson_plane_matches_dense_solver():
    # a tight sweep tolerance isolates discretization agreement from the
    # stopping rule; the default-tolerance residual has its own test below
    rng = np.random.default_rng(19)
    for _ in range(10):
        h, w = int(rng.integers(5, 9)), int(rng.integers(5, 9))
        dst = rng.uniform(0, 255, size=(h, w))
        src = rng.uniform(0, 255, size=(h, w))
        region = _interior_region(rng, h, w)
        out, rel, _ = solve_poisson_plane(dst, src, region, tol=1e-8)
        expected = oracles.poisson_dense(dst, src, region)
        assert rel <= 1e-8
        assert np.abs(out - expected).max() <= 1e-4
        assert np.array_equal(out[~region], dst[~region])


def test_poisson_plane_default_tolerance_residual():
    rng = np.random.default_rng(28)
    for _ in range(5):
        dst = rng.uniform(0, 255, size=(10, 10))
        src = rng.uniform(0, 255, size=(10, 10))
        region = _interior_region(rng, 10, 10)
        _, rel, sweeps = solve_poisson_plane(dst, src, region)
        assert rel <= SOR_TOL
        assert sweeps < SOR_MAX_SWEEPS


def test_poisson_plane_guidance_ignores_constant_offsets():
    # integer-valued planes keep the shifted Laplacian exact in float64, so
    # the guidance (and therefore the whole iteration) is bit-identical
    rng = np.random.default_rng(20)
    dst = rng.integers(0, 256, size=(8, 8)).astype(np.float64)
    src = rng.integers(0, 256, size=(8, 8)).astype(np.float64)
    region = _interior_region(rng, 8, 8)
    out_a, _, _ = solve_poisson_plane(dst, src, region)
    out_b, _, _ = solve_poisson_plane(dst, src + 50.0, region)
    assert np.array_equal(out_a, out_b)


def test_poisson_plane_maximum_principle_with_flat_guidance():
    rng = np.random.default_rng(21)
    dst = rng.uniform(10, 240, size=(9, 9))
    src = np.full((9, 9), 123.0)
    region = np.zeros((9, 9), dtype=bool)
    region[2:7, 2:7] = True
    out, _, _ = solve_poisson_plane(dst, src, region)
    ring = np.zeros_like(region)
    ring[1:8, 1:8] = True
    ring &= ~region
    assert out[region].min() >= dst[ring].min() - 1e-6
    assert out[region].max() <= dst[ring].max() + 1e-6


def test_poisson_plane_rejects_border_region():
    dst = np.zeros((6, 6))
    region = np.zeros((6, 6), dtype=bool)
    region[0, 2] = True
    with pytest.raises(ValueError):
        solve_poisson_plane(dst, dst, region)


def test_sor_python_twin_matches_compiled_path():
    rng = np.random.default_rng(22)
    dst = rng.uniform(0, 255, size=(8, 8))
    src = rng.uniform(0, 255, size=(8, 8))
    region = _interior_region(rng, 8, 8)
    lap_g = _laplacian(src)
    f_a, f_b = dst.copy(), dst.copy()
    res_a = _sor_solve(f_a, lap_g, region, SOR_OMEGA, 1e-8, SOR_MAX_SWEEPS)
    res_b = sor_solve_python(f_b, lap_g, region, SOR_OMEGA, 1e-8, SOR_MAX_SWEEPS)
    assert res_a == res_b
    assert np.array_equal(f_a, f_b)


def test_poisson_blend_source_equals_destination_identity():
    rng = np.random.default_rng(23)
    img = _random_rgb(rng, 12, 12)
    region = _rect_mask(12, 12, 3, 3, 5, 5)
    out = poisson_blend(img, img, region)
    assert np.array_equal(out.data, img.data)


def test_poisson_blend_outside_region_untouched():
    rng = np.random.default_rng(24)
    dst = _random_rgb(rng, 14, 10)
    src = _random_rgb(rng, 14, 10)
    region = _rect_mask(14, 10, 4, 3, 5, 4)
    out = poisson_blend(dst, src, region)
    outside = ~region.to_dense()
    assert np.array_equal(out.data[outside], dst.data[outside])


def test_poisson_blend_moves_region_toward_source_texture():
    rng = np.random.default_rng(25)
    dst = ImageRgb(np.full((16, 16, 3), 40, dtype=np.uint8))
    noisy = rng.integers(80, 250, size=(16, 16, 3), dtype=np.uint8)
    src = ImageRgb(noisy)
    region = _rect_mask(16, 16, 4, 4, 8, 8)
    out = poisson_blend(dst, src, region)
    inside = region.to_dense()
    assert float(out.data[inside].std()) > 5.0  # texture carried over


def test_poisson_blend_rejects_mismatched_shapes():
    a = _rgb(np.zeros((8, 8, 3)))
    b = _rgb(np.zeros((8, 9, 3)))
    region = _rect_mask(8, 8, 2, 2, 3, 3)
    with pytest.raises(ValueError):
        poisson_blend(a, b, region)
    with pytest.raises(ValueError):
        poisson_blend(a, a, _rect_mask(9, 9, 2, 2, 3, 3))


def test_poisson_blend_border_region_raises():
    img = _rgb(np.full((8, 8, 3), 10))
    region = _rect_mask(8, 8, 0, 0, 3, 3)
    with pytest.raises(ValueError):
        poisson_blend(img, img, region)


def test_poisson_blend_convergence_error_carries_state():
    rng = np.random.default_rng(26)
    dst = _random_rgb(rng, 12, 12)
    src = _random_rgb(rng, 12, 12)
    region = _rect_mask(12, 12, 2, 2, 8, 8)
    with pytest.raises(ConvergenceError) as err:
        poisson_blend(dst, src, region, max_sweeps=1)
    assert err.value.sweeps == 1
    assert err.value.residual > SOR_TOL


def test_blend_debug_dump_writes_planes(tmp_path):
    rng = np.random.default_rng(27)
    dst = _random_rgb(rng, 10, 10)
    src = _random_rgb(rng, 10, 10)
    region = _rect_mask(10, 10, 3, 3, 4, 4)
    set_debug_dump_dir(tmp_path)
    try:
        poisson_blend(dst, src, region)
    finally:
        set_debug_dump_dir(None)
    assert len(list(tmp_path.glob("blend_*_guidance.png"))) == 1
    assert len(list(tmp_path.glob("blend_*_residual.png"))) == 1
