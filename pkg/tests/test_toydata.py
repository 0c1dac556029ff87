"""The fixture corpora must actually have the properties tests lean on."""

from __future__ import annotations

import numpy as np
import pytest

from berrysmith.edges import dced
from berrysmith.masks import decode_maskset
from berrysmith.pipeline import load_manifest
from berrysmith.toydata import (
    KNOWN_GOOD_PARAMS,
    disc_mask,
    ellipse_mask,
    flat_patch,
    make_berry_scene,
    make_tuner_corpus,
    rect_mask,
    speckle_patch,
    write_generation_corpus,
)
from berrysmith.tuner import ANOMALOUS, NORMAL


def test_known_good_params_inside_default_grid():
    # every threshold is a multiple of 25 within [0, 250] and the kernel is odd
    p = KNOWN_GOOD_PARAMS
    for v in (p.wide.th_min, p.wide.th_max, p.narrow.th_min, p.narrow.th_max):
        assert v in tuple(float(x) for x in range(0, 251, 25))
    assert p.kernel_size in (3, 5, 7, 9)


def test_corpus_interleaves_labels(tuner_corpus):
    assert len(tuner_corpus) == 80
    labels = [label for _, label in tuner_corpus]
    assert labels[0::2] == [NORMAL] * 40
    assert labels[1::2] == [ANOMALOUS] * 40


def test_corpus_is_separable_by_construction(tuner_corpus):
    for patch, label in tuner_corpus:
        diff = dced(patch, KNOWN_GOOD_PARAMS).diff_count
        if label == NORMAL:
            assert diff == 0
        else:
            assert diff > 0


def test_corpus_is_deterministic():
    a = make_tuner_corpus(n_per_class=4, size=32, seed=9)
    b = make_tuner_corpus(n_per_class=4, size=32, seed=9)
    for (pa, la), (pb, lb) in zip(a, b):
        assert la == lb
        assert np.array_equal(pa.data, pb.data)


def test_patch_helpers():
    flat = flat_patch(16, 42.0)
    assert flat.data.shape == (16, 16)
    assert np.all(flat.data == 42.0)
    speck = speckle_patch(16, np.random.default_rng(0))
    assert speck.data.shape == (16, 16)
    assert speck.data.std() > 30.0


def test_mask_shape_helpers():
    disc = disc_mask(30, 30, 14.0, 14.0, 5.0, "d")
    yy, xx = np.ogrid[:30, :30]
    assert np.array_equal(disc.to_dense(), (xx - 14.0) ** 2 + (yy - 14.0) ** 2 <= 25.0)
    rect = rect_mask(30, 30, 3, 4, 5, 6, "r")
    assert rect.area == 30
    assert rect.bbox() == (4, 3, 10, 8)  # (r0, c0, r1, c1), exclusive ends
    ell = ellipse_mask(40, 40, 20.0, 20.0, 12.0, 4.0, 0.0, "e")
    assert ell.area > 0
    with pytest.raises(ValueError):
        disc_mask(10, 10, 50.0, 50.0, 1.0, "off")


def test_berry_scene_masks_are_exact_discs():
    rng = np.random.default_rng(13)
    img, masks = make_berry_scene(96, 3, textured=True, rng=rng, source_image="s.png")
    assert (img.width, img.height) == (96, 96)
    assert masks.generator == "fixture"
    assert masks.source_image == "s.png"
    assert 1 <= len(masks.masks) <= 9
    ids = [m.mask_id for m in masks.masks]
    assert len(set(ids)) == len(ids)
    for m in masks.masks:
        assert m.source_image == "s.png"
        assert m.area >= 3


def test_berry_scene_texture_flag_controls_edges(toy_model):
    from berrysmith.edges import masked_edge_stats
    from berrysmith.imgcore import to_grayscale

    rng = np.random.default_rng(14)
    smooth_img, smooth_masks = make_berry_scene(96, 2, False, rng)
    textured_img, textured_masks = make_berry_scene(96, 2, True, rng)
    for m in smooth_masks.masks:
        assert masked_edge_stats(to_grayscale(smooth_img), m, toy_model.params).diff_count == 0
    for m in textured_masks.masks:
        assert masked_edge_stats(to_grayscale(textured_img), m, toy_model.params).diff_count > 0


def test_write_generation_corpus_layout(gen_corpus):
    manifest_path, dataset_root, mask_root = gen_corpus
    manifest = load_manifest(manifest_path)
    anom = manifest.by_label(ANOMALOUS)
    norm = manifest.by_label(NORMAL)
    assert len(anom) == 10 and len(norm) == 20
    groups = {e.source_image_group for e in manifest.entries}
    assert len(groups) == 12  # 6 per class
    for entry in manifest.entries:
        assert (dataset_root / entry.path).is_file()
        mask_file = mask_root / "images" / (entry.path.split("/")[-1].replace(".png", ".masks.json"))
        assert mask_file.is_file()
        ms = decode_maskset(mask_file.read_bytes())
        assert ms.source_image == entry.path
        assert ms.generator == "fixture"
        assert len(ms.masks) >= 1
