import numpy as np
import pytest

from matsim.errors import BenchmarkIndexError, EmptyMaskError
from matsim.evaluation import (
    AugmentationConfig,
    BenchmarkEntry,
    BenchmarkIndex,
    apply_attention,
    augment,
    baseline_descriptor,
    load_benchmark_csv,
    top1_all,
    top1_subclass,
)
from matsim.similarity import Descriptor


def checker_image(h=24, w=24):
    rng = np.random.default_rng(0)
    return rng.uniform(0, 1, (h, w, 3))


def center_mask(h=24, w=24, r=6):
    m = np.zeros((h, w), dtype=np.uint8)
    m[h // 2 - r:h // 2 + r, w // 2 - r:w // 2 + r] = 255
    return m


class TestApplyAttention:
    def test_none_is_identity(self):
        img, mask = checker_image(), center_mask()
        out, om = apply_attention(img, mask, "none")
        np.testing.assert_array_equal(out, img)
        np.testing.assert_array_equal(om > 0, mask > 0)

    def test_full_frame_mask_crop_keeps_geometry(self):
        img = checker_image()
        full = np.full(img.shape[:2], 255, dtype=np.uint8)
        out, _ = apply_attention(img, full, "crop")
        assert out.shape == img.shape
        np.testing.assert_array_equal(out, img)

    def test_mask_mode_blacks_outside(self):
        img, mask = checker_image(), center_mask()
        out, _ = apply_attention(img, mask, "mask")
        outside = out[mask == 0]
        assert np.all(outside == 0.0)
        np.testing.assert_array_equal(out[mask > 0], img[mask > 0])

    def test_crop_tight_bbox(self):
        img, mask = checker_image(), center_mask(r=5)
        out, om = apply_attention(img, mask, "crop")
        assert out.shape == (10, 10, 3)
        assert (om > 0).all()

    def test_crop_independent_of_outside_pixels(self):
        img, mask = checker_image(), center_mask(r=5)
        noisy = img.copy()
        noisy[mask == 0] = np.random.default_rng(1).uniform(0, 1, (int((mask == 0).sum()), 3))
        a, _ = apply_attention(img, mask, "crop")
        b, _ = apply_attention(noisy, mask, "crop")
        np.testing.assert_array_equal(a, b)

    def test_crop_and_mask_combines(self):
        img, mask = checker_image(), center_mask(r=5)
        out, om = apply_attention(img, mask, "crop_mask")
        assert out.shape == (10, 10, 3)

    def test_resize_to_network_input(self):
        img, mask = checker_image(), center_mask(r=5)
        out, om = apply_attention(img, mask, "crop", out_size=32)
        assert out.shape == (32, 32, 3) and om.shape == (32, 32)

    def test_empty_mask_rejected(self):
        with pytest.raises(EmptyMaskError):
            apply_attention(checker_image(), np.zeros((24, 24), dtype=np.uint8), "crop")

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            apply_attention(checker_image(), center_mask(), "zoom")


class TestAugment:
    def test_zero_probability_identity(self):
        img = checker_image()
        cfg = AugmentationConfig(blur_probability=0, brightness_probability=0,
                                 decolor_probability=0, noise_probability=0)
        np.testing.assert_array_equal(augment(img, cfg, seed=3), img)

    def test_deterministic(self):
        img = checker_image()
        cfg = AugmentationConfig(blur_probability=1, brightness_probability=1,
                                 decolor_probability=1, noise_probability=1)
        np.testing.assert_array_equal(augment(img, cfg, seed=9), augment(img, cfg, seed=9))

    def test_output_clamped(self):
        img = checker_image()
        cfg = AugmentationConfig(brightness_probability=1.0, brightness_factor=(1.5, 1.5))
        out = augment(img, cfg, seed=4)
        assert out.max() <= 1.0 and out.min() >= 0.0

    def test_fire_frequencies(self):
        # each augmentation must fire ~10% of seeds independently
        img = np.full((4, 4, 3), 0.5)
        cfg = AugmentationConfig(noise_probability=0.1, brightness_probability=0.1,
                                 decolor_probability=0.0, blur_probability=0.0,
                                 brightness_factor=(1.3, 1.3), noise_std=(0.05, 0.05))
        n = 10_000
        brightness_fired = 0
        noise_fired = 0
        for seed in range(n):
            out = augment(img, cfg, seed=seed)
            mean = out.mean()
            if mean > 0.55 and np.allclose(out, out.mean(), atol=1e-6):
                brightness_fired += 1
            elif not np.allclose(out, mean, atol=1e-6):
                # noise breaks uniformity; brightness alone keeps it flat
                if mean > 0.55:
                    brightness_fired += 1
                noise_fired += 1
        assert abs(brightness_fired / n - 0.1) < 0.01
        assert abs(noise_fired / n - 0.1) < 0.01

    def test_grayscale_full_decolor(self):
        img = checker_image()
        cfg = AugmentationConfig(decolor_probability=1.0, desaturation=(1.0, 1.0),
                                 blur_probability=0, brightness_probability=0,
                                 noise_probability=0)
        out = augment(img, cfg, seed=1)
        assert np.allclose(out[..., 0], out[..., 1], atol=1e-9)
        assert np.allclose(out[..., 1], out[..., 2], atol=1e-9)


class TestBaselineDescriptor:
    def test_deterministic_unit_norm(self):
        img, mask = checker_image(), center_mask()
        d1 = baseline_descriptor(img, mask)
        d2 = baseline_descriptor(img, mask)
        np.testing.assert_array_equal(d1.values, d2.values)
        assert abs(np.linalg.norm(d1.values) - 1.0) < 1e-6

    def test_red_vs_blue_dissimilar(self):
        # oracle: the joint color histograms occupy disjoint bins, so the
        # dominant blocks contribute nothing to the dot product
        red = np.zeros((16, 16, 3))
        red[..., 0] = 1.0
        blue = np.zeros((16, 16, 3))
        blue[..., 2] = 1.0
        mask = np.full((16, 16), 255, dtype=np.uint8)
        dr = baseline_descriptor(red, mask)
        db = baseline_descriptor(blue, mask)
        joint_r = dr.values[:216]
        joint_b = db.values[:216]
        assert float(joint_r @ joint_b) == 0.0
        assert float(dr.values @ db.values) < 0.5

    def test_masked_region_only(self):
        img, mask = checker_image(), center_mask(r=4)
        outside_changed = img.copy()
        outside_changed[mask == 0] = 0.123
        d1 = baseline_descriptor(img, mask)
        d2 = baseline_descriptor(outside_changed, mask)
        # the color blocks read masked pixels only (up to the overall norm);
        # gradient/variance windows may peek one pixel over the boundary
        c1, c2 = d1.values[:240], d2.values[:240]
        np.testing.assert_allclose(c1 / np.linalg.norm(c1), c2 / np.linalg.norm(c2),
                                   atol=1e-12)
        assert float(d1.values @ d2.values) > 0.95

    def test_empty_mask(self):
        with pytest.raises(EmptyMaskError):
            baseline_descriptor(checker_image(), np.zeros((24, 24)))


def one_hot_descriptor(idx, ref):
    v = np.zeros(512)
    v[idx] = 1.0
    return Descriptor(values=v, image_ref=ref)


def synthetic_index(superclasses):
    """superclasses: list of lists of subclass sizes."""
    entries = []
    for si, sizes in enumerate(superclasses):
        for ci, size in enumerate(sizes):
            for k in range(size):
                entries.append(BenchmarkEntry(
                    image=f"s{si}c{ci}k{k}.png", mask=f"m.png",
                    superclass=f"sup{si}", subclass=f"sub{ci}"))
    return BenchmarkIndex(entries=tuple(entries))


def random_expectation_subclass(superclasses):
    # counting oracle: nearest of a uniformly random gallery is same-class
    # with probability (m-1)/(M-1)
    accs = []
    for sizes in superclasses:
        M = sum(sizes)
        for m in sizes:
            accs.append((m - 1) / (M - 1))
    return float(np.mean(accs))


def random_expectation_all(superclasses):
    n = sum(sum(s) for s in superclasses)
    accs = []
    for sizes in superclasses:
        for m in sizes:
            accs.append((m - 1) / (n - 1))
    return float(np.mean(accs))


class TestTop1Metrics:
    def test_one_hot_perfect(self):
        sup = [[2, 3], [2, 2]]
        index = synthetic_index(sup)
        descriptors = {}
        class_ids = {}
        for e in index.entries:
            cid = class_ids.setdefault(e.class_key, len(class_ids))
            descriptors[e.image] = one_hot_descriptor(cid, e.image)
        assert top1_subclass(index, descriptors).mean == 1.0
        assert top1_all(index, descriptors).mean == 1.0

    def test_random_monte_carlo_matches_counting_oracle(self):
        sup = [[3, 3, 3]] * 4
        index = synthetic_index(sup)
        rng = np.random.default_rng(7)
        subs, alls = [], []
        for _ in range(200):
            descriptors = {}
            for e in index.entries:
                v = rng.normal(size=512)
                descriptors[e.image] = Descriptor(values=v / np.linalg.norm(v),
                                                  image_ref=e.image)
            subs.append(top1_subclass(index, descriptors).mean)
            alls.append(top1_all(index, descriptors).mean)
        expected_sub = random_expectation_subclass(sup)   # (m-1)/(k*m-1) = 0.25
        assert expected_sub == pytest.approx((3 - 1) / (3 * 3 - 1))
        assert abs(np.mean(subs) - expected_sub) < 0.03
        assert abs(np.mean(alls) - random_expectation_all(sup)) < 0.03

    def test_tie_break_lowest_index(self):
        index = synthetic_index([[2, 2]])
        v = np.zeros(512)
        v[0] = 1.0
        descriptors = {e.image: Descriptor(values=v.copy(), image_ref=e.image)
                       for e in index.entries}
        res = top1_subclass(index, descriptors)
        # the first gallery entry wins every tie: subclass 0 queries hit their
        # twin, subclass 1 queries hit subclass 0
        assert res.per_class["sup0/sub0"] == 1.0
        assert res.per_class["sup0/sub1"] == 0.0
        assert top1_subclass(index, descriptors).per_class == res.per_class

    def test_single_superclass_all_equals_subclass(self):
        sup = [[2, 3, 2]]
        index = synthetic_index(sup)
        rng = np.random.default_rng(8)
        descriptors = {e.image: Descriptor(values=(lambda v: v / np.linalg.norm(v))(
            rng.normal(size=512)), image_ref=e.image) for e in index.entries}
        a = top1_subclass(index, descriptors)
        b = top1_all(index, descriptors)
        assert a.per_class == b.per_class and a.mean == b.mean

    def test_index_order_permutation_invariant(self):
        sup = [[2, 2], [3, 2]]
        index = synthetic_index(sup)
        rng = np.random.default_rng(9)
        descriptors = {e.image: Descriptor(values=(lambda v: v / np.linalg.norm(v))(
            rng.normal(size=512)), image_ref=e.image) for e in index.entries}
        base = top1_subclass(index, descriptors)
        perm = list(index.entries)
        rng.shuffle(perm)
        permuted = BenchmarkIndex(entries=tuple(perm))
        res = top1_subclass(permuted, descriptors)
        assert res.mean == pytest.approx(base.mean)
        assert res.per_class == base.per_class

    def test_accuracies_in_unit_interval(self):
        sup = [[2, 4], [3, 3]]
        index = synthetic_index(sup)
        rng = np.random.default_rng(10)
        descriptors = {e.image: Descriptor(values=(lambda v: v / np.linalg.norm(v))(
            rng.normal(size=512)), image_ref=e.image) for e in index.entries}
        for res in (top1_subclass(index, descriptors), top1_all(index, descriptors)):
            assert 0.0 <= res.mean <= 1.0
            assert all(0.0 <= v <= 1.0 for v in res.per_class.values())


class TestBenchmarkIndex:
    def test_small_subclass_rejected(self):
        with pytest.raises(BenchmarkIndexError):
            synthetic_index([[1, 3]])

    def test_csv_roundtrip(self, tmp_path):
        csv_path = tmp_path / "bench.csv"
        csv_path.write_text(
            "image,mask,superclass,subclass\n"
            "a0.png,a0_m.png,eggs,raw\n"
            "a1.png,a1_m.png,eggs,raw\n"
            "b0.png,b0_m.png,eggs,cooked\n"
            "b1.png,b1_m.png,eggs,cooked\n")
        index = load_benchmark_csv(csv_path)
        assert len(index.entries) == 4
        assert index.class_keys == ["eggs/raw", "eggs/cooked"]

    def test_csv_missing_columns(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("image,superclass\nx.png,eggs\n")
        with pytest.raises(BenchmarkIndexError):
            load_benchmark_csv(p)
