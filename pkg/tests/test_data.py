"""Generator, rubric, splits, pairs, and dataset IO."""

import itertools
import os

import numpy as np
import pytest

from roadscore.data import (
    AUX_TASK_NAMES,
    GeneratorConfig,
    PanoramaRecord,
    SCORED_ATTRIBUTES,
    STAR_BANDS,
    attribute_specs,
    class_histogram,
    generate_dataset,
    generate_scene,
    jitter_heading,
    load_dataset,
    load_pairs,
    load_split,
    make_roads,
    make_splits,
    sample_pairs,
    safety_score,
    save_dataset,
    save_pairs,
    save_split,
    star_from_aux,
    star_from_score,
)
from roadscore.data.attributes import (
    UNSCORED_ATTRIBUTES,
    combinations_with_score,
    sample_scored_for_star,
    sample_scored_for_total,
)
from roadscore.data.scene import render_scene
from roadscore.geo import haversine_m, offset_latlon


def protective_aux(level="best"):
    """A full labeling with every scored attribute at its best or worst."""
    aux = {}
    for a in SCORED_ATTRIBUTES:
        aux[a.name] = a.num_classes if level == "best" else 1
    for a in UNSCORED_ATTRIBUTES:
        aux[a.name] = 1
    return aux


def all_scored_combos():
    names = [a.name for a in SCORED_ATTRIBUTES]
    ranges = [range(1, a.num_classes + 1) for a in SCORED_ATTRIBUTES]
    for combo in itertools.product(*ranges):
        yield dict(zip(names, combo))


class TestRubric:
    def test_fully_protective_scene_is_five_star(self):
        aux = protective_aux("best")
        assert safety_score(aux) == 16
        assert star_from_aux(aux) == 5

    def test_fully_hostile_scene_is_one_star(self):
        aux = protective_aux("worst")
        assert safety_score(aux) == 0
        assert star_from_aux(aux) == 1

    def test_band_edges(self):
        expected = {0: 1, 3: 1, 4: 2, 6: 2, 7: 3, 9: 3, 10: 4, 12: 4, 13: 5, 16: 5}
        for score, star in expected.items():
            assert star_from_score(score) == star
        with pytest.raises(ValueError):
            star_from_score(17)

    def test_combination_counts_match_exhaustive_enumeration(self):
        # Brute force over all 11664 scored labelings.
        totals = np.zeros(17, dtype=np.int64)
        for combo in all_scored_combos():
            totals[safety_score(combo)] += 1
        for t in range(17):
            assert combinations_with_score(t) == totals[t], f"total {t}"
        assert totals.sum() == 3 ** 6 * 2 ** 4

    def test_rubric_is_monotone_in_every_attribute(self):
        rng = np.random.default_rng(0)
        combos = list(all_scored_combos())
        for idx in rng.choice(len(combos), size=300, replace=False):
            combo = combos[idx]
            base = star_from_aux(combo)
            for a in SCORED_ATTRIBUTES:
                if combo[a.name] < a.num_classes:
                    bumped = dict(combo)
                    bumped[a.name] += 1
                    assert star_from_aux(bumped) >= base

    def test_out_of_range_label_rejected(self):
        aux = protective_aux()
        aux["median_type"] = 4
        with pytest.raises(ValueError):
            safety_score(aux)


class TestScoreSampling:
    def test_sampled_total_is_exact(self):
        rng = np.random.default_rng(1)
        for total in (0, 3, 8, 13, 16):
            for _ in range(20):
                assert safety_score(sample_scored_for_total(total, rng)) == total

    def test_star_band_sampling_stays_in_band(self):
        rng = np.random.default_rng(2)
        for star in range(1, 6):
            lo, hi = STAR_BANDS[star - 1]
            for _ in range(20):
                s = safety_score(sample_scored_for_star(star, rng))
                assert lo <= s <= hi

    def test_restricted_totals_respected(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            assert safety_score(sample_scored_for_star(2, rng, totals=(5,))) == 5
        with pytest.raises(ValueError, match="outside"):
            sample_scored_for_star(2, rng, totals=(9,))

    def test_sampler_covers_multiple_combinations(self):
        rng = np.random.default_rng(4)
        seen = {tuple(sorted(sample_scored_for_total(8, rng).items())) for _ in range(40)}
        assert len(seen) > 5


class TestTaskTable:
    def test_twenty_four_tasks_star_first(self):
        tasks = attribute_specs()
        assert len(tasks) == 24
        assert tasks[0].name == "star" and tasks[0].num_classes == 5
        assert len(AUX_TASK_NAMES) == 23
        assert len(set(t.name for t in tasks)) == 24


class TestSceneRender:
    AUX = protective_aux("best")

    def test_shape_dtype_range(self):
        img = render_scene(self.AUX, 64, 192, np.random.default_rng(0))
        assert img.shape == (64, 192, 3)
        assert img.dtype == np.float32
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_deterministic_given_rng_seed(self):
        a = render_scene(self.AUX, 64, 192, np.random.default_rng(9))
        b = render_scene(self.AUX, 64, 192, np.random.default_rng(9))
        assert np.array_equal(a, b)

    def test_driver_objects_touch_only_left_third(self):
        # The attention experiment depends on this localization.
        aux_clear = dict(self.AUX)
        aux_clear["roadside_obj_driver"] = 3
        aux_severe = dict(aux_clear)
        aux_severe["roadside_obj_driver"] = 1
        a = render_scene(aux_clear, 64, 192, np.random.default_rng(5))
        b = render_scene(aux_severe, 64, 192, np.random.default_rng(5))
        diff_cols = np.where(np.any(a != b, axis=(0, 2)))[0]
        assert diff_cols.size > 0
        assert diff_cols.max() < 192 // 3

    def test_passenger_objects_touch_only_right_third(self):
        aux_clear = dict(self.AUX)
        aux_clear["roadside_obj_passenger"] = 3
        aux_severe = dict(aux_clear)
        aux_severe["roadside_obj_passenger"] = 1
        a = render_scene(aux_clear, 64, 192, np.random.default_rng(5))
        b = render_scene(aux_severe, 64, 192, np.random.default_rng(5))
        diff_cols = np.where(np.any(a != b, axis=(0, 2)))[0]
        assert diff_cols.size > 0
        assert diff_cols.min() >= 2 * 192 // 3

    def test_every_attribute_changes_pixels(self):
        rng_seed = 11
        base = render_scene(self.AUX, 64, 192, np.random.default_rng(rng_seed))
        for name in AUX_TASK_NAMES:
            aux = dict(self.AUX)
            aux[name] = 1 if aux[name] != 1 else 2
            other = render_scene(aux, 64, 192, np.random.default_rng(rng_seed))
            assert not np.array_equal(base, other), f"{name} is invisible"


class TestGenerator:
    def test_determinism_and_seed_sensitivity(self):
        cfg = GeneratorConfig(num_records=5, height=32, width=96, seed=3)
        a, b = generate_dataset(cfg), generate_dataset(cfg)
        for ra, rb in zip(a, b):
            assert np.array_equal(ra.image, rb.image)
            assert ra.aux == rb.aux and ra.star == rb.star
            assert (ra.lat, ra.lon, ra.heading) == (rb.lat, rb.lon, rb.heading)
        c = generate_dataset(GeneratorConfig(num_records=5, height=32, width=96, seed=4))
        assert not np.array_equal(a[0].image, c[0].image)

    def test_rubric_consistency_exhaustive(self):
        for profile in ("separable", "correlated", "imbalanced"):
            cfg = GeneratorConfig(profile=profile, num_records=60, height=32, width=96, seed=1)
            for rec in generate_dataset(cfg):
                assert star_from_aux(rec.aux) == rec.star

    def test_separable_profile_is_roughly_balanced(self):
        cfg = GeneratorConfig(num_records=600, height=32, width=96, seed=2)
        stars = np.array([r.star for r in generate_dataset(cfg)])
        counts = np.bincount(stars, minlength=6)[1:]
        assert counts.min() >= 0.12 * 600
        assert counts.max() <= 0.28 * 600

    def test_imbalanced_profile_has_rare_one_star(self):
        cfg = GeneratorConfig(profile="imbalanced", num_records=1000,
                              height=32, width=96, seed=5)
        stars = np.array([r.star for r in generate_dataset(cfg)])
        frac = (stars == 1).mean()
        assert 0.025 <= frac <= 0.09
        assert set(np.unique(stars)) == {1, 2, 3, 4, 5}

    def test_explicit_scene_params(self):
        rec = generate_scene(7, protective_aux("best"), height=32, width=96)
        assert rec.star == 5
        rec2 = generate_scene(7, protective_aux("worst"), height=32, width=96)
        assert rec2.star == 1

    def test_bad_profile_rejected(self):
        with pytest.raises(ValueError, match="profile"):
            GeneratorConfig(profile="nope")


class TestHeadingJitter:
    def test_zero_delta_is_identity(self):
        rec = generate_scene(1, protective_aux(), height=32, width=96)
        assert jitter_heading(rec, delta=0.0) is rec

    def test_five_degrees_at_full_width_is_thirteen_columns(self):
        rec = generate_scene(1, protective_aux(), height=32, width=960)
        shifted = jitter_heading(rec, delta=5.0)
        assert np.array_equal(shifted.image, np.roll(rec.image, 13, axis=1))

    def test_jitter_roundtrip_and_labels(self):
        rec = generate_scene(2, protective_aux(), height=32, width=96)
        fwd = jitter_heading(rec, delta=4.0)
        back = jitter_heading(fwd, delta=-4.0)
        assert np.array_equal(back.image, rec.image)
        assert fwd.aux == rec.aux and fwd.star == rec.star
        assert fwd.heading == rec.heading

    def test_rng_draws_stay_small(self):
        rec = generate_scene(3, protective_aux(), height=32, width=96)
        rng = np.random.default_rng(0)
        for _ in range(20):
            out = jitter_heading(rec, rng)
            cols = np.where(np.any(out.image != rec.image, axis=(0, 2)))[0]
            # 5 degrees of 96 columns is at most 2 columns of roll
            assert np.array_equal(out.image, rec.image) or cols.size > 0


class TestPairs:
    def test_pair_constraints(self):
        cfg = GeneratorConfig(num_records=1, height=32, width=96, seed=9)
        roads = make_roads(6, cfg)
        pairs = sample_pairs(roads, 25, seed=9, height=32, width=96)
        assert len(pairs) == 25
        for p in pairs:
            assert 0.0 < p.separation_m <= 15.24
            assert not np.array_equal(p.image_a, p.image_b)
            assert p.image_a.shape == (32, 96, 3)

    def test_pair_determinism(self):
        cfg = GeneratorConfig(num_records=1, height=32, width=96, seed=9)
        roads = make_roads(3, cfg)
        a = sample_pairs(roads, 8, seed=1, height=32, width=96)
        b = sample_pairs(roads, 8, seed=1, height=32, width=96)
        for pa, pb in zip(a, b):
            assert np.array_equal(pa.image_a, pb.image_a)
            assert np.array_equal(pa.image_b, pb.image_b)
            assert pa.separation_m == pb.separation_m

    def test_bad_arguments(self):
        cfg = GeneratorConfig(num_records=1)
        roads = make_roads(2, cfg)
        with pytest.raises(ValueError):
            sample_pairs(roads, 0, seed=1)
        with pytest.raises(ValueError):
            sample_pairs([], 5, seed=1)


def fake_records(stars, spacing_m=2000.0):
    """Label-only records on a coarse grid (no images needed for splits)."""
    records = []
    side = int(np.ceil(np.sqrt(len(stars))))
    for i, star in enumerate(stars):
        row, col = divmod(i, side)
        lat, lon = offset_latlon(40.0, -88.0, row * spacing_m, col * spacing_m)
        records.append(PanoramaRecord(f"f{i:05d}", None, lat, lon, 0.0, star,
                                      {}))
    return records


class TestSplits:
    def test_stratified_fractions(self):
        records = fake_records([1 + i % 5 for i in range(1000)])
        manifest = make_splits(records, seed=0)
        stars = {r.id: r.star for r in records}
        for star in range(1, 6):
            n_total = sum(1 for r in records if r.star == star)
            n_test = sum(1 for rid in manifest.test_ids if stars[rid] == star)
            assert 0.09 <= n_test / n_total <= 0.11
        train_pool = len(manifest.train_ids) + len(manifest.val_ids)
        assert 0.015 <= len(manifest.val_ids) / train_pool <= 0.035

    def test_partition_is_exact(self):
        records = fake_records([1 + i % 5 for i in range(200)])
        manifest = make_splits(records, seed=1)
        all_ids = manifest.train_ids + manifest.val_ids + manifest.test_ids
        assert sorted(all_ids) == sorted(r.id for r in records)
        assert len(set(all_ids)) == len(all_ids)

    def test_determinism_and_seed_variation(self):
        records = fake_records([1 + i % 5 for i in range(200)])
        base = make_splits(records, seed=5)
        again = make_splits(records, seed=5)
        assert base.test_ids == again.test_ids and base.val_ids == again.val_ids
        others = [make_splits(records, seed=s).test_ids for s in range(6, 16)]
        assert any(t != base.test_ids for t in others)

    def test_spatial_separation_enforced(self):
        # Clusters of three records 100 m apart, clusters 10 km apart: any
        # split that separates a cluster would violate the 300 m rule.
        records = []
        for cluster in range(40):
            lat0, lon0 = offset_latlon(40.0, -88.0, (cluster // 7) * 10000.0,
                                       (cluster % 7) * 10000.0)
            for j in range(3):
                lat, lon = offset_latlon(lat0, lon0, j * 100.0, 0.0)
                records.append(PanoramaRecord(f"c{cluster:02d}_{j}", None, lat, lon,
                                              0.0, 1 + cluster % 5, {}))
        for seed in range(5):
            manifest = make_splits(records, seed=seed)
            pos = {r.id: (r.lat, r.lon) for r in records}
            train_like = manifest.train_ids + manifest.val_ids
            for tid in manifest.test_ids:
                for rid in train_like:
                    d = haversine_m(*pos[tid], *pos[rid])
                    assert d >= 300.0, f"{tid} is {d:.0f} m from {rid}"

    def test_small_class_rejected(self):
        records = fake_records([1] * 9 + [2] * 50)
        with pytest.raises(ValueError, match="at least 10"):
            make_splits(records, seed=0)

    def test_class_histogram(self):
        records = fake_records([1] * 20 + [2] * 30 + [3] * 40 + [4] * 50 + [5] * 60)
        manifest = make_splits(records, seed=2)
        counts = class_histogram(manifest, records)
        assert counts.sum() == len(manifest.train_ids)
        stars = {r.id: r.star for r in records}
        for star in range(1, 6):
            assert counts[star - 1] == sum(1 for rid in manifest.train_ids
                                           if stars[rid] == star)


class TestDatasetIO:
    def test_dataset_round_trip(self, tmp_path):
        cfg = GeneratorConfig(num_records=6, height=32, width=96, seed=4)
        records = generate_dataset(cfg)
        save_dataset(records, str(tmp_path))
        loaded = load_dataset(str(tmp_path))
        assert len(loaded) == len(records)
        for orig, back in zip(records, loaded):
            assert back.id == orig.id
            assert np.array_equal(back.image, orig.image)
            assert back.image.dtype == np.float32
            assert (back.lat, back.lon, back.heading) == (orig.lat, orig.lon, orig.heading)
            assert back.star == orig.star and back.aux == orig.aux

    def test_metadata_only_load(self, tmp_path):
        records = generate_dataset(GeneratorConfig(num_records=3, height=32,
                                                   width=96, seed=4))
        save_dataset(records, str(tmp_path))
        loaded = load_dataset(str(tmp_path), load_images=False)
        assert all(r.image is None for r in loaded)
        assert [r.id for r in loaded] == [r.id for r in records]

    def test_pairs_round_trip(self, tmp_path):
        cfg = GeneratorConfig(num_records=1, height=32, width=96, seed=9)
        pairs = sample_pairs(make_roads(2, cfg), 4, seed=2, height=32, width=96)
        save_pairs(pairs, str(tmp_path))
        loaded = load_pairs(str(tmp_path))
        for orig, back in zip(pairs, loaded):
            assert back.id == orig.id and back.road_id == orig.road_id
            assert back.separation_m == orig.separation_m
            assert np.array_equal(back.image_a, orig.image_a)
            assert np.array_equal(back.image_b, orig.image_b)

    def test_split_round_trip(self, tmp_path):
        records = fake_records([1 + i % 5 for i in range(100)])
        manifest = make_splits(records, seed=3)
        path = str(tmp_path / "split.json")
        save_split(manifest, path)
        back = load_split(path)
        assert back.train_ids == manifest.train_ids
        assert back.val_ids == manifest.val_ids
        assert back.test_ids == manifest.test_ids
        assert back.seed == manifest.seed

    def test_missing_metadata_rejected(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(str(tmp_path / "empty"))


class TestGeo:
    def test_one_degree_of_latitude(self):
        # 2 pi R / 360 with R = 6371 km
        assert haversine_m(0, 0, 1, 0) == pytest.approx(111194.93, rel=1e-5)

    def test_symmetry_and_zero(self):
        assert haversine_m(40, -88, 40, -88) == 0.0
        assert haversine_m(40, -88, 41, -87) == pytest.approx(
            haversine_m(41, -87, 40, -88), rel=1e-12)

    def test_offset_round_trip(self):
        lat, lon = offset_latlon(40.0, -88.0, 300.0, 0.0)
        assert haversine_m(40.0, -88.0, lat, lon) == pytest.approx(300.0, rel=1e-3)
