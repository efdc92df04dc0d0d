import threading
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dsgm_masker.dsgm import DsgmParams, init_models, update_frame
from dsgm_masker.engine import (
    SERIAL,
    Engine,
    PartitionSpec,
    Rect,
    TimingRecord,
    row_bands,
    run_partitioned,
    tiles,
    time_section,
)
from dsgm_masker.synthetic import random_sequence


def coverage(rects, width, height):
    hits = np.zeros((height, width), dtype=int)
    for r in rects:
        hits[r.slices] += 1
    return hits


def test_row_bands_even_split():
    assert row_bands(240, 4) == [(0, 60), (60, 120), (120, 180), (180, 240)]


def test_row_bands_larger_first():
    assert [b - a for a, b in row_bands(10, 4)] == [3, 3, 2, 2]


def test_row_bands_more_tasks_than_rows():
    assert row_bands(3, 8) == [(0, 1), (1, 2), (2, 3)]


@pytest.mark.parametrize("args", [(0, 2), (5, 0)])
def test_row_bands_rejects_empty(args):
    with pytest.raises(ValueError):
        row_bands(*args)


def test_tiles_wide_frame():
    assert tiles(320, 240, 240) == [Rect(0, 240, 0, 240), Rect(0, 240, 240, 320)]


def test_tiles_truncated_corner():
    t = tiles(5, 5, 2)
    assert len(t) == 9
    assert t[-1] == Rect(4, 5, 4, 5) and t[-1].area == 1


def test_single_tile_when_side_covers_frame():
    assert tiles(7, 3, 7) == [Rect(0, 3, 0, 7)]


@given(st.integers(1, 80), st.integers(1, 80), st.integers(1, 600))
def test_row_bands_cover_exactly_once(width, height, tasks):
    rects = PartitionSpec("row_bands", tasks=tasks).rects(width, height)
    assert len(rects) == min(tasks, height)
    assert (coverage(rects, width, height) == 1).all()
    sizes = [r.y1 - r.y0 for r in rects]
    assert max(sizes) - min(sizes) <= 1 and sizes == sorted(sizes, reverse=True)


@given(st.integers(1, 80), st.integers(1, 80), st.integers(1, 100))
def test_tiles_cover_exactly_once(width, height, side):
    rects = tiles(width, height, side)
    assert len(rects) == -(-width // side) * -(-height // side)
    assert (coverage(rects, width, height) == 1).all()


def test_single_band_matches_serial_loop():
    seen = []
    run_partitioned(seen.append, PartitionSpec("row_bands", tasks=1), (6, 9), workers=4)
    assert seen == [Rect(0, 6, 0, 9)]


def test_serial_runs_in_calling_thread():
    threads = []
    SERIAL.run(lambda r: threads.append(threading.get_ident()), (4, 4))
    assert threads == [threading.get_ident()]


@pytest.mark.parametrize("spec", [PartitionSpec("row_bands", tasks=37), PartitionSpec("tiles", tile_side=5)])
def test_every_unit_runs_exactly_once(spec):
    shape = (53, 41)
    counts = np.zeros(shape, dtype=int)

    def work(rect):
        counts[rect.slices] += 1

    run_partitioned(work, spec, shape, workers=8)
    assert (counts == 1).all()


def test_first_failure_propagates_after_all_units_settle():
    done = []

    def work(rect):
        if rect.y0 in (2, 5):
            raise RuntimeError(f"unit {rect.y0}")
        time.sleep(0.002)
        done.append(rect.y0)

    with pytest.raises(RuntimeError, match="unit 2"):
        run_partitioned(work, PartitionSpec("row_bands", tasks=8), (8, 3), workers=4)
    assert sorted(done) == [0, 1, 3, 4, 6, 7]


def test_dsgm_masks_identical_across_partitions():
    frames = random_sequence(6, 40, 48, seed=3)
    params = DsgmParams()
    engines = [SERIAL, Engine(PartitionSpec("row_bands", tasks=4), 3), Engine(PartitionSpec("tiles", tile_side=16), 5)]
    results = []
    for eng in engines:
        m = init_models(frames[0], params)
        results.append(([update_frame(f, m, params, eng) for f in frames[1:]], m))
    ref_masks, ref_models = results[0]
    for masks, models in results[1:]:
        assert all(np.array_equal(a, b) for a, b in zip(ref_masks, masks))
        assert models.identical_to(ref_models)


def test_engine_labels():
    assert SERIAL.label == "serial"
    assert Engine(PartitionSpec("row_bands", tasks=16)).label == "16"
    assert Engine(PartitionSpec("tiles", tile_side=32)).label == "tile32"


def test_partition_spec_validation():
    with pytest.raises(ValueError):
        PartitionSpec("columns")
    with pytest.raises(ValueError):
        PartitionSpec(tasks=0)


def test_time_section_empty_work():
    rec = TimingRecord()
    time_section("blur", rec, lambda: None)
    assert 0 <= rec.t_blur < 1e-3
    assert rec.t_total == rec.t_blur


def test_time_section_is_additive():
    rec = TimingRecord()
    work = lambda: sum(range(20000))  # noqa: E731
    start = time.perf_counter()
    time_section("dsgm", rec, work)
    first = rec.t_dsgm
    time_section("dsgm", rec, work)
    outer = time.perf_counter() - start
    second = rec.t_dsgm - first
    assert first > 0 and second > 0
    assert rec.t_dsgm <= outer
    assert rec.t_total == pytest.approx(first + second, abs=1e-9)


def test_time_section_returns_work_result():
    assert time_section("serl", TimingRecord(), lambda: 41 + 1) == 42


def test_sleep_is_timed_accurately():
    rec = TimingRecord()
    time_section("mtnc", rec, lambda: time.sleep(0.1))
    assert 0.1 <= rec.t_mtnc <= 0.15


def test_unknown_section_rejected():
    with pytest.raises(ValueError):
        TimingRecord().add("io", 1.0)
