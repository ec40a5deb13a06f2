import pytest

from ldabs.latency import (
    STAGES,
    LatencyError,
    LatencyProfile,
    e2e_comparison,
    format_report,
    processing_seconds,
    resolution_class,
    total_latency,
)


@pytest.mark.parametrize("res,total", [("360p", 14.9), ("720p", 22.6), ("1080p", 29.4)])
def test_table_totals(res, total):
    assert total_latency(LatencyProfile(), res) == total


def test_zero_profile():
    assert total_latency(LatencyProfile.zeros(), "720p") == 0.0


def test_unknown_resolution():
    with pytest.raises(LatencyError):
        total_latency(LatencyProfile(), "4k")


def test_missing_stage():
    with pytest.raises(LatencyError):
        LatencyProfile({"360p": {s: 1.0 for s in STAGES[:-1]}})


@pytest.mark.parametrize("h,cls", [(240, "360p"), (360, "360p"), (480, "720p"), (720, "720p"), (1080, "1080p")])
def test_resolution_class(h, cls):
    assert resolution_class(h) == cls


def test_processing_seconds():
    assert processing_seconds(LatencyProfile(), 1080) == pytest.approx(0.0294)


def test_e2e_default_band():
    rows = e2e_comparison(LatencyProfile())
    ours = rows[-1]
    assert ours.method == "LD-ABS"
    assert 2000 <= ours.low_ms <= ours.high_ms <= 3000
    assert [r.method for r in rows[:-1]] == ["Traditional Broadcasting", "Pixel-Space DDPM"]


def test_e2e_zero_processing_equals_network():
    rows = e2e_comparison(LatencyProfile.zeros(), (100.0, 200.0), chunk_count=5)
    assert (rows[-1].low_ms, rows[-1].high_ms) == (100.0, 200.0)


def test_e2e_rejects_inverted_range():
    with pytest.raises(LatencyError):
        e2e_comparison(LatencyProfile(), (3.0, 1.0))


def test_report_lists_totals():
    text = format_report(LatencyProfile(), e2e_comparison(LatencyProfile()))
    assert "total,14.9,22.6,29.4" in text
    assert "LD-ABS," in text
