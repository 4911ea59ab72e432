"""CSV parsing, gap detection, serialization round-trips, and alignment."""

import io as std_io
import itertools

import numpy as np
import pytest

from pmuevents.errors import DomainError, FormatError
from pmuevents.io import CSV_HEADER, AlignedPair, align, parse_stream, serialize_stream
from pmuevents.phasors import PhasorSample, PhasorStream


def csv_bytes(rows, header=CSV_HEADER):
    return ("\n".join([header] + rows) + "\n").encode()


def make_stream(timestamps, feeder="f"):
    return PhasorStream(
        feeder,
        tuple(PhasorSample(int(t), 7200.0, 0.0, 100.0, 0.0) for t in timestamps),
    )


class TestParse:
    def test_three_clean_rows(self):
        data = csv_bytes(["0,7200.0,0.0,100.0,0.0", "8333,7200.0,0.0,100.0,0.0", "16667,7200.0,0.0,100.0,0.0"])
        stream, report = parse_stream(data, "solar")
        assert len(stream) == 3
        assert report.gaps == ()
        assert report.dropped_rows == ()

    def test_gap_of_ten_missing_samples(self):
        # oracle: round((100000-8333)/8333.33) - 1 = 10
        data = csv_bytes(["0,1,0,1,0", "8333,1,0,1,0", "100000,1,0,1,0"])
        stream, report = parse_stream(data, "solar")
        assert len(stream) == 3
        assert len(report.gaps) == 1
        start, end, missing = report.gaps[0]
        assert (start, end) == (8333, 100000)
        assert missing == 10

    def test_bad_header(self):
        with pytest.raises(FormatError):
            parse_stream(b"time,v\n1,2\n", "solar")

    def test_empty_source(self):
        with pytest.raises(FormatError):
            parse_stream(b"", "solar")
        with pytest.raises(FormatError):
            parse_stream(b"\n\n", "solar")

    def test_non_numeric_row_dropped_with_line_number(self):
        data = csv_bytes(["0,1,0,1,0", "8333,oops,0,1,0", "16667,1,0,1,0"])
        stream, report = parse_stream(data, "solar")
        assert len(stream) == 2
        assert report.n_dropped == 1
        assert report.dropped_rows[0][0] == 3

    def test_non_monotone_rows_dropped(self):
        data = csv_bytes(["0,1,0,1,0", "8333,1,0,1,0", "8333,1,0,1,0", "4000,1,0,1,0", "16667,1,0,1,0"])
        stream, report = parse_stream(data, "solar")
        assert [s.timestamp for s in stream] == [0, 8333, 16667]
        assert report.n_dropped == 2
        reasons = {r for _, r in report.dropped_rows}
        assert reasons == {"non-monotone timestamp"}

    def test_negative_magnitude_dropped(self):
        data = csv_bytes(["0,1,0,1,0", "8333,-5.0,0,1,0"])
        stream, report = parse_stream(data, "solar")
        assert len(stream) == 1
        assert report.n_dropped == 1

    def test_accepts_file_object_and_path(self, tmp_path):
        data = csv_bytes(["0,1,0,1,0"])
        stream, _ = parse_stream(std_io.BytesIO(data), "solar")
        assert len(stream) == 1
        p = tmp_path / "s.csv"
        p.write_bytes(data)
        stream, _ = parse_stream(p, "solar")
        assert len(stream) == 1

    def test_gap_intervals_disjoint_and_ordered(self):
        rows = ["0,1,0,1,0", "8333,1,0,1,0", "50000,1,0,1,0", "58333,1,0,1,0", "120000,1,0,1,0"]
        _, report = parse_stream(csv_bytes(rows), "solar")
        assert len(report.gaps) == 2
        flat = [t for g in report.gaps for t in g[:2]]
        assert flat == sorted(flat)


class TestRoundTrip:
    def test_bit_exact_round_trip(self):
        rng = np.random.default_rng(29)
        samples = []
        ts = 0
        for _ in range(200):
            ts += int(rng.integers(8000, 9000))
            samples.append(
                PhasorSample(
                    ts,
                    float(rng.uniform(0, 1e4)),
                    float(rng.uniform(-180, 180)),
                    float(rng.uniform(0, 500)),
                    float(rng.uniform(-180, 180)),
                )
            )
        stream = PhasorStream("solar", tuple(samples))
        data = serialize_stream(stream)
        parsed, report = parse_stream(data, "solar")
        assert report.n_dropped == 0
        assert len(parsed) == len(stream)
        for a, b in zip(stream, parsed):
            assert a == b  # bit-exact dataclass equality
        # serialize again: identical bytes
        assert serialize_stream(parsed) == data

    def test_serialize_to_path(self, tmp_path):
        stream = make_stream([0, 8333])
        p = tmp_path / "out.csv"
        serialize_stream(stream, p)
        parsed, _ = parse_stream(p, "solar")
        assert len(parsed) == 2


def brute_force_pairs(ta, tb, tolerance):
    """Oracle: exhaustively choose the matching that maximizes pair count,
    then minimizes total skew, over all one-to-one candidate matchings."""
    cands = [
        (i, j, abs(ta[i] - tb[j]))
        for i in range(len(ta))
        for j in range(len(tb))
        if abs(ta[i] - tb[j]) <= tolerance
    ]
    best = (0, 0.0, [])
    n = len(cands)
    for r in range(len(cands), -1, -1):
        for combo in itertools.combinations(cands, r):
            ais = [c[0] for c in combo]
            bjs = [c[1] for c in combo]
            if len(set(ais)) != len(ais) or len(set(bjs)) != len(bjs):
                continue
            skew = sum(c[2] for c in combo)
            if (len(combo), -skew) > (best[0], -best[1]):
                best = (len(combo), skew, list(combo))
        if best[0] == r:
            break
    return best


class TestAlign:
    def test_identical_timestamps(self):
        a = make_stream(range(0, 80000, 8333))
        b = make_stream(range(0, 80000, 8333), feeder="aux")
        pairs = align(a, b, 4166)
        assert len(pairs) == len(a)
        assert all(p.skew_us == 0 for p in pairs)

    def test_shift_within_tolerance(self):
        ts = list(range(0, 80000, 8333))
        a = make_stream(ts)
        b = make_stream([t + 2000 for t in ts], feeder="aux")
        pairs = align(a, b, 4166)
        assert len(pairs) == len(ts)
        assert all(p.skew_us == 2000 for p in pairs)

    def test_shift_beyond_tolerance_matches_adjacent_frame(self):
        ts = [k * 8333 for k in range(10)]
        a = make_stream(ts)
        b = make_stream([t + 6000 for t in ts], feeder="aux")
        pairs = align(a, b, 4166)
        # b_k sits 2333 us before a_{k+1}; the direct frame is 6000 us away
        assert len(pairs) == 9
        assert all(p.skew_us == 2333 for p in pairs)
        # oracle agreement on the matched timestamp pairs
        count, skew, combo = brute_force_pairs(ts, [t + 6000 for t in ts], 4166)
        assert count == len(pairs)
        assert skew == sum(p.skew_us for p in pairs)

    def test_disjoint_ranges_empty(self):
        a = make_stream([0, 8333])
        b = make_stream([10_000_000, 10_008_333], feeder="aux")
        assert align(a, b, 4166) == ()

    def test_empty_stream_rejected(self):
        a = make_stream([0])
        with pytest.raises(DomainError):
            align(a, PhasorStream("aux", ()), 4166)

    def test_symmetry_random(self):
        rng = np.random.default_rng(31)
        for _ in range(30):
            ta = np.unique(rng.integers(0, 100000, size=rng.integers(2, 12))).tolist()
            tb = np.unique(rng.integers(0, 100000, size=rng.integers(2, 12))).tolist()
            if not ta or not tb:
                continue
            fwd = align(make_stream(ta), make_stream(tb, feeder="x"), 4166)
            rev = align(make_stream(tb, feeder="x"), make_stream(ta), 4166)
            fwd_pairs = {(p.solar.timestamp, p.auxiliary.timestamp) for p in fwd}
            rev_pairs = {(p.auxiliary.timestamp, p.solar.timestamp) for p in rev}
            assert fwd_pairs == rev_pairs

    def test_tolerance_never_exceeded(self):
        rng = np.random.default_rng(37)
        for _ in range(20):
            ta = np.unique(rng.integers(0, 60000, size=8)).tolist()
            tb = np.unique(rng.integers(0, 60000, size=8)).tolist()
            tol = int(rng.integers(500, 5000))
            for p in align(make_stream(ta), make_stream(tb, feeder="x"), tol):
                assert p.skew_us <= tol

    def test_matches_brute_force_on_frame_spaced_data(self):
        # realistic data: frame spacing well above tolerance, random jitter
        rng = np.random.default_rng(41)
        for _ in range(25):
            n = int(rng.integers(3, 7))
            base = np.arange(n) * 8333
            ta = (base + rng.integers(-300, 300, n)).tolist()
            tb = (base + int(rng.integers(-6000, 6000)) + rng.integers(-300, 300, n)).tolist()
            ta, tb = sorted(set(ta)), sorted(set(tb))
            pairs = align(make_stream(ta), make_stream(tb, feeder="x"), 4166)
            count, skew, _ = brute_force_pairs(ta, tb, 4166)
            assert len(pairs) == count
            assert sum(p.skew_us for p in pairs) == skew

    def test_greedy_matching_is_maximal(self):
        # no unmatched a/b pair within tolerance may remain after matching
        rng = np.random.default_rng(43)
        for _ in range(20):
            ta = sorted(rng.choice(np.arange(0, 50000, 700), size=6, replace=False).tolist())
            tb = sorted(rng.choice(np.arange(0, 50000, 700), size=6, replace=False).tolist())
            pairs = align(make_stream(ta), make_stream(tb, feeder="x"), 4166)
            used_a = {p.solar.timestamp for p in pairs}
            used_b = {p.auxiliary.timestamp for p in pairs}
            free_a = [t for t in ta if t not in used_a]
            free_b = [t for t in tb if t not in used_b]
            for x in free_a:
                for y in free_b:
                    assert abs(x - y) > 4166
