import numpy as np
import pytest

from onebit_doa import arrays
from onebit_doa import quantization as q


def make_snapshots(m=8, n=2000, seed=0, noise=0.1):
    cfg = arrays.ArrayConfig(sensor_count=m)
    scene = arrays.SourceScene.on_grid(cfg, [-20.0, 10.0], [1.0, 1.0], noise)
    return arrays.generate_snapshots(scene, cfg, n, seed), scene, cfg


class TestComplexSign:
    def test_basic_values(self):
        assert q.complex_sign(1 + 2j) == 1 + 1j
        assert q.complex_sign(-0.5 + 0j) == -1 + 1j
        assert q.complex_sign(0) == 1 + 1j
        assert q.complex_sign(-3 - 4j) == -1 - 1j

    def test_array_codomain(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(100) + 1j * rng.standard_normal(100)
        s = q.complex_sign(x)
        assert np.all(np.abs(s.real) == 1)
        assert np.all(np.abs(s.imag) == 1)


class TestQuantize:
    def test_zero_signal_reproduces_dither_signs(self):
        snaps = arrays.SnapshotSet(data=np.zeros((3, 50), dtype=complex), seed=0)
        params = q.DitherParams(scale=2.0, seed=9)
        bits = q.quantize(snaps, params)
        tau1, tau2 = q._dither_streams(params, (3, 50))
        assert np.array_equal(bits.first, q.complex_sign(tau1))
        assert np.array_equal(bits.second, q.complex_sign(tau2))

    def test_codomain_quaternary(self):
        snaps, _, _ = make_snapshots(n=500)
        bits = q.quantize(snaps, q.DitherParams(scale=10.0, seed=1))
        for stream in (bits.first, bits.second):
            assert np.all(np.abs(stream.real) == 1)
            assert np.all(np.abs(stream.imag) == 1)

    def test_scalar_unbiasedness_law(self):
        # E[T sgn(x + tau)] = x for tau ~ U[-T, T], verified by Monte Carlo
        x = 0.37 - 0.81j
        scale = 2.0
        draws = 1_000_000
        snaps = arrays.SnapshotSet(data=np.full((1, draws), x), seed=0)
        bits = q.quantize(snaps, q.DitherParams(scale=scale, seed=3))
        est = scale * np.mean(bits.first)
        bound = 3 * scale / np.sqrt(draws)
        assert abs(est.real - x.real) < bound
        assert abs(est.imag - x.imag) < bound

    def test_dynamic_range_warning(self):
        snaps = arrays.SnapshotSet(data=np.full((2, 4), 1.5 + 0.1j), seed=0)
        with pytest.warns(q.DynamicRangeWarning):
            q.quantize(snaps, q.DitherParams(scale=1.0, seed=0))

    def test_bitwise_reproducible(self):
        snaps, _, _ = make_snapshots(n=300)
        a = q.quantize(snaps, q.DitherParams(scale=8.0, seed=5))
        b = q.quantize(snaps, q.DitherParams(scale=8.0, seed=5))
        assert np.array_equal(a.first, b.first)
        assert np.array_equal(a.second, b.second)
        c = q.quantize(snaps, q.DitherParams(scale=8.0, seed=6))
        assert not np.array_equal(a.first, c.first)


class TestPickDitherScale:
    def test_margin_arithmetic(self):
        data = np.array([[2.5 + 0.5j, -1.0 + 2.0j]])
        snaps = arrays.SnapshotSet(data=data, seed=0)
        assert q.pick_dither_scale(snaps, margin=1.2) == pytest.approx(3.0)

    def test_all_zero_falls_back_to_unit(self):
        snaps = arrays.SnapshotSet(data=np.zeros((2, 3), dtype=complex), seed=0)
        assert q.pick_dither_scale(snaps, margin=1.2) == 1.0

    def test_covers_generated_data(self):
        snaps, _, _ = make_snapshots(n=5000, seed=7)
        scale = q.pick_dither_scale(snaps, margin=1.2)
        x = snaps.data
        assert np.max(np.abs(x.real)) < scale
        assert np.max(np.abs(x.imag)) < scale

    def test_rejects_bad_margin(self):
        snaps, _, _ = make_snapshots(n=10)
        with pytest.raises(ValueError):
            q.pick_dither_scale(snaps, margin=0.9)


class TestEstimateCovariance:
    def test_single_snapshot_arithmetic(self):
        m = 3
        ones = np.full((m, 1), 1 + 1j)
        bits = q.OneBitSet(first=ones, second=ones, scale=2.0)
        est = q.estimate_covariance(bits)
        expected = 2.0**2 * (1 + 1j) * (1 - 1j) * np.ones((m, m))
        assert np.array_equal(est.one_sided, expected)
        assert np.array_equal(est.matrix, expected.real + 0j)

    def test_exactly_hermitian(self):
        snaps, _, _ = make_snapshots(n=4000, seed=2)
        bits = q.quantize(snaps, q.DitherParams(scale=q.pick_dither_scale(snaps), seed=3))
        est = q.estimate_covariance(bits)
        assert np.max(np.abs(est.matrix - est.matrix.conj().T)) == 0.0

    def test_entries_bounded_by_twice_scale_sq(self):
        snaps, _, _ = make_snapshots(n=200, seed=4)
        bits = q.quantize(snaps, q.DitherParams(scale=6.0, seed=5))
        est = q.estimate_covariance(bits)
        assert np.max(np.abs(est.one_sided)) <= 2 * 6.0**2 + 1e-12

    def test_error_shrinks_with_snapshot_count(self):
        # median max-norm error drops by about sqrt(2) when N doubles
        snaps_ref, scene, cfg = make_snapshots(n=100, seed=0)
        reference = arrays.true_covariance(scene, cfg)
        scale = q.pick_dither_scale(snaps_ref, 1.4)

        def median_err(n):
            errs = []
            for seed in range(24):
                snaps = arrays.generate_snapshots(scene, cfg, n, seed + 100)
                bits = q.quantize(snaps, q.DitherParams(scale=scale, seed=seed + 900))
                errs.append(np.max(np.abs(q.estimate_covariance(bits).matrix - reference)))
            return float(np.median(errs))

        ratio = median_err(2000) / median_err(8000)
        assert 1.5 < ratio < 2.7  # ideal 2 for a 4x snapshot increase

    def test_unbiasedness_across_seeds(self):
        snaps_ref, scene, cfg = make_snapshots(n=1000, seed=0)
        reference = arrays.true_covariance(scene, cfg)
        scale = q.pick_dither_scale(snaps_ref, 1.4)
        acc = np.zeros_like(reference)
        runs = []
        for seed in range(60):
            snaps = arrays.generate_snapshots(scene, cfg, 1000, seed + 1)
            bits = q.quantize(snaps, q.DitherParams(scale=scale, seed=seed + 501))
            est = q.estimate_covariance(bits).matrix
            acc += est
            runs.append(est)
        mean = acc / 60
        stderr = np.std(np.stack(runs), axis=0, ddof=1) / np.sqrt(60)
        diff = np.abs(mean - reference)
        # 5 standard errors at this run count; the acceptance suite tightens this
        assert np.mean(diff <= 5 * stderr + 1e-12) > 0.97


class TestPackedFormat:
    def test_pack_unpack_roundtrip(self):
        snaps, _, _ = make_snapshots(m=5, n=33, seed=6)
        bits = q.quantize(snaps, q.DitherParams(scale=8.0, seed=7))
        packed = q.pack_one_bit(bits)
        assert packed.shape == (33, (4 * 5 + 7) // 8)
        back = q.unpack_one_bit(packed, 5, 33, bits.scale)
        assert np.array_equal(back.first, bits.first)
        assert np.array_equal(back.second, bits.second)

    def test_file_roundtrip_and_size(self, tmp_path):
        # 2 bits per complex component per stream, padded per snapshot
        snaps, _, _ = make_snapshots(m=7, n=51, seed=8)
        bits = q.quantize(snaps, q.DitherParams(scale=9.0, seed=9))
        path = tmp_path / "x.ob1b"
        q.write_one_bit(path, bits)
        raw = path.read_bytes()
        assert raw[:4] == b"OB1B"
        header = 4 + 4 + 4 + 4 + 8
        assert len(raw) == header + 51 * ((4 * 7 + 7) // 8)
        back = q.read_one_bit(path)
        assert back.scale == bits.scale
        assert np.array_equal(back.first, bits.first)
        assert np.array_equal(back.second, bits.second)

    def test_rejects_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.ob1b"
        path.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(ValueError):
            q.read_one_bit(path)


class TestFixedScalePolicy:
    def test_fixed_scale_violation_raises(self):
        snaps, _, _ = make_snapshots(n=100, seed=1)
        with pytest.raises(q.DynamicRangeError):
            q.quantize_snapshot_file(snaps, fixed_scale=0.5, seed=0)

    def test_margin_policy_matches_manual(self):
        snaps, _, _ = make_snapshots(n=100, seed=1)
        bits = q.quantize_snapshot_file(snaps, margin=1.3, seed=4)
        manual = q.quantize(snaps, q.DitherParams(q.pick_dither_scale(snaps, 1.3), seed=4))
        assert np.array_equal(bits.first, manual.first)
