import json

import numpy as np
import pytest

from nsst_fusion.errors import (
    InvalidDecompositionError,
    InvalidSpecError,
    TooSmallError,
    UnsupportedFilterError,
)
from nsst_fusion.image import GrayImage
from nsst_fusion.nsst import (
    DecompositionSpec,
    NsstDecomposition,
    build_pyramid_filters,
    build_shear_filters,
    decompose,
    dump_decomposition,
    kernel_response,
    reconstruct,
)

PAPER_SPEC = DecompositionSpec(2, (4, 8), "maxflat")


class TestPyramidFilters:
    def test_lowpass_plus_highpass_is_allpass(self):
        f = build_pyramid_filters("maxflat")
        total = kernel_response(f.h0, (64, 64)) + kernel_response(f.h1, (64, 64))
        assert np.max(np.abs(total - 1.0)) < 1e-10

    @pytest.mark.parametrize("level", [0, 1, 2])
    def test_perfect_reconstruction_identity(self, level):
        f = build_pyramid_filters("maxflat", level)
        h0, h1, g0, g1 = (kernel_response(k, (64, 64)) for k in f)
        assert np.max(np.abs(h0 * g0 + h1 * g1 - 1.0)) < 1e-10

    def test_maxflat_taps(self):
        h0 = build_pyramid_filters("maxflat").h0
        row = h0[3] / h0[3, 3]
        np.testing.assert_allclose(row, np.array([-1, 0, 9, 16, 9, 0, -1]) / 16.0, atol=1e-14)
        assert h0.sum() == pytest.approx(1.0, abs=1e-14)

    def test_lowpass_is_flat_at_dc_and_zero_at_nyquist(self):
        resp = np.real(kernel_response(build_pyramid_filters().h0, (64, 64)))
        assert resp[0, 0] == pytest.approx(1.0, abs=1e-14)
        assert resp[32, 32] == pytest.approx(0.0, abs=1e-14)

    def test_atrous_level_one(self):
        k0 = build_pyramid_filters("maxflat", 0).h0
        k1 = build_pyramid_filters("maxflat", 1).h0
        assert k1.shape == (13, 13)
        np.testing.assert_array_equal(k1[::2, ::2], k0)
        mask = np.ones_like(k1, dtype=bool)
        mask[::2, ::2] = False
        assert np.all(k1[mask] == 0)

    def test_unknown_name(self):
        with pytest.raises(UnsupportedFilterError):
            build_pyramid_filters("foo")


class TestShearFilters:
    def test_sum_of_directional_outputs_recovers_input(self, rng):
        wedges = build_shear_filters(4, 64)
        for _ in range(10):
            x = rng.normal(size=(64, 64))
            X = np.fft.fft2(x)
            total = sum(np.real(np.fft.ifft2(X * w)) for w in wedges)
            assert np.max(np.abs(total - x)) < 1e-6

    @pytest.mark.parametrize("k", [2, 4, 8, 16])
    def test_partition_of_unity(self, k):
        total = np.sum(build_shear_filters(k, (48, 64)), axis=0)
        assert np.max(np.abs(total - 1.0)) < 1e-12

    @pytest.mark.parametrize("k", [4, 8])
    def test_real_impulse_response(self, k):
        for w in build_shear_filters(k, 64):
            assert np.max(np.abs(np.imag(np.fft.ifft2(w)))) < 1e-12

    def test_horizontal_edge_energy_in_aligned_wedge(self):
        img = np.zeros((64, 64))
        img[32:, :] = 255.0
        img -= img.mean()
        X = np.fft.fft2(img)
        energies = [np.sum(np.real(np.fft.ifft2(X * w)) ** 2) for w in build_shear_filters(4, 64)]
        # the edge normal is vertical: wedge 3 is centred on the vertical-frequency axis
        assert energies[3] / sum(energies) >= 0.8

    def test_vertical_edge_energy_in_aligned_wedge(self):
        img = np.zeros((64, 64))
        img[:, 32:] = 255.0
        img -= img.mean()
        X = np.fft.fft2(img)
        energies = [np.sum(np.real(np.fft.ifft2(X * w)) ** 2) for w in build_shear_filters(8, 64)]
        assert np.argmax(energies) == 2
        assert energies[2] / sum(energies) >= 0.8

    @pytest.mark.parametrize("k", [0, 1, 3, 6])
    def test_invalid_direction_count(self, k):
        with pytest.raises(InvalidSpecError):
            build_shear_filters(k, 64)


class TestDecompose:
    def test_constant_image(self):
        dec = decompose(GrayImage(np.full((64, 64), 93.0)), PAPER_SPEC)
        assert np.max(np.abs(dec.low - 93.0)) < 1e-6
        assert max(np.max(np.abs(b)) for _, _, b in dec.iter_highs()) < 1e-6

    def test_default_layout(self, rng):
        dec = decompose(rng.uniform(0, 255, (256, 256)), PAPER_SPEC)
        assert [len(b) for b in dec.highs] == [4, 8]
        assert sum(1 for _ in dec.iter_highs()) == 12
        assert dec.low.shape == (256, 256)
        assert all(b.shape == (256, 256) for _, _, b in dec.iter_highs())

    def test_shift_invariance(self, rng):
        x = rng.uniform(0, 255, (64, 64))
        d0 = decompose(x, PAPER_SPEC)
        d1 = decompose(np.roll(x, (5, 9), axis=(0, 1)), PAPER_SPEC)
        assert np.max(np.abs(np.roll(d0.low, (5, 9), axis=(0, 1)) - d1.low)) < 1e-6
        for (_, _, a), (_, _, b) in zip(d0.iter_highs(), d1.iter_highs()):
            assert np.max(np.abs(np.roll(a, (5, 9), axis=(0, 1)) - b)) < 1e-6

    def test_directional_partition_matches_bandpass(self, rng):
        x = rng.uniform(0, 255, (64, 64))
        dec = decompose(x, PAPER_SPEC)
        X = np.fft.fft2(x)
        f0, f1 = build_pyramid_filters("maxflat", 0), build_pyramid_filters("maxflat", 1)
        fine = np.real(np.fft.ifft2(X * kernel_response(f0.h1, x.shape)))
        low1 = X * kernel_response(f0.h0, x.shape)
        coarse = np.real(np.fft.ifft2(low1 * kernel_response(f1.h1, x.shape)))
        assert np.max(np.abs(np.sum(dec.highs[1], axis=0) - fine)) < 1e-6
        assert np.max(np.abs(np.sum(dec.highs[0], axis=0) - coarse)) < 1e-6

    def test_linear(self, rng):
        x, y = rng.normal(size=(2, 32, 32))
        dx, dy, dxy = decompose(x, PAPER_SPEC), decompose(y, PAPER_SPEC), decompose(2 * x - 3 * y, PAPER_SPEC)
        assert np.max(np.abs(2 * dx.low - 3 * dy.low - dxy.low)) < 1e-9

    def test_too_small(self):
        with pytest.raises(TooSmallError):
            decompose(np.zeros((12, 12)), PAPER_SPEC)

    def test_deterministic(self, rng):
        x = rng.uniform(0, 255, (32, 32))
        a, b = decompose(x), decompose(x)
        for (_, _, u), (_, _, v) in zip(a.iter_highs(), b.iter_highs()):
            np.testing.assert_array_equal(u, v)


class TestReconstruct:
    def test_round_trip(self, rng):
        for _ in range(3):
            x = rng.uniform(0, 255, (64, 48))
            assert np.max(np.abs(reconstruct(decompose(x, PAPER_SPEC)) - x)) < 1e-6

    def test_zero(self):
        dec = decompose(np.zeros((32, 32)), PAPER_SPEC)
        assert np.all(reconstruct(dec.map(np.zeros_like)) == 0)

    def test_linear(self, rng):
        d1 = decompose(rng.normal(size=(32, 32)), PAPER_SPEC)
        d2 = decompose(rng.normal(size=(32, 32)), PAPER_SPEC)
        mixed = d1.combine(d2, lambda a, b: 0.7 * a - 1.3 * b)
        expect = 0.7 * reconstruct(d1) - 1.3 * reconstruct(d2)
        assert np.max(np.abs(reconstruct(mixed) - expect)) < 1e-9

    def test_inconsistent_shapes(self, rng):
        dec = decompose(rng.normal(size=(32, 32)), PAPER_SPEC)
        dec.highs[1][3] = np.zeros((31, 32))
        with pytest.raises(InvalidDecompositionError):
            reconstruct(dec)

    def test_missing_direction(self, rng):
        dec = decompose(rng.normal(size=(32, 32)), PAPER_SPEC)
        bad = NsstDecomposition(dec.spec, dec.low, [dec.highs[0], dec.highs[1][:7]])
        with pytest.raises(InvalidDecompositionError):
            reconstruct(bad)

    @pytest.mark.parametrize("spec", [DecompositionSpec(1, (2,)), DecompositionSpec(3, (4, 8, 16))])
    def test_other_specs(self, rng, spec):
        x = rng.uniform(0, 255, (64, 64))
        assert np.max(np.abs(reconstruct(decompose(x, spec)) - x)) < 1e-6


class TestSpec:
    @pytest.mark.parametrize("levels, dirs", [(0, ()), (2, (4,)), (2, (4, 6)), (1, (1,))])
    def test_invalid(self, levels, dirs):
        with pytest.raises(InvalidSpecError):
            DecompositionSpec(levels, dirs)

    def test_default_settings(self):
        spec = DecompositionSpec()
        assert (spec.levels, spec.directions_per_scale, spec.pyramid_filter) == (2, (4, 8), "maxflat")
        assert spec.n_highs == 12


def test_debug_dump(tmp_path, rng):
    dec = decompose(rng.normal(size=(32, 16)), PAPER_SPEC)
    files = dump_decomposition(dec, tmp_path)
    assert len(files) == 13
    meta = json.loads((tmp_path / "s1_d5.json").read_text())
    assert meta == {"scale": 1, "direction": 5, "width": 16, "height": 32}
    back = np.fromfile(tmp_path / "s1_d5.f32", dtype="<f4").reshape(32, 16)
    np.testing.assert_allclose(back, dec.highs[1][5], rtol=1e-6, atol=1e-6)
