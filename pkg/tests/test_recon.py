import numpy as np
import pytest

from pmri.core import (NoiseSpec, SensitivityMaps, normalize_unit_range,
                       sens_combine, sens_expand)
from pmri.errors import IllConditioned, ShapeMismatch
from pmri.metrics import psnr
from pmri.recon import (compose_kspace, initial_recon, sense_reconstruct,
                        zero_filled_recon)
from pmri.sim import (CoilProfileSpec, PhantomSpec, make_coil_maps, make_mask,
                      make_phantom, simulate_acquisition)
from pmri.transform import fft2c_multicoil, ifft2c_multicoil

from conftest import random_complex, random_unit_maps, unit_maps


def _head_setup(accel, acs=0, h=64, w=64, noise=None, seed=11):
    truth = make_phantom(PhantomSpec("shepp_logan", h, w, seed=seed))
    maps = make_coil_maps(CoilProfileSpec(8, 28.0, 26.0, seed=2), h, w)
    mask = make_mask(h, w, accel, acs, acs)
    rec = simulate_acquisition(truth, maps, mask, noise)
    return rec, truth, maps, mask


def _psnr_vs_truth(img, truth):
    a, _ = normalize_unit_range(np.abs(img))
    b, _ = normalize_unit_range(np.abs(truth))
    return psnr(a, b, 1.0)


class TestZeroFilled:
    def test_fully_sampled_recovers_magnitude(self):
        rec, truth, _, _ = _head_setup(accel=1)
        out = zero_filled_recon(rec.kspace)
        assert np.max(np.abs(out - np.abs(truth))) < 1e-10

    def test_zero_kspace(self):
        assert not zero_filled_recon(np.zeros((2, 8, 8), complex)).any()

    def test_point_source_ghost_replicas(self):
        # aliasing theorem: R-undersampled impulse folds into R peaks W/R apart
        h = w = 64
        accel = 4
        x = np.zeros((h, w), complex)
        x[h // 2, w // 2] = 1.0
        rec = simulate_acquisition(x, unit_maps(1, h, w),
                                   make_mask(h, w, accel, 0, 0))
        out = zero_filled_recon(rec.kspace)
        peaks = np.argwhere(out > 0.5 * out.max())
        assert len(peaks) == accel
        assert set(peaks[:, 0]) == {h // 2}
        cols = np.sort(peaks[:, 1])
        assert np.array_equal(np.diff(cols), [w // accel] * (accel - 1))


class TestSense:
    def test_r1_reduces_to_sens_combine(self):
        rng = np.random.default_rng(51)
        maps = random_unit_maps(rng, 4, 16, 16)
        k = random_complex(rng, (4, 16, 16))
        mask = make_mask(16, 16, 1, 0, 0)
        img, report = sense_reconstruct(k, maps, mask, reg=0.0)
        combined = sens_combine(ifft2c_multicoil(k), maps)
        assert np.max(np.abs(img - combined)) < 1e-10
        assert report.pixels_unfolded == 16 * 16

    def test_exact_recovery_r2(self):
        rec, truth, maps, mask = _head_setup(accel=2)
        img, report = sense_reconstruct(rec.kspace, maps, mask, reg=0.0)
        assert _psnr_vs_truth(img, truth) >= 100.0
        rel = np.linalg.norm(img - truth) / np.linalg.norm(truth)
        assert rel <= 1e-8

    def test_exact_recovery_r4(self):
        rec, truth, maps, mask = _head_setup(accel=4)
        img, report = sense_reconstruct(rec.kspace, maps, mask, reg=0.0)
        assert _psnr_vs_truth(img, truth) >= 80.0
        assert np.isfinite(report.max_condition)
        assert (report.condition_numbers >= 1.0 - 1e-12).all()

    def test_acs_columns_do_not_break_exactness(self):
        rec, truth, maps, mask = _head_setup(accel=4, acs=24)
        img, _ = sense_reconstruct(rec.kspace, maps, mask, reg=0.0)
        rel = np.linalg.norm(img - truth) / np.linalg.norm(truth)
        assert rel <= 1e-8

    def test_ill_conditioned_warning(self):
        # identical coil maps make every unfolding column pair parallel
        rng = np.random.default_rng(52)
        one = random_complex(rng, (1, 16, 16))
        data = np.repeat(one, 4, axis=0)
        data /= np.sqrt((np.abs(data) ** 2).sum(axis=0))[None]
        maps = SensitivityMaps(data=data, support=np.ones((16, 16), bool))
        k = random_complex(rng, (4, 16, 16))
        mask = make_mask(16, 16, 2, 0, 0)
        with pytest.warns(IllConditioned):
            sense_reconstruct(k, maps, mask, reg=0.0)

    def test_noise_monotone_mse(self):
        sigmas = [0.0, 1e-3, 1e-2]
        mse = {s: 0.0 for s in sigmas}
        for seed in range(10):
            truth = make_phantom(PhantomSpec("shepp_logan", 32, 32, seed=seed))
            maps = make_coil_maps(CoilProfileSpec(8, 14.0, 13.0, seed=2), 32, 32)
            mask = make_mask(32, 32, 2, 8, 8)
            for sigma in sigmas:
                rec = simulate_acquisition(truth, maps, mask,
                                           NoiseSpec(sigma, seed=100 + seed))
                img, _ = sense_reconstruct(rec.kspace, maps, mask,
                                           reg=0.0 if sigma == 0 else 1e-4)
                mse[sigma] += np.mean(np.abs(img - truth) ** 2) / 10
        assert mse[0.0] <= mse[1e-3] <= mse[1e-2]

    def test_shape_mismatch(self):
        rng = np.random.default_rng(53)
        maps = random_unit_maps(rng, 2, 8, 8)
        with pytest.raises(ShapeMismatch):
            sense_reconstruct(random_complex(rng, (3, 8, 8)), maps,
                              make_mask(8, 8, 2, 0, 0))


class TestComposeKspace:
    def test_lambda_zero_keeps_only_measured(self):
        rng = np.random.default_rng(54)
        maps = random_unit_maps(rng, 3, 16, 16)
        k = random_complex(rng, (3, 16, 16))
        mask = make_mask(16, 16, 4, 4, 4)
        out = compose_kspace(k, mask, maps, lam=0.0)
        assert np.array_equal(out, np.where(mask.as_bool()[None], k, 0))

    def test_full_mask_passthrough(self):
        rng = np.random.default_rng(55)
        maps = random_unit_maps(rng, 3, 16, 16)
        k = random_complex(rng, (3, 16, 16))
        out = compose_kspace(k, make_mask(16, 16, 1, 0, 0), maps, lam=1.0)
        assert np.array_equal(out, k)

    def test_refined_truth_fills_true_kspace(self):
        rec, truth, maps, mask = _head_setup(accel=4, acs=16)
        k_true = fft2c_multicoil(sens_expand(truth, maps))
        out = compose_kspace(rec.kspace, mask, maps, lam=1.0, refined=truth)
        off = ~mask.as_bool()
        assert np.max(np.abs((out - k_true)[:, off])) < 1e-10

    def test_measured_entries_bit_exact(self):
        rng = np.random.default_rng(56)
        for trial in range(50):
            coils = int(rng.integers(1, 5))
            h, w = int(rng.integers(8, 17)), int(rng.integers(8, 17))
            accel = int(rng.integers(1, min(w, 5)))
            acs = int(rng.integers(0, min(h, w) // 2))
            maps = random_unit_maps(rng, coils, h, w)
            k = random_complex(rng, (coils, h, w))
            mask = make_mask(h, w, accel, acs, acs)
            lam = float(rng.uniform(-2, 2))
            out = compose_kspace(k, mask, maps, lam=lam)
            on = mask.as_bool()
            assert np.array_equal(out[:, on], k[:, on])

    def test_rss_magnitude_mode(self):
        rec, truth, maps, mask = _head_setup(accel=2, acs=8)
        out = compose_kspace(rec.kspace, mask, maps, lam=0.7,
                             combine_mode="rss_magnitude")
        on = mask.as_bool()
        assert np.array_equal(out[:, on], rec.kspace[:, on])

    def test_non_finite_lambda_rejected(self):
        rng = np.random.default_rng(57)
        maps = random_unit_maps(rng, 2, 8, 8)
        with pytest.raises(ValueError):
            compose_kspace(random_complex(rng, (2, 8, 8)),
                           make_mask(8, 8, 2, 0, 0), maps, lam=np.nan)


class TestInitialRecon:
    def test_fully_sampled_recovers_image(self):
        rec, truth, maps, _ = _head_setup(accel=1)
        out = initial_recon(rec.kspace, maps)
        assert np.max(np.abs(out - truth)[maps.support]) < 1e-10

    def test_zero_input(self):
        rng = np.random.default_rng(58)
        maps = random_unit_maps(rng, 2, 8, 8)
        assert not initial_recon(np.zeros((2, 8, 8), complex), maps).any()

    def test_lambda_zero_equals_zero_filled_combine(self):
        rec, truth, maps, mask = _head_setup(accel=4, acs=12)
        kplus = compose_kspace(rec.kspace, mask, maps, lam=0.0)
        out = initial_recon(kplus, maps)
        oracle = sens_combine(ifft2c_multicoil(rec.kspace), maps)
        assert np.max(np.abs(out - oracle)) < 1e-12
