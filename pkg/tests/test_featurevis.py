import math

import numpy as np
import pytest

import tunedim.featurevis as fv
from tunedim.filterbank import FilterBank, build_gabor_bank
from tunedim.stimuli import pink_noise


def spectral_peak(image):
    g = image.mean(axis=2)
    g = g - g.mean()
    F = np.abs(np.fft.fft2(g))
    F[0, 0] = 0
    ky, kx = np.unravel_index(np.argmax(F), F.shape)
    n = g.shape[0]
    fy, fx = np.fft.fftfreq(n)[ky], np.fft.fftfreq(n)[kx]
    return math.hypot(fx, fy), math.atan2(fy, fx) % math.pi


def angle_gap(a, b):
    return abs((a - b + math.pi / 2) % math.pi - math.pi / 2)


# ---------------------------------------------------------------- objective

def test_objective_examples():
    a = np.array([1.0, -2.0, 0.5])
    same = np.broadcast_to(a, (3, 4, 3))
    assert fv.objective(a, same) == pytest.approx(1.0)
    orth = np.broadcast_to([2.0, 1.0, 0.0], (3, 4, 3))
    assert fv.objective(a, orth) == pytest.approx(0.0, abs=1e-15)
    assert fv.objective(a, np.stack([a, -a])[:, None, :]) == pytest.approx(0.0, abs=1e-15)


def test_objective_zero_target():
    with pytest.raises(fv.InvalidTargetError):
        fv.objective(np.zeros(3), np.ones((2, 2, 3)))


def test_objective_scale_invariant(rng):
    a = rng.standard_normal(5)
    amap = rng.standard_normal((4, 4, 5))
    for alpha in (1e-3, 0.5, 7.0, 1e4):
        assert abs(fv.objective(alpha * a, amap) - fv.objective(a, amap)) < 1e-10


def test_tiny_positions_contribute_zero():
    a = np.array([1.0, 0.0])
    amap = np.array([[[1.0, 0.0], [1e-9, 0.0]]])
    assert fv.objective(a, amap) == pytest.approx(0.5)


def test_objective_gradient(rng):
    a = rng.standard_normal(4)
    amap = rng.standard_normal((3, 3, 4))
    _, g = fv._objective_and_grad(a, amap)
    e = 1e-6
    for idx in [(0, 0, 0), (1, 2, 3), (2, 1, 1)]:
        d = np.zeros_like(amap)
        d[idx] = e
        fd = (fv.objective(a, amap + d) - fv.objective(a, amap - d)) / (2 * e)
        assert g[idx] == pytest.approx(fd, rel=1e-6, abs=1e-10)


def test_dot_objective_gradient(rng):
    a = rng.standard_normal(4)
    amap = rng.standard_normal((3, 3, 4))
    obj, g = fv._dot_objective_and_grad(a, amap)
    assert obj == pytest.approx(np.mean(amap @ (a / np.linalg.norm(a))))
    assert np.allclose(g, a / np.linalg.norm(a) / 9)


# ---------------------------------------------------------------- parameterisation

@pytest.mark.parametrize("H,W", [(8, 8), (9, 7), (16, 10)])
def test_unit_parameter_energy(H, W):
    f = fv.FourierImage(H, W)
    energies = []
    for idx in np.ndindex(f.params.shape):
        if f.weights[idx[0], 0, idx[2], idx[3]] == 0:
            continue
        p = np.zeros(f.params.shape)
        p[idx] = 1.0
        energies.append(np.sum(f.raw(p) ** 2))
    assert max(energies) / min(energies) - 1 < 0.01
    assert np.mean(energies) == pytest.approx(1.0)


def test_image_is_real_finite_and_bounded(rng):
    f = fv.FourierImage.random(16, 16, rng, std=5.0)
    img = f.image()
    assert img.shape == (16, 16, 3) and np.all(np.isfinite(img))
    assert np.all((img >= 0) & (img <= 1))


def test_raw_adjoint_is_transpose(rng):
    f = fv.FourierImage(8, 6)
    p = rng.standard_normal(f.params.shape)
    q = rng.standard_normal((8, 6, 3))
    assert np.sum(f.raw(p) * q) == pytest.approx(np.sum(p * f.raw_adjoint(q)), rel=1e-10)


def test_sampler_adjoint_is_transpose(rng):
    s = fv.AffineSampler(12, 12, (1.3, -0.6), 0.07, 1.03)
    x, y = rng.standard_normal((12, 12, 3)), rng.standard_normal((12, 12, 3))
    assert np.sum(s(x) * y) == pytest.approx(np.sum(x * s.adjoint(y)), rel=1e-10)


def test_identity_sampler():
    x = np.random.default_rng(0).random((10, 10, 3))
    assert np.allclose(fv.AffineSampler(10, 10, (0.0, 0.0), 0.0, 1.0)(x), x)


def test_integer_shift_sampler():
    x = np.random.default_rng(0).random((10, 10, 3))
    out = fv.AffineSampler(10, 10, (2.0, 0.0), 0.0, 1.0)(x)
    assert np.allclose(out[2:], x[:-2])


def test_jitter_validation():
    with pytest.raises(ValueError):
        fv.Jitter(scale_range=(0.0, 1.0))
    with pytest.raises(ValueError):
        fv.Jitter(scale_range=(1.0, 2.5))
    assert fv.NO_JITTER.disabled and not fv.Jitter().disabled


# ---------------------------------------------------------------- end-to-end gradient

def _fd_rel_error(a, bank, fimg, sampler, n_probe=25, step=1e-5):
    _, g = fv.objective_and_param_grad(a, bank, fimg, fimg.params, sampler)
    rng = np.random.default_rng(1)
    errs = []
    while len(errs) < n_probe:
        idx = tuple(int(rng.integers(0, d)) for d in fimg.params.shape)
        if fimg.weights[idx[0], 0, idx[2], idx[3]] == 0:
            continue
        p1, p2 = fimg.params.copy(), fimg.params.copy()
        p1[idx] += step
        p2[idx] -= step
        fd = (fv.objective_and_param_grad(a, bank, fimg, p1, sampler)[0]
              - fv.objective_and_param_grad(a, bank, fimg, p2, sampler)[0]) / (2 * step)
        errs.append(abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-8))
    return max(errs), g


@pytest.mark.parametrize("jitter", [False, True])
def test_spectrum_gradient_matches_fd(jitter):
    bank = build_gabor_bank(count=3, seed=0, stride=1)
    fimg = fv.FourierImage.random(8, 8, np.random.default_rng(0), 0.5)
    sampler = fv.AffineSampler(8, 8, (0.7, -0.3), 0.05, 1.02) if jitter else None
    err, _ = _fd_rel_error(np.array([1.0, -0.5, 0.3]), bank, fimg, sampler)
    assert err < 1e-3


def test_single_filter_gradient_is_degenerate():
    # with one channel the cosine is sign(response), flat almost everywhere
    bank = build_gabor_bank(count=1, seed=0, stride=1)
    fimg = fv.FourierImage.random(8, 8, np.random.default_rng(0), 0.5)
    _, g = fv.objective_and_param_grad(np.ones(1), bank, fimg, fimg.params)
    assert np.max(np.abs(g)) == 0.0


# ---------------------------------------------------------------- optimisation

def test_single_step_trace():
    bank = build_gabor_bank(count=3, seed=0)
    res = fv.visualize(np.ones(3), bank, fv.VisConfig(steps=1, H=32, W=32))
    assert res.steps == 1 and res.image.shape == (32, 32, 3)
    assert -1 <= res.final_objective <= 1
    assert res.to_dict() == {"coordinate": None, "final_objective": res.final_objective, "steps": 1}


def test_monotone_ascent_without_jitter():
    bank = build_gabor_bank(count=3, seed=0)
    cfg = fv.VisConfig(steps=60, step_size=0.001, jitter=fv.NO_JITTER, H=32, W=32)
    trace = fv.visualize(np.array([1.0, 0.2, -0.4]), bank, cfg).trace
    assert np.all(np.diff(trace) >= -1e-12)
    assert trace[-1] > trace[0]


def test_single_filter_trace_is_flat():
    bank = build_gabor_bank(count=1, seed=0)
    cfg = fv.VisConfig(steps=20, step_size=0.005, jitter=fv.NO_JITTER, H=32, W=32)
    trace = fv.visualize(np.ones(1), bank, cfg).trace
    assert np.all(np.diff(trace) >= 0)


def test_noise_mean_target_improves_on_random_start(bank):
    a = np.mean([bank.forward(pink_noise(32, 32, s)).values.mean(axis=(0, 1)) for s in range(50)],
                axis=0)
    # a near-grey start already matches the noise mean's DC response, so
    # start from a genuinely random image
    res = fv.visualize(a, bank, fv.VisConfig(steps=64, H=48, W=48, init_std=1.0))
    assert res.final_objective > res.trace[0]


def test_visualize_rejects_zero_target(bank):
    with pytest.raises(fv.InvalidTargetError):
        fv.visualize(np.zeros(28), bank, fv.VisConfig(steps=1, H=32, W=32))


def test_non_finite_gradient_reports_step(bank):
    class Broken:
        n_channels = 28

        def forward(self, image):
            return bank.forward(image)

        def backward(self, image, grad):
            return np.full(image.shape, np.nan)

    with pytest.raises(fv.NonFiniteGradientError) as info:
        fv.visualize(np.ones(28), Broken(), fv.VisConfig(steps=3, H=32, W=32))
    assert info.value.step == 0


def test_visualize_many_seeds_and_zero_rows(bank):
    cfg = fv.VisConfig(steps=4, H=32, W=32)
    points = np.vstack([np.ones(28), np.zeros(28), np.ones(28)])
    res = fv.visualize_many(points, bank, cfg, coordinates=[-1.0, 0.0, 1.0], skip_zero=True)
    assert [r.coordinate for r in res] == [-1.0, 0.0, 1.0]
    assert res[1].final_objective is None and np.all(res[1].image == 0.5)
    assert not np.array_equal(res[0].image, res[2].image)
    threaded = fv.visualize_many(points, bank, cfg, skip_zero=True, threads=3)
    assert np.array_equal(threaded[2].image, res[2].image)


def test_vis_config_validation_and_round_trip():
    with pytest.raises(ValueError):
        fv.VisConfig(steps=0)
    with pytest.raises(ValueError):
        fv.VisConfig(step_size=0)
    with pytest.raises(ValueError):
        fv.VisConfig(objective="l2")
    cfg = fv.VisConfig(steps=7, objective="dot", jitter=fv.Jitter(2.0, 0.1, (0.9, 1.1)))
    assert fv.VisConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.slow
def test_dot_objective_recovers_preferred_grating():
    # not the acceptance tolerance: a loose check that the renderer can find
    # each filter's preferred frequency and orientation when magnitude counts
    bank = build_gabor_bank(seed=0, apply_relu=True)
    cfg = fv.VisConfig(objective="dot", init_std=1.0)
    for j in (0, 9, 19):
        p = bank.params[j]
        f, th = spectral_peak(fv.visualize(np.ones(1), bank.subset([j]), cfg).image)
        assert abs(f - p.frequency) < 0.04
        assert math.degrees(angle_gap(th, p.theta)) < 15


# ---------------------------------------------------------------- grid output

def _res(value, size=128):
    return fv.VisualizationResult(np.full((size, size, 3), value), np.zeros(1), 0.0)


def test_grid_width_and_rows():
    grid = fv.render_grid([_res(0.1 * i) for i in range(6)], cols=6)
    assert grid.shape == (128, 6 * 128 + 5 * 2, 3) and grid.dtype == np.uint8
    grid = fv.render_grid([_res(0.5, 16) for _ in range(32)], cols=8)
    assert grid.shape[0] == 4 * 16 + 3 * 2


def test_grid_single_image_is_identity():
    img = np.random.default_rng(0).random((20, 20, 3))
    assert np.array_equal(fv.render_grid([fv.VisualizationResult(img, np.zeros(1), 0.0)]),
                          fv.to_uint8(img))


def test_grid_separators_are_white_and_order_is_row_major():
    grid = fv.render_grid([_res(0.0, 4), _res(0.2, 4), _res(0.4, 4)], cols=2)
    assert np.all(grid[:, 4:6] == 255) and np.all(grid[4:6] == 255)
    assert grid[0, 0, 0] == 0 and grid[0, 6, 0] == 51 and grid[6, 0, 0] == 102


def test_grid_empty():
    with pytest.raises(ValueError):
        fv.render_grid([])


def test_png_round_trip(tmp_path):
    from PIL import Image

    img = np.random.default_rng(0).random((10, 12, 3))
    fv.save_png(tmp_path / "x.png", img)
    back = np.asarray(Image.open(tmp_path / "x.png"))
    assert back.shape == (10, 12, 3) and np.array_equal(back, fv.to_uint8(img))
