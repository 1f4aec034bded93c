import math

import numpy as np
import pytest

from bounds import (BandCertificate, MeasureClassSpec, band, band_halfwidth, certify_model,
                    conservative_condition, kernel_lipschitz_w1, naive_coverage, nearest_net_distance,
                    net_extension_bound, net_grid, net_size, parse_certificate, pcpwa_metric,
                    posterior_mean_lipschitz, projected_clouds, quantile_net, sigma_modulus)
from errors import InputError, ParseError, ResourceError
from gp import fit, predict_many
from kernels import KernelSpec, gram
from measures import from_samples, make_basis, marginal, marginal_from_values, project
from transport import wp_1d

SQ2 = 1.0 / np.sqrt(2.0)
UNIT = MeasureClassSpec(0.0, 1.0, 1.0)


def class_member(rng, cls, n=64):
    """Discretized measure whose quantile function is nondecreasing and cls.lipschitz-Lipschitz on [a, b]."""
    du = 1.0 / n
    slopes = rng.uniform(0.0, 1.0, size=n) * cls.lipschitz
    rise = np.cumsum(slopes * du)
    span = min(rise[-1], cls.b - cls.a)
    rise = rise * (span / rise[-1]) if rise[-1] > 0 else rise
    start = rng.uniform(cls.a, cls.b - span)
    values = np.clip(start + rise, cls.a, cls.b)
    return marginal_from_values(values, np.full(n, du))


def model_on(values_list, y, amplitude=1.0, sigma=2.0, noise=0.01):
    clouds = [from_samples(np.asarray(v, dtype=float).reshape(-1, 1)) for v in values_list]
    return fit(clouds, y, KernelSpec("WGP", amplitude=amplitude, scales=(sigma,), p=1.0), noise)


class TestMeasureClass:
    @pytest.mark.parametrize("a, b, lip", [(1.0, 1.0, 1.0), (0.0, 1.0, 0.0), (0.0, np.inf, 1.0)])
    def test_invalid(self, a, b, lip):
        with pytest.raises(InputError):
            MeasureClassSpec(a, b, lip)


class TestQuantileNet:
    def test_whole_class_ball(self):
        net, size = quantile_net(UNIT, 1.0)
        assert size == 1 and len(net) == 1
        assert len(net[0]) == 1

    def test_known_size(self):
        assert net_grid(UNIT, 0.45) == (5, 5)
        net, size = quantile_net(UNIT, 0.45)
        assert size == 126 == len(net)

    def test_size_without_building(self):
        assert net_grid(UNIT, 0.1) == (20, 20)
        assert net_size(UNIT, 0.1) == 68923264410
        assert net_size(UNIT, 0.45) == quantile_net(UNIT, 0.45)[1]
        assert net_size(UNIT, 0.5) == 1

    def test_size_nonincreasing_in_tau(self):
        sizes = [quantile_net(UNIT, tau)[1] for tau in (0.25, 0.3, 0.45, 0.5, 0.6, 1.0)]
        assert all(a >= b for a, b in zip(sizes, sizes[1:]))

    def test_members_are_in_support(self):
        cls = MeasureClassSpec(-1.0, 2.0, 0.5)
        net, _ = quantile_net(cls, 0.8)
        for m in net:
            assert cls.a <= m.values[0] and m.values[-1] <= cls.b

    def test_cap(self):
        with pytest.raises(ResourceError):
            quantile_net(UNIT, 0.05, max_size=1000)

    def test_bad_tau(self):
        with pytest.raises(InputError):
            quantile_net(UNIT, 0.0)

    def test_soundness(self):
        rng = np.random.default_rng(0)
        for cls, tau in ((UNIT, 0.45), (UNIT, 0.3), (MeasureClassSpec(-1.0, 1.0, 2.0), 0.6)):
            net, _ = quantile_net(cls, tau)
            for _ in range(30):
                _, distance = nearest_net_distance(class_member(rng, cls), net)
                assert distance <= tau

    def test_nearest_member_is_itself(self):
        net, _ = quantile_net(UNIT, 0.45)
        index, distance = nearest_net_distance(net[7], net)
        assert index == 7 and distance == 0.0


class TestLipschitzConstants:
    def test_kernel(self):
        assert kernel_lipschitz_w1(KernelSpec("WGP", amplitude=2.0, scales=(3.0,))) == 6.0
        assert kernel_lipschitz_w1(KernelSpec("WGP", scales=(0.0,))) == 0.0

    @pytest.mark.parametrize("spec", [KernelSpec("PWA"), KernelSpec("WGP", p=2.0)])
    def test_kernel_unsupported(self, spec):
        with pytest.raises(InputError):
            kernel_lipschitz_w1(spec)

    def test_posterior_mean(self):
        clouds = [from_samples([[x]]) for x in (0.0, 1.0, 2.0)]
        model = fit(clouds, [1.0, -1.0, 0.5], KernelSpec("WGP"), 1.0, gram_entries=np.eye(3))
        assert posterior_mean_lipschitz(model, 6.0) == pytest.approx(9.0)

    def test_posterior_mean_zero_response(self):
        model = model_on([[0.1], [0.5]], [0.0, 0.0])
        assert posterior_mean_lipschitz(model, 6.0) == 0.0

    def test_sigma_modulus(self):
        model = model_on([[0.1, 0.2], [0.5, 0.9]], [1.0, 0.0])
        assert sigma_modulus(model, 2.0, 0.0) == 0.0
        assert sigma_modulus(model, 2.0, 0.1) < sigma_modulus(model, 2.0, 0.4)

    def test_sigma_modulus_holds(self):
        rng = np.random.default_rng(1)
        model = model_on([rng.uniform(0, 1, size=4) for _ in range(6)], rng.normal(size=6))
        L_k = kernel_lipschitz_w1(model.spec)
        for _ in range(50):
            a = from_samples(rng.uniform(0, 1, size=(4, 1)))
            b = from_samples(np.clip(a.points + rng.normal(scale=0.05, size=(4, 1)), 0, 1))
            tau = wp_1d(marginal(a, 0), marginal(b, 0), 1.0)
            sa, sb = predict_many(model, [a, b])
            assert abs(sa.sd - sb.sd) <= sigma_modulus(model, L_k, tau) + 1e-12


class TestBand:
    def test_single_member_beta(self):
        cert = band(0.1, 0.05, 1, 0.0, 0.0, 0.0)
        assert cert.beta == pytest.approx(3.84146, abs=1e-5)

    def test_zero_radius(self):
        cert = band(0.0, 0.05, 10, 1.0, 2.0, 0.0)
        assert cert.gamma == 0.0

    def test_beta_grows_with_net(self):
        betas = [band(0.1, 0.05, m, 0.0, 0.0, 0.0).beta for m in (1, 10, 100, 10_000)]
        assert all(a < b for a, b in zip(betas, betas[1:]))

    @pytest.mark.parametrize("delta", [0.0, 1.0, 1.5])
    def test_bad_delta(self, delta):
        with pytest.raises(InputError):
            band(0.1, delta, 1, 0.0, 0.0, 0.0)

    def test_gamma_formula(self):
        cert = band(0.2, 0.1, 35, 1.5, 2.5, 0.3, L_k=4.0)
        assert cert.gamma == pytest.approx(4.0 * 0.2 + math.sqrt(cert.beta) * 0.3)
        assert cert.is_consistent()
        assert band_halfwidth(cert, 0.5) == pytest.approx(math.sqrt(cert.beta) * 0.5 + cert.gamma)

    def test_certify_model(self):
        model = model_on([[0.1, 0.3], [0.5, 0.6], [0.8, 0.9]], [0.2, 0.55, 0.85], amplitude=1.5, sigma=2.0)
        cert = certify_model(model, UNIT, 0.45, 0.05, 1.0)
        assert cert.net_size == 126
        assert cert.L_k == pytest.approx(3.0)
        assert cert.L_nuN == pytest.approx(posterior_mean_lipschitz(model, 3.0))
        assert cert.is_consistent()

    def test_certify_model_fine_net(self):
        model = model_on([[0.1, 0.3], [0.5, 0.6], [0.8, 0.9]], [0.2, 0.55, 0.85], amplitude=1.5, sigma=2.0)
        cert = certify_model(model, UNIT, 0.1, 0.05, 1.0)
        assert cert.net_size == 68923264410
        assert math.isfinite(cert.beta) and cert.beta > band(0.1, 0.05, 126, 0.0, 0.0, 0.0).beta
        assert cert.is_consistent()
        assert parse_certificate(cert.to_record()).net_size == 68923264410

    def test_band_holds_on_prior_draws(self):
        rng = np.random.default_rng(21)
        clouds = [from_samples(class_member(rng, UNIT, 16).values.reshape(-1, 1)) for _ in range(120)]
        train, dense = clouds[:20], clouds[20:]
        spec = KernelSpec("WGP", amplitude=1.0, scales=(2.0,), p=1.0)
        K = gram(clouds, spec).entries
        draws = np.linalg.cholesky(K + 1e-8 * np.eye(120)) @ rng.normal(size=(120, 200))

        base = fit(train, draws[:20, 0], spec, 0.01, gram_entries=K[:20, :20])
        sd = np.array([p.sd for p in predict_many(base, dense)])
        held = 0
        for t in range(200):
            y = draws[:20, t] + rng.normal(scale=0.1, size=20)
            model = fit(train, y, spec, 0.01, gram_entries=K[:20, :20])
            means = K[20:, :20] @ model.alpha
            cert = certify_model(model, UNIT, 0.45, 0.1, 1.0)
            widths = np.array([band_halfwidth(cert, s) for s in sd])
            held += bool(np.all(np.abs(draws[20:, t] - means) <= widths))
        assert held >= 170


def make_cert(beta, gamma):
    return BandCertificate(tau=0.1, delta=0.05, net_size=1, beta=beta, gamma=gamma,
                           L_f=0.0, L_k=0.0, L_nuN=0.0, omega=0.0)


class TestConservativeCondition:
    def test_no_gamma(self):
        cert = make_cert(1.0, 0.0)
        for sigma_n in (0.0, 0.3, 5.0):
            assert conservative_condition(1.5, cert, sigma_n).holds

    def test_z_below_root_beta(self):
        verdict = conservative_condition(0.9, make_cert(1.0, 0.0), 100.0)
        assert not verdict.holds
        assert verdict.margin == -math.inf

    def test_threshold(self):
        verdict = conservative_condition(2.0, make_cert(1.0, 0.5), 0.6)
        assert verdict.holds
        assert verdict.threshold == pytest.approx(0.5)
        assert verdict.margin == pytest.approx(0.1)
        assert not conservative_condition(2.0, make_cert(1.0, 0.5), 0.4).holds


class TestCertificateRecord:
    def test_round_trip(self):
        cert = band(0.25, 0.05, 6435, 1.0, 3.7, 0.12, L_k=2.0)
        assert parse_certificate(cert.to_record()) == cert

    def test_missing_key(self):
        text = band(0.25, 0.05, 10, 1.0, 1.0, 0.1).to_record().replace("gamma=", "# gamma=")
        with pytest.raises(ParseError):
            parse_certificate(text)

    def test_bad_value_reports_row(self):
        lines = band(0.25, 0.05, 10, 1.0, 1.0, 0.1).to_record().splitlines()
        lines[3] = "beta=abc"
        with pytest.raises(ParseError) as info:
            parse_certificate("\n".join(lines))
        assert info.value.row == 4

    def test_tampered_certificate_is_inconsistent(self):
        cert = band(0.25, 0.05, 10, 1.0, 1.0, 0.1)
        tampered = BandCertificate(**{**cert.__dict__, "gamma": cert.gamma + 0.1})
        assert not tampered.is_consistent()


class TestNetExtension:
    def test_bound_holds_off_the_net(self):
        rng = np.random.default_rng(2)
        tau, L_f = 0.45, 1.0
        train = [rng.uniform(0, 1, size=5) for _ in range(8)]
        y = [float(np.mean(v)) for v in train]
        model = model_on(train, y, sigma=1.5, noise=0.01)
        L_k = kernel_lipschitz_w1(model.spec)
        L_nuN = posterior_mean_lipschitz(model, L_k)
        omega = sigma_modulus(model, L_k, tau)

        net, _ = quantile_net(UNIT, tau)
        net_clouds = [from_samples(m.values.reshape(-1, 1), m.weights) for m in net]
        net_preds = predict_many(model, net_clouds)
        B = max(abs(float(c.points[:, 0] @ c.weights) - s.mean) / s.sd for c, s in zip(net_clouds, net_preds))

        for _ in range(40):
            m = class_member(rng, UNIT)
            _, distance = nearest_net_distance(m, net)
            assert distance <= tau
            cloud = from_samples(m.values.reshape(-1, 1), m.weights)
            s = predict_many(model, [cloud])[0]
            error = abs(float(m.values @ m.weights) - s.mean)
            assert error <= net_extension_bound(B, s.sd, L_f, L_nuN, tau, omega) + 1e-12


class TestProjections:
    def test_pcpwa_metric_identity(self):
        c = from_samples(np.random.default_rng(3).normal(size=(5, 2)))
        assert pcpwa_metric(c, c, make_basis([[SQ2, SQ2], [SQ2, -SQ2]]), [1.0, 2.0]) == 0.0

    def test_pcpwa_metric_single_direction(self):
        rng = np.random.default_rng(4)
        a, b = from_samples(rng.normal(size=(5, 2))), from_samples(rng.normal(size=(7, 2)))
        v = [SQ2, SQ2]
        expected = wp_1d(project(a, v), project(b, v), 1.0)
        assert pcpwa_metric(a, b, make_basis([v]), [1.0]) == pytest.approx(expected)

    def test_pcpwa_metric_weight_count(self):
        c = from_samples([[0.0, 0.0]])
        with pytest.raises(InputError):
            pcpwa_metric(c, c, make_basis([[1.0, 0.0]]), [1.0, 1.0])

    def test_projected_clouds(self):
        clouds = [from_samples([[1.0, 1.0], [0.0, 2.0]])]
        out = projected_clouds(clouds, [SQ2, SQ2])
        assert out[0].dim == 1
        np.testing.assert_allclose(out[0].points[:, 0], [np.sqrt(2.0), np.sqrt(2.0)])


class TestNaiveCoverage:
    def test_no_input_noise(self):
        assert naive_coverage([0.0], [[1.0]], 1.0, 0.1) == pytest.approx(0.9, abs=1e-12)

    def test_unit_spread(self):
        assert naive_coverage([1.0], [[1.0]], 1.0, 0.1) == pytest.approx(0.75499, abs=1e-5)

    def test_large_spread(self):
        assert naive_coverage([1.0, 1.0], np.eye(2) * 1e12, 1.0, 0.1) < 1e-5

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            naive_coverage([1.0, 0.0], [[1.0]], 1.0, 0.1)
