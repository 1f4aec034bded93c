import pytest

from pipeline import BenchmarkPipeline, RunConfig

pytestmark = pytest.mark.acceptance

SEEDS = tuple(range(10))
MEAN_INPUT_GAP = ("ML-fitted homoscedastic noise inside noise-inclusive intervals keeps "
                  "mean-input coverage close to nominal at the default schedules")


def seed_means(tmp_path_factory, scenario, methods):
    out = tmp_path_factory.mktemp(scenario)
    config = RunConfig(scenario=scenario, methods=methods, seeds=SEEDS, record_timing=False, threads=4)
    summary = BenchmarkPipeline(str(out), verbose=False).benchmark(config)["summary"]
    return summary.set_index("method")


@pytest.fixture(scope="module")
def eiv(tmp_path_factory):
    return seed_means(tmp_path_factory, "1D-EIV", ("reg", "agg", "pwa"))


@pytest.fixture(scope="module")
def aniso(tmp_path_factory):
    return seed_means(tmp_path_factory, "2D-aniso-PC", ("reg", "pcpwa", "uigp"))


class TestErrorsInVariables:
    def test_every_cell_succeeds(self, eiv):
        assert list(eiv["n_ok"]) == [10, 10, 10]

    def test_transport_kernel_keeps_nominal_coverage(self, eiv):
        assert eiv.loc["pwa", "coverage"] >= 0.90

    def test_transport_kernel_matches_mean_accuracy(self, eiv):
        assert eiv.loc["pwa", "rmse"] <= 1.1 * eiv.loc["reg", "rmse"]

    @pytest.mark.xfail(reason=MEAN_INPUT_GAP, strict=False)
    def test_mean_inputs_undercover(self, eiv):
        assert eiv.loc["reg", "coverage"] <= 0.80
        assert eiv.loc["agg", "coverage"] <= 0.30


class TestAnisotropicSubspace:
    def test_every_cell_succeeds(self, aniso):
        assert list(aniso["n_ok"]) == [10, 10, 10]

    def test_projected_kernel_covers(self, aniso):
        assert aniso.loc["pcpwa", "coverage"] >= 0.85

    def test_projected_kernel_accuracy(self, aniso):
        assert aniso.loc["pcpwa", "rmse"] <= 1.3 * aniso.loc["reg", "rmse"]

    @pytest.mark.xfail(reason=MEAN_INPUT_GAP, strict=False)
    def test_gaussian_summaries_undercover(self, aniso):
        assert aniso.loc["uigp", "coverage"] <= 0.60
