import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import ndtri
from tqdm import tqdm

from bounds import (MeasureClassSpec, band_halfwidth, certify_model, conservative_condition,
                    projected_clouds)
from dataset_io import (latent_frame, load_dataset, save_dataset, save_frame, write_record,
                        write_text)
from errors import InputError, OTGPError, UnsupportedCaseError
from gp import (OptimizerConfig, aggregated_models, aggregated_predict, fit, log_marginal_likelihood,
                optimize_hyperparams, predict_many)
from kernels import KernelFamily, KernelSpec
from measures import gaussian_summary, make_basis, pca_directions
from metrics import score
from scenarios import Dataset, Group, ScenarioConfig, default_config, make_splits

METHODS = ("reg", "agg", "wgp", "swgp", "pwa", "pcpwa", "uigp", "kme", "mmd")
RESULT_COLUMNS = ["scenario", "method", "seed", "rmse", "coverage", "crps", "fit_seconds",
                  "jitter_escalations", "clamped", "error"]


@dataclass(frozen=True)
class MethodSettings:
    p: float = 1.0
    slice_count: int = 20
    slice_seed: int = 0
    n_components: Optional[int] = None


@dataclass(frozen=True)
class RunConfig:
    """Everything a simulate / fit / benchmark / certify run needs besides file paths."""
    scenario: str = "1D-EIV"
    methods: Tuple[str, ...] = ("reg", "pwa")
    seeds: Tuple[int, ...] = (0,)
    alpha: float = 0.1
    restarts: int = 3
    max_iter: int = 200
    samples_per_cloud: Optional[int] = None
    n_train: Optional[int] = None
    n_test: Optional[int] = None
    eiv_target: Optional[str] = None
    record_timing: bool = True
    include_noise: bool = True
    threads: int = 1
    method_settings: Mapping[str, MethodSettings] = field(default_factory=dict)

    def __post_init__(self):
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            raise InputError(f"unknown method tag(s) {unknown}; valid: {', '.join(METHODS)}")
        if not 0.0 < self.alpha < 1.0:
            raise InputError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.seeds:
            raise InputError("need at least one seed")
        if self.threads < 1:
            raise InputError("threads must be at least 1")

    def scenario_config(self, seed: int) -> ScenarioConfig:
        return default_config(self.scenario, seed, n_train=self.n_train, n_test=self.n_test,
                              samples_per_cloud=self.samples_per_cloud, eiv_target=self.eiv_target)

    def optimizer(self, seed: int) -> OptimizerConfig:
        return OptimizerConfig(restarts=self.restarts, max_iter=self.max_iter, seed=seed)

    def settings(self, method: str) -> MethodSettings:
        return self.method_settings.get(method, MethodSettings())


def method_inputs(method: str, train: Dataset, test: Dataset, settings: MethodSettings):
    """
    Kernel template and per-split inputs for a method tag.

    Returns:
        (template KernelSpec, train inputs, test inputs)
    """
    d = train.dim
    if method == "reg":
        template = KernelSpec(KernelFamily.RBF)
        means = lambda ds: [gaussian_summary(c).mean for c in ds.clouds]
        return template, means(train), means(test)
    if method == "agg":
        return KernelSpec(KernelFamily.RBF), train.clouds, test.clouds
    if method == "uigp":
        template = KernelSpec(KernelFamily.UIGP, scales=(1.0,) * d)
        summaries = lambda ds: [gaussian_summary(c) for c in ds.clouds]
        return template, summaries(train), summaries(test)
    if method == "wgp":
        template = KernelSpec(KernelFamily.WGP, p=settings.p)
    elif method == "swgp":
        template = KernelSpec(KernelFamily.SWGP, p=settings.p, slice_count=settings.slice_count,
                              slice_seed=settings.slice_seed)
    elif method == "pwa":
        template = KernelSpec(KernelFamily.PWA, scales=(1.0,) * d, p=settings.p)
    elif method == "pcpwa":
        basis = pca_directions(train.clouds, settings.n_components or d)
        template = KernelSpec(KernelFamily.PCPWA, scales=(1.0,) * basis.size, p=settings.p, basis=basis)
    elif method == "kme":
        template = KernelSpec(KernelFamily.KME)
    else:
        template = KernelSpec(KernelFamily.MMD)
    return template, train.clouds, test.clouds


def fit_method(method: str, train: Dataset, test: Dataset, config: RunConfig, seed: int):
    """Optimize hyperparameters and predict the test split; returns (HyperparamFit, fitted models, predictions)."""
    template, train_inputs, test_inputs = method_inputs(method, train, test, config.settings(method))
    optimizer = config.optimizer(seed)
    if method == "agg":
        # hyperparameters come from the first replicate
        first = [c.points[0] for c in train.clouds]
        hyper = optimize_hyperparams(first, train.y, template, optimizer)
        models = aggregated_models(train_inputs, train.y, hyper.spec, hyper.noise)
        return hyper, models, aggregated_predict(models, test_inputs)
    hyper = optimize_hyperparams(train_inputs, train.y, template, optimizer)
    model = fit(train_inputs, train.y, hyper.spec, hyper.noise, workers=config.threads)
    return hyper, [model], predict_many(model, test_inputs)


def numeric_events(models, preds) -> Dict[str, int]:
    """Jitter escalations summed over the fitted models and the number of clamped predictive variances."""
    return {"jitter_escalations": int(sum(m.jitter_escalations for m in models)),
            "clamped": int(sum(p.clamped for p in preds))}


def spec_record(spec: KernelSpec) -> Dict[str, object]:
    record = {"family": spec.family.value, "amplitude": spec.amplitude}
    for k, scale in enumerate(spec.scales):
        record[f"scale_{k + 1}"] = scale
    record["p"] = spec.p
    record["base_lengthscale"] = spec.base_lengthscale
    if spec.family == KernelFamily.SWGP:
        record["slice_count"] = spec.slice_count
        record["slice_seed"] = spec.slice_seed
    if spec.basis is not None:
        for k, direction in enumerate(spec.basis):
            record[f"direction_{k + 1}"] = tuple(direction)
    return record


def prediction_frame(test: Dataset, preds, alpha: float, include_noise: bool = True) -> pd.DataFrame:
    z = -ndtri(alpha / 2.0)
    sds = np.array([p.total_sd if include_noise else p.sd for p in preds])
    means = np.array([p.mean for p in preds])
    frame = pd.DataFrame({
        "group_id": test.group_ids,
        "y": test.y,
        "mean": means,
        "sd": sds,
        "lower": means - z * sds,
        "upper": means + z * sds,
    })
    if test.latent is not None:
        frame["f"] = [row.get("f", np.nan) for row in test.latent]
    return frame


class BenchmarkPipeline:
    def __init__(self, out_dir="./otgp_runs", verbose=True):
        self.out_dir = out_dir
        self.verbose = verbose
        os.makedirs(out_dir, exist_ok=True)

    def _log(self, message):
        if self.verbose:
            tqdm.write(message)

    def _path(self, *parts):
        return os.path.join(self.out_dir, *parts)

    def simulate(self, scenario: ScenarioConfig):
        """Write train/test CSVs and the latent truths of one scenario draw."""
        run_dir = f"{scenario.name}_seed{scenario.seed}"
        self._log(f"[Simulate] Generating {scenario.name} (seed={scenario.seed}, "
                  f"{scenario.n_train}/{scenario.n_test} groups, M={scenario.samples_per_cloud})")
        train, test = make_splits(scenario)
        paths = {
            "train": save_dataset(train, self._path(run_dir, "train.csv")),
            "test": save_dataset(test, self._path(run_dir, "test.csv")),
        }
        latent = pd.concat([latent_frame(train).assign(split="train"),
                            latent_frame(test).assign(split="test")], ignore_index=True)
        paths["latent"] = save_frame(latent, self._path(run_dir, "latent.csv"))
        self._log(f"[Simulate] ✅ Saved to {self._path(run_dir)}")
        return paths

    def fit(self, train: Dataset, method: str, config: RunConfig, seed: int = 0, output_file=None):
        """Optimize one method on a training split and write its model summary."""
        if method not in METHODS:
            raise InputError(f"unknown method {method!r}; valid: {', '.join(METHODS)}")
        template, inputs, _ = method_inputs(method, train, train, config.settings(method))
        self._log(f"[Fit] Optimizing {method} on {len(train)} groups (d={train.dim})")
        start = time.perf_counter()
        replicates = [c.points[0] for c in train.clouds] if method == "agg" else inputs
        hyper = optimize_hyperparams(replicates, train.y, template, config.optimizer(seed))
        if method == "agg":
            models = aggregated_models(inputs, train.y, hyper.spec, hyper.noise)
        else:
            models = [fit(inputs, train.y, hyper.spec, hyper.noise, workers=config.threads)]
        elapsed = time.perf_counter() - start

        record = {"method": method, "n_train": len(train), "dim": train.dim, "seed": seed}
        record.update(spec_record(hyper.spec))
        record["noise"] = hyper.noise
        record["lml"] = hyper.lml
        record["jitter"] = max(m.jitter for m in models)
        record["jitter_escalations"] = sum(m.jitter_escalations for m in models)
        if config.record_timing:
            record["fit_seconds"] = elapsed
        output_file = output_file or self._path(f"model_{method}.txt")
        write_record(record, output_file)
        self._log(f"[Fit] ✅ {method}: log marginal likelihood {hyper.lml:.4f} -> {output_file}")
        return {"hyper": hyper, "record": record, "summary_file": output_file}

    def run_cell(self, scenario: str, method: str, seed: int, config: RunConfig):
        """Simulate, fit, predict and score one (scenario, method, seed) cell; never raises OTGPError."""
        row = {"scenario": scenario, "method": method, "seed": seed, "rmse": np.nan,
               "coverage": np.nan, "crps": np.nan, "fit_seconds": np.nan,
               "jitter_escalations": np.nan, "clamped": np.nan, "error": ""}
        preds_frame = None
        try:
            train, test = make_splits(config.scenario_config(seed))
            start = time.perf_counter()
            _, models, preds = fit_method(method, train, test, config, seed)
            elapsed = time.perf_counter() - start
            report = score(preds, test.y, config.alpha, config.include_noise)
            row.update(rmse=report.rmse, coverage=report.coverage, crps=report.mean_crps)
            row.update(numeric_events(models, preds))
            if config.record_timing:
                row["fit_seconds"] = elapsed
            preds_frame = prediction_frame(test, preds, config.alpha, config.include_noise)
            self._log(f"[Benchmark] ✅ {scenario}/{method} seed={seed}: rmse={report.rmse:.4f} "
                      f"cov={report.coverage:.3f} crps={report.mean_crps:.4f}")
        except (OTGPError, np.linalg.LinAlgError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
            self._log(f"[Benchmark] ❌ {scenario}/{method} seed={seed}: {row['error']}")
        return row, preds_frame

    def benchmark(self, config: RunConfig):
        """
        Run every (method, seed) cell of the configured scenario.

        Writes results.csv (one row per cell), summary.csv (means over the
        successful seeds) and predictions/<scenario>_<method>_seed<k>.csv.

        Returns:
            dict with the results and summary DataFrames and the written paths
        """
        cells = [(config.scenario, m, s) for m in config.methods for s in config.seeds]
        self._log(f"[Benchmark] {len(cells)} cells: {config.scenario} x "
                  f"{','.join(config.methods)} x seeds {list(config.seeds)}")

        outcomes = []
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            futures = [pool.submit(self.run_cell, *cell, config) for cell in cells]
            for future in tqdm(futures, desc="[Benchmark] cells", disable=not self.verbose):
                outcomes.append(future.result())

        order = {m: k for k, m in enumerate(METHODS)}
        outcomes.sort(key=lambda o: (o[0]["scenario"], order[o[0]["method"]], o[0]["seed"]))
        results = pd.DataFrame([o[0] for o in outcomes], columns=RESULT_COLUMNS)

        for row, frame in outcomes:
            if frame is not None:
                name = f"{row['scenario']}_{row['method']}_seed{row['seed']}.csv"
                save_frame(frame, self._path("predictions", name))

        summary = self.summarize(results)
        paths = {
            "results": save_frame(results, self._path("results.csv")),
            "summary": save_frame(summary, self._path("summary.csv")),
        }
        failed = int((results["error"] != "").sum())
        status = "✅" if failed == 0 else "⚠️"
        self._log(f"[Benchmark] {status} {len(results) - failed}/{len(results)} cells succeeded; "
                  f"results in {paths['results']}")
        return {"results": results, "summary": summary, "paths": paths}

    @staticmethod
    def summarize(results: pd.DataFrame) -> pd.DataFrame:
        ok = results[results["error"] == ""]
        keys = results[["scenario", "method"]].drop_duplicates()
        rows = []
        for scenario, method in keys.itertuples(index=False):
            block = ok[(ok["scenario"] == scenario) & (ok["method"] == method)]
            rows.append({
                "scenario": scenario,
                "method": method,
                "rmse": block["rmse"].mean(),
                "coverage": block["coverage"].mean(),
                "crps": block["crps"].mean(),
                "fit_seconds": block["fit_seconds"].mean(),
                "jitter_escalations": int(block["jitter_escalations"].sum()),
                "clamped": int(block["clamped"].sum()),
                "n_ok": len(block),
            })
        return pd.DataFrame(rows, columns=["scenario", "method", "rmse", "coverage", "crps", "fit_seconds",
                                           "jitter_escalations", "clamped", "n_ok"])

    def certify(self, train: Dataset, test: Dataset, cls: MeasureClassSpec, tau: float, delta: float,
                L_f: float, config: RunConfig, method: str = "wgp", seed: int = 0,
                direction: Optional[Sequence[float]] = None):
        """
        Fit a 1D p=1 transport GP, build its uniform-band certificate and check
        the conservative-interval condition at every test input.

        With `direction`, both splits are first projected onto that unit vector.
        """
        if direction is not None:
            v = make_basis([direction]).directions[0]
            train, test = (Dataset(tuple(Group(g.group_id, c, g.y) for g, c in
                                         zip(ds.groups, projected_clouds(ds.clouds, v))),
                                   ds.latent, ds.name, ds.split) for ds in (train, test))
        if train.dim != 1 or test.dim != 1:
            raise UnsupportedCaseError("certificates cover 1D measures only (project with a direction first)")
        if method not in ("wgp", "pwa"):
            raise UnsupportedCaseError(f"certificates need a WGP/PWA model, got {method!r}")
        settings = config.settings(method)
        if settings.p != 1:
            raise UnsupportedCaseError(f"certificates need p = 1, got p = {settings.p}")

        # in 1D, PWA and WGP are the same kernel
        template = KernelSpec(KernelFamily.WGP, p=1.0)
        self._log(f"[Certify] Fitting WGP (p=1) on {len(train)} groups")
        hyper = optimize_hyperparams(train.clouds, train.y, template, config.optimizer(seed))
        model = fit(train.clouds, train.y, hyper.spec, hyper.noise)
        cert = certify_model(model, cls, tau, delta, L_f)
        self._log(f"[Certify] net size {cert.net_size}, beta={cert.beta:.5f}, gamma={cert.gamma:.5f}")

        z = float(-ndtri(config.alpha / 2.0))
        preds = predict_many(model, test.clouds)
        rows = []
        for g, pred, latent in zip(test.groups, preds, test.latent or [None] * len(test)):
            verdict = conservative_condition(z, cert, pred.sd)
            row = {"group_id": g.group_id, "mean": pred.mean, "sigma_n": pred.sd,
                   "halfwidth": band_halfwidth(cert, pred.sd), "z": z,
                   "conservative": verdict.holds, "margin": verdict.margin}
            if latent is not None and "f" in latent:
                row["f"] = latent["f"]
                row["inside_band"] = bool(abs(latent["f"] - pred.mean) <= row["halfwidth"])
            rows.append(row)
        verdicts = pd.DataFrame(rows)

        cert_file = write_text(cert.to_record(), self._path("certificate.txt"))
        verdict_file = save_frame(verdicts, self._path("verdicts.csv"))
        model_file = write_record({**spec_record(hyper.spec), "noise": hyper.noise,
                                   "lml": log_marginal_likelihood(model)}, self._path("certified_model.txt"))
        held = int(verdicts["conservative"].sum())
        self._log(f"[Certify] ✅ conservative at {held}/{len(verdicts)} test inputs -> {cert_file}")
        return {"certificate": cert, "verdicts": verdicts,
                "paths": {"certificate": cert_file, "verdicts": verdict_file, "model": model_file}}

    def load_split(self, path: str, split: str = "") -> Dataset:
        return load_dataset(path, split=split)
