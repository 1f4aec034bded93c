from pipeline import BenchmarkPipeline, RunConfig

# Initialize pipeline
pipeline = BenchmarkPipeline("./otgp_runs/smoke")
config = RunConfig(scenario="1D-EIV", methods=("reg", "pwa"), seeds=(0,), restarts=2, max_iter=100)
result = pipeline.benchmark(config)
print(result["summary"])
