# coding: utf-8

# # The whole pipeline in one call
#
# Presets bundle data generation, training, simulation, comparison and
# export. This runs a shrunken J2 verification with the black-box baseline,
# the same thing `hjplast run --preset appendixD` does at full size.

from pathlib import Path

from hjplast.pipeline import experiments as ex
from hjplast.pipeline.io import read_table

OUT = Path(__file__).with_name("output") / "appendixD_small"

cfg = ex.load_config("appendixD", seed=0, overrides=[
    "data.n_angles=24", "data.n_snapshots=5", "data.xi_max=0.15", "data.n_steps=150",
    "data.resolution=20", "energy.epochs=80", "energy.width=32", "yield.epochs=60",
    "yield.width=32", "baseline.epochs=20", "baseline.width=32"])
written = ex.run_experiment(cfg, OUT)
print(len(written), "files written under", OUT)

metrics, _ = read_table(OUT / "reports" / "metrics.csv")
for row in zip(metrics["protocol"], metrics["model"], metrics["rms_q_over_sigma_y"],
               metrics["slope_error"]):
    print("{:18s} {:10s} rms/sy={:.4f} slope_err={:.3f}".format(*row))
