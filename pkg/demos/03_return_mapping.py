# coding: utf-8

# # Return mapping along strain paths
#
# A strain-controlled driver pushes a material model along monotonic,
# load-unload and cyclic paths. With the closed-form J2 yield function the
# return map reproduces radial return to round-off.

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from pathlib import Path

from hjplast.pipeline import experiments as ex
from hjplast.pipeline import protocols as pr
from hjplast.returnmap import analytic_j2_model

OUT = Path(__file__).with_name("output")
OUT.mkdir(exist_ok=True)

model = analytic_j2_model()
paths = [pr.monotonic(np.radians(30), 0.25), pr.load_unload(np.radians(100), 0.25, seed=1),
         pr.cyclic(np.radians(200))]

fig, axes = plt.subplots(1, 3, figsize=(11, 3.3))
for ax, p in zip(axes, paths):
    t = pr.run_path_driver(model, p)
    ax.plot(t["es_signed"], t["q_signed"])
    ax.set_title(p.name)
    ax.set_xlabel("signed es")
    slopes = pr.unloading_slopes(t, p.reversals())
    print(p.name, "max Newton iterations", t["iterations"].max(), "unloading slopes", slopes)
axes[0].set_ylabel("signed q [kPa]")
fig.tight_layout()
fig.savefig(OUT / "j2_paths.png", dpi=120)

# ## A custom hardening law
#
# The fictitious preset pairs a quartic shear energy with a radius transform
# rho (1 - eps_p^2)^6 on the initial von Mises surface.

cfg = ex.load_config("fictitious")
fict = ex.yield_oracle_model("fictitious", cfg["simulate"]["hardening"])
fig, ax = plt.subplots(figsize=(4.5, 3.5))
for p in ex.build_protocols(cfg)[:3]:
    t = pr.run_path_driver(fict, p)
    ax.plot(t["es_signed"], t["q_signed"], label=p.name)
ax.legend(fontsize=7)
ax.set_xlabel("signed es")
ax.set_ylabel("signed q [kPa]")
fig.tight_layout()
fig.savefig(OUT / "fictitious_paths.png", dpi=120)
