# coding: utf-8

# # Sobolev training of a hyperelastic energy
#
# The stored energy psi(ev, es) is the only thing the network learns. Stress
# and stiffness are its first and second derivatives, so we train on them too.

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from pathlib import Path

from hjplast import autodiff as ad
from hjplast.matlib import LinearElastic, ModifiedCamClay
from hjplast.pipeline import datasets as ds
from hjplast.pipeline import experiments as ex

OUT = Path(__file__).with_name("output")
OUT.mkdir(exist_ok=True)

# ## Derivatives from the tape
#
# The Cam-Clay energy is written once as a graph. Pressure, shear stress and
# the 2x2 stiffness all come out of the autodiff engine.

law = ModifiedCamClay()
psi, grad, hess = ad.evaluate_with_hessian(law.psi_invariant, [-0.01, 0.005])
print("psi =", psi)
print("p, q =", grad)
print("D =\n", hess)

# ## ReLU networks have no curvature
#
# A plain dense stack is piecewise linear, so its Hessian is zero and an H2
# loss cannot move the stiffness error. Squaring layers fix that.

table = ds.gen_elastic_dataset(ds.ElasticDatasetSpec(resolution=20), LinearElastic())
sec = {**ex.ExperimentConfig()["energy"], "epochs": 60, "width": 32}

curves = {}
for arch in ("ddd", "dmmdmd"):
    net, report = ex.train_energy_network(table, "linear", arch, "H2", sec, seed=0)
    curves[arch] = [row["hessian"] for row in report.history]
    print(arch, "stiffness loss", curves[arch][0], "->", curves[arch][-1])

fig, ax = plt.subplots(figsize=(5, 3.5))
for arch, c in curves.items():
    ax.semilogy(c, label=arch)
ax.set_xlabel("epoch")
ax.set_ylabel("stiffness loss")
ax.legend()
fig.tight_layout()
fig.savefig(OUT / "stiffness_loss.png", dpi=120)
