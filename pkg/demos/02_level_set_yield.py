# coding: utf-8

# # Yield surfaces as level sets
#
# A yield surface sampled on the pi-plane becomes a signed distance field.
# Stacking fields at increasing plastic strain gives a function of
# (rho, theta, xi) that a network can learn.

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from pathlib import Path

from hjplast.levelset import YieldSurfaceSnapshot, fast_march_reinitialize
from hjplast.matlib import J2Params, smoothed_hexagon
from hjplast.pipeline import datasets as ds
from hjplast.pipeline import experiments as ex
from hjplast.returnmap import NetworkYield, analytic_j2_model

OUT = Path(__file__).with_name("output")
OUT.mkdir(exist_ok=True)

# ## Fast marching on a polar grid
#
# The smoothed hexagon is not a circle, so the distance field is not simply
# rho - R. The fast-marching solve recovers |grad phi| = 1 everywhere.

snap = YieldSurfaceSnapshot.from_function(lambda t: 80.0 * smoothed_hexagon(t), 0.0, 720)
field = fast_march_reinitialize(snap, rho_max=160.0)
print("median eikonal residual:", np.median(field.eikonal_residual()[1:-1]))

# close the periodic grid so the contours do not break at theta = 0
theta = np.append(field.theta, 2 * np.pi)
phi = np.hstack([field.phi, field.phi[:, :1]])
R, T = np.meshgrid(field.rho, theta, indexing="ij")
fig, ax = plt.subplots(figsize=(4.5, 4.5))
cs = ax.contour(R * np.cos(T), R * np.sin(T), phi, levels=np.arange(-60, 81, 20))
ax.clabel(cs, fontsize=7)
ax.set_aspect("equal")
ax.set_title("signed distance to a smoothed hexagon")
fig.savefig(OUT / "hexagon_sdf.png", dpi=120)

# ## Learning J2 hardening from monotonic rays
#
# The oracle is loaded along a few rays in the pi-plane. Snapshots of the
# surface at uniform xi become level-set rows, and a small network fits them.

explo = ds.gen_yield_dataset(analytic_j2_model(), n_angles=48, n_snapshots=5, xi_max=0.1,
                             n_steps=150)
sec = {**ex.ExperimentConfig()["yield"], "epochs": 150, "width": 48, "gamma_eikonal": 1e-2}
net, report = ex.train_yield_network(explo.dataset, sec, seed=0)
yf = NetworkYield(net, net.meta["rho_bar"], net.meta["xi_max"])
print("final losses:", {k: report.history[-1][k] for k in ("value", "eikonal")})

J2 = J2Params()
th = np.linspace(0, 2 * np.pi, 181)
fig, ax = plt.subplots(figsize=(4.5, 4.5))
for xi in (0.0, 0.05, 0.1):
    exact = np.sqrt(2 / 3) * (J2.sigma_y0 + J2.H * np.sqrt(2 / 3) * xi)
    # zero crossing along each ray by one Newton step from the exact radius
    r = np.array([exact - yf.value(exact, t, xi) / yf.polar(exact, t, xi)[1][0] for t in th])
    ax.plot(r * np.cos(th), r * np.sin(th), label=f"network, xi={xi}")
    ax.plot(exact * np.cos(th), exact * np.sin(th), "k:", lw=0.8)
ax.set_aspect("equal")
ax.legend(fontsize=7)
fig.savefig(OUT / "j2_surfaces.png", dpi=120)
