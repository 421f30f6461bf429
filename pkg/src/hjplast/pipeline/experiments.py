"""Experiment configuration, presets and the gen -> train -> simulate -> report stages.

All artifacts live under one output directory::

    data/      elastic_<material>.csv, yield.csv (+ .json), flow.csv, rays.csv
    models/    energy_<material>_<arch>_<mode>.json, yield.json, flow.json, baseline.json
    curves/    loss histories per trained network
    paths/     <protocol>__<model>.csv stress paths
    reports/   metrics.csv, energy_summary.csv
    plots/     SVG line charts

Every CSV is a pure function of the configuration, seed included.
"""
from __future__ import annotations

import configparser
import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import matlib
from ..levelset import LevelSetDataset
from ..network import Architecture, MinMaxScaler, NetworkModel
from ..returnmap import (MaterialModel, NetworkEnergy, NetworkYield, OracleEnergy,
                         TransformedYield, analytic_j2_model, j2_initial_yield, synthetic_yield)
from ..training import (EnergyLoss, EnergyLossSpec, FlowLoss, NadamConfig, YieldLoss,
                        YieldLossSpec, fit, split_indices)
from . import baseline as bl
from . import datasets as ds
from . import protocols as pr
from .io import read_table, write_json, write_line_svg, write_table

log = logging.getLogger(__name__)

DEFAULTS = {
    "experiment": {"name": "custom", "seed": 0},
    "data": {"energies": "linear", "resolution": 50, "yield_material": "j2",
             "n_angles": 140, "n_snapshots": 10, "xi_max": 0.25, "n_steps": 300},
    "energy": {"runs": "linear:dmmdmd:H2", "model": "linear:dmmdmd:H2", "epochs": 1000,
               "batch_size": 32, "width": 100, "activation": "relu", "val_fraction": 0.1},
    "yield": {"enabled": True, "architecture": "dmmdmd", "epochs": 300, "batch_size": 128,
              "width": 100, "gamma_rotation": 0.0, "gamma_eikonal": 0.0, "w_nnp": 0.0,
              "boundary_weight": 5.0, "val_fraction": 0.1},
    "flow": {"enabled": False, "architecture": "dmdd", "epochs": 200, "batch_size": 128,
             "width": 100, "w_nnp": 0.0, "val_fraction": 0.1},
    "simulate": {"oracle": "j2", "models": "oracle,framework", "protocols":
                 "monotonic,load-unload,cyclic", "angles_deg": "30,100,200", "amplitude": 0.25,
                 "n_steps": 300, "cyclic_schedule": "0.06,0.07,0.08", "hardening": "isotropic",
                 "window": 0.05},
    "baseline": {"enabled": False, "epochs": 500, "batch_size": 64, "width": 100,
                 "ray_stride": 5, "step_stride": 2},
}

PRESETS = {
    "benchmark1": {
        "experiment": {"name": "benchmark1"},
        "data": {"energies": "linear,mcc", "yield_material": "none"},
        "energy": {"runs": "linear:ddd:H2,linear:dmdd:H2,linear:dmdmd:H2,linear:dmmdmd:H2,"
                           "mcc:dmmdmd:L2,mcc:dmmdmd:H1,mcc:dmmdmd:H2",
                   "model": "none"},
        "yield": {"enabled": False},
        "simulate": {"oracle": "none", "models": ""},
    },
    "appendixD": {
        "experiment": {"name": "appendixD"},
        "baseline": {"enabled": True},
        "simulate": {"models": "oracle,framework,baseline"},
    },
    "synthetic": {
        "experiment": {"name": "synthetic"},
        "data": {"yield_material": "synthetic", "xi_max": 0.1},
        "yield": {"w_nnp": 1.0},
        "simulate": {"oracle": "synthetic", "amplitude": 0.15,
                     "cyclic_schedule": "0.05,0.06"},
    },
    "fictitious": {
        "experiment": {"name": "fictitious"},
        "data": {"energies": "", "yield_material": "none"},
        "energy": {"runs": "", "model": "none"},
        "yield": {"enabled": False},
        "simulate": {"oracle": "fictitious", "models": "oracle", "hardening": "fictitious",
                     "amplitude": 0.5, "cyclic_schedule": "0.4,0.5"},
    },
}


class ConfigError(ValueError):
    pass


def _coerce(default, raw, where):
    if isinstance(raw, type(default)) and not isinstance(raw, str):
        return raw
    text = str(raw).strip()
    try:
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"{where}: cannot read {text!r} as {type(default).__name__}") from None
    return text


def _split(text):
    return [t.strip() for t in str(text).split(",") if t.strip()]


@dataclass
class ExperimentConfig:
    sections: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def __getitem__(self, key):
        return self.sections[key]

    @property
    def seed(self):
        return self.sections["experiment"]["seed"]

    @property
    def name(self):
        return self.sections["experiment"]["name"]

    def update(self, section, key, value):
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section [{section}]")
        if key not in DEFAULTS[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        self.sections[section][key] = _coerce(DEFAULTS[section][key], value, f"{section}.{key}")

    def apply(self, overrides):
        for section, items in overrides.items():
            for k, v in items.items():
                self.update(section, k, v)
        return self

    @classmethod
    def from_preset(cls, name):
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return cls().apply(PRESETS[name])

    def read(self, path):
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise ConfigError(f"cannot read config file {path}")
        for section in parser.sections():
            for k, v in parser.items(section):
                self.update(section, k, v)
        return self

    def set_items(self, items):
        """Apply ``section.key=value`` strings."""
        for item in items or ():
            if "=" not in item or "." not in item.split("=", 1)[0]:
                raise ConfigError(f"override {item!r} is not section.key=value")
            lhs, value = item.split("=", 1)
            section, key = lhs.split(".", 1)
            self.update(section.strip(), key.strip(), value.strip())
        return self

    def validate(self):
        s = self.sections
        for run in _split(s["energy"]["runs"]) + [s["energy"]["model"]]:
            if run == "none":
                continue
            parts = run.split(":")
            if len(parts) != 3:
                raise ConfigError(f"energy run {run!r} is not material:architecture:mode")
            mat, arch, mode = parts
            if mat not in matlib.ENERGIES:
                raise ConfigError(f"unknown energy material {mat!r}")
            Architecture.from_name(arch, 2)
            EnergyLossSpec(mode)
        for mat in _split(s["data"]["energies"]):
            if mat not in matlib.ENERGIES:
                raise ConfigError(f"unknown energy material {mat!r}")
        if s["data"]["yield_material"] not in ("j2", "synthetic", "none"):
            raise ConfigError("data.yield_material must be j2, synthetic or none")
        if s["simulate"]["oracle"] not in ("j2", "synthetic", "fictitious", "none"):
            raise ConfigError("simulate.oracle must be j2, synthetic, fictitious or none")
        for kind in _split(s["simulate"]["protocols"]):
            if kind not in pr.KINDS:
                raise ConfigError(f"unknown protocol {kind!r}")
        for m in _split(s["simulate"]["models"]):
            if m not in ("oracle", "framework", "baseline"):
                raise ConfigError(f"unknown model {m!r}")
        if s["simulate"]["hardening"] not in matlib.HARDENING_VARIANTS:
            raise ConfigError(f"unknown hardening variant {s['simulate']['hardening']!r}")
        for sec in ("yield", "flow"):
            Architecture.from_name(s[sec]["architecture"], 3)
        if not 0 <= s["energy"]["val_fraction"] < 1:
            raise ConfigError("val_fraction must lie in [0, 1)")
        return self

    def to_ini(self):
        lines = []
        for sec, items in self.sections.items():
            lines.append(f"[{sec}]")
            lines += [f"{k} = {v}" for k, v in items.items()]
            lines.append("")
        return "\n".join(lines)


def load_config(preset=None, path=None, seed=None, overrides=()):
    cfg = ExperimentConfig.from_preset(preset) if preset else ExperimentConfig()
    if path:
        cfg.read(path)
    cfg.set_items(overrides)
    if seed is not None:
        cfg.update("experiment", "seed", seed)
    return cfg.validate()


# --------------------------------------------------------------------------
# helpers


def _meta(cfg, **extra):
    return {"experiment": cfg.name, "seed": cfg.seed, **extra}


def _nadam(section, seed):
    return NadamConfig(batch_size=section["batch_size"], epochs=section["epochs"], seed=seed,
                       val_fraction=section["val_fraction"])


def make_network(arch_name, table, inputs, outputs, seed, val_fraction, width=100,
                 activation="relu"):
    """Network whose scalers are fitted on the training split that ``fit`` will use."""
    n = len(table[inputs[0]])
    tr, _ = split_indices(n, val_fraction, seed)
    x = np.column_stack([np.asarray(table[c], dtype=float)[tr] for c in inputs])
    y = np.column_stack([np.asarray(table[c], dtype=float)[tr] for c in outputs])
    arch = Architecture.from_name(arch_name, len(inputs), len(outputs), width, activation)
    return NetworkModel.create(arch, seed, MinMaxScaler.fit(x), MinMaxScaler.fit(y))


def yield_oracle_model(name, hardening="isotropic"):
    elastic = OracleEnergy(matlib.LinearElastic())
    if name == "j2":
        return analytic_j2_model()
    if name == "synthetic":
        return MaterialModel(elastic, synthetic_yield(), name="synthetic-analytic")
    if name == "fictitious":
        return MaterialModel(OracleEnergy(matlib.FictitiousElastic()),
                             TransformedYield(j2_initial_yield(), hardening), name="fictitious")
    raise ConfigError(f"no oracle named {name!r}")


def energy_path(out, run):
    mat, arch, mode = run.split(":")
    return Path(out) / "models" / f"energy_{mat}_{arch}_{mode}.json"


def train_energy_network(table, material, arch, mode, section, seed):
    spec = EnergyLossSpec(mode)
    loss = EnergyLoss(spec)
    net = make_network(arch, table, list(loss.inputs), ["psi"], seed, section["val_fraction"],
                       section["width"], section["activation"])
    net.meta.update({"role": "energy", "material": material, "mode": mode, "seed": seed})
    report = fit(net, table, loss, _nadam(section, seed))
    return net, report


def train_yield_network(dataset, section, seed):
    spec = YieldLossSpec(gamma_rotation=section["gamma_rotation"],
                         gamma_eikonal=section["gamma_eikonal"], w_nnp=section["w_nnp"],
                         boundary_weight=section["boundary_weight"], rho_bar=dataset.rho_bar)
    table = dataset.table()
    net = make_network(section["architecture"], table, ["rho", "theta", "xi"], ["phi_zeta"],
                       seed, section["val_fraction"], section["width"])
    net.meta.update({"role": "yield", "rho_bar": dataset.rho_bar, "xi_max": dataset.xi_max,
                     "seed": seed})
    report = fit(net, table, YieldLoss(spec), _nadam(section, seed))
    return net, report


def train_flow_network(flow, section, seed, rho_bar=1.0):
    spec = YieldLossSpec(w_nnp=section["w_nnp"], rho_bar=rho_bar)
    net = make_network(section["architecture"], flow, list(FlowLoss.inputs), FlowLoss.columns,
                       seed, section["val_fraction"], section["width"])
    net.meta.update({"role": "flow", "seed": seed})
    report = fit(net, flow, FlowLoss(spec), _nadam(section, seed))
    return net, report


def framework_model(out, cfg):
    out = Path(out)
    energy = NetworkModel.load(energy_path(out, cfg["energy"]["model"]))
    ynet = NetworkModel.load(out / "models" / "yield.json")
    yfn = NetworkYield(ynet, ynet.meta["rho_bar"], ynet.meta["xi_max"])
    flow = None
    if cfg["flow"]["enabled"]:
        flow = NetworkModel.load(out / "models" / "flow.json")
    return MaterialModel(NetworkEnergy(energy), yfn, flow, name="framework")


def build_protocols(cfg):
    s = cfg["simulate"]
    out = []
    sched = tuple(float(v) for v in _split(s["cyclic_schedule"]))
    for k, deg in enumerate(_split(s["angles_deg"])):
        th = np.radians(float(deg))
        for kind in _split(s["protocols"]):
            if kind == "monotonic":
                p = pr.monotonic(th, s["amplitude"], s["n_steps"])
            elif kind == "load-unload":
                p = pr.load_unload(th, s["amplitude"], s["n_steps"], seed=cfg.seed + k)
            else:
                p = pr.cyclic(th, sched, s["n_steps"])
            out.append(p)
    return out


# --------------------------------------------------------------------------
# stages


def stage_gen_data(cfg, out):
    out = Path(out)
    d = cfg["data"]
    written = []
    for mat in _split(d["energies"]):
        spec = ds.ElasticDatasetSpec.for_material(mat, d["resolution"])
        table = ds.gen_elastic_dataset(spec, matlib.ENERGIES[mat]())
        written.append(write_table(out / "data" / f"elastic_{mat}.csv", table,
                                   _meta(cfg, material=mat, units="-,-,kPa,kPa,kPa,kPa,kPa,kPa")))
    if d["yield_material"] != "none":
        model = yield_oracle_model(d["yield_material"])
        ex = ds.gen_yield_dataset(model, d["n_angles"], d["n_snapshots"], d["xi_max"],
                                  d["n_steps"], meta={"seed": cfg.seed})
        written.append(ex.dataset.save(out / "data" / "yield.csv", _meta(cfg)))
        written.append(write_table(out / "data" / "flow.csv", ex.flow, _meta(cfg)))
        written.append(write_table(out / "data" / "rays.csv", ex.rays, _meta(cfg)))
    return written


def _write_curve(report, path, cfg, **extra):
    report.to_csv(path, _meta(cfg, **extra))
    return path


def stage_train_energy(cfg, out):
    out = Path(out)
    e = cfg["energy"]
    rows = {k: [] for k in ("material", "architecture", "mode", "epochs", "total", "value",
                            "gradient", "hessian", "val_total", "initial_total")}
    written = []
    for run in _split(e["runs"]):
        mat, arch, mode = run.split(":")
        table, _ = read_table(out / "data" / f"elastic_{mat}.csv")
        net, report = train_energy_network(table, mat, arch, mode, e, cfg.seed)
        log.info("energy %s trained in %.1f s", run, report.wall_time)
        written.append(net.save(energy_path(out, run)))
        (out / "curves").mkdir(parents=True, exist_ok=True)
        written.append(_write_curve(report, out / "curves" / f"energy_{mat}_{arch}_{mode}.csv",
                                    cfg, run=run))
        last = report.history[-1]
        for k, v in (("material", mat), ("architecture", arch), ("mode", mode),
                     ("epochs", e["epochs"]), ("initial_total", report.history[0]["total"])):
            rows[k].append(v)
        for k in ("total", "value", "gradient", "hessian", "val_total"):
            rows[k].append(last[k])
    if rows["material"]:
        written.append(write_table(out / "reports" / "energy_summary.csv", rows, _meta(cfg)))
    return written


def stage_train_yield(cfg, out):
    out = Path(out)
    if not cfg["yield"]["enabled"]:
        return []
    dataset = LevelSetDataset.load(out / "data" / "yield.csv")
    net, report = train_yield_network(dataset, cfg["yield"], cfg.seed)
    log.info("yield network trained in %.1f s", report.wall_time)
    (out / "curves").mkdir(parents=True, exist_ok=True)
    return [net.save(out / "models" / "yield.json"),
            _write_curve(report, out / "curves" / "yield.csv", cfg)]


def stage_train_flow(cfg, out):
    out = Path(out)
    if not cfg["flow"]["enabled"]:
        return []
    flow, _ = read_table(out / "data" / "flow.csv")
    dataset = LevelSetDataset.load(out / "data" / "yield.csv")
    net, report = train_flow_network(flow, cfg["flow"], cfg.seed, dataset.rho_bar)
    (out / "curves").mkdir(parents=True, exist_ok=True)
    return [net.save(out / "models" / "flow.json"),
            _write_curve(report, out / "curves" / "flow.csv", cfg)]


def _baseline(cfg, out):
    out = Path(out)
    path = out / "models" / "baseline.json"
    if path.exists():
        return bl.StepDenseBaseline(NetworkModel.load(path))
    b = cfg["baseline"]
    rays, _ = read_table(out / "data" / "rays.csv")
    paths = ds.ray_paths(rays)[::b["ray_stride"]]
    paths = [(e[::b["step_stride"]], s[::b["step_stride"]]) for e, s in paths]
    nadam = NadamConfig(batch_size=b["batch_size"], epochs=b["epochs"], seed=cfg.seed)
    model, report = bl.train_baseline_stepdense(paths, nadam, cfg.seed, b["width"])
    model.model.save(path)
    (out / "curves").mkdir(parents=True, exist_ok=True)
    _write_curve(report, out / "curves" / "baseline.csv", cfg)
    return model


def stage_simulate(cfg, out):
    out = Path(out)
    s = cfg["simulate"]
    models = {}
    names = _split(s["models"])
    if "oracle" in names and s["oracle"] != "none":
        models["oracle"] = yield_oracle_model(s["oracle"], s["hardening"])
    if "framework" in names:
        models["framework"] = framework_model(out, cfg)
    written = []
    for p in build_protocols(cfg):
        for key, model in models.items():
            table = pr.run_path_driver(model, p)
            written.append(write_table(out / "paths" / f"{p.name}__{key}.csv", table,
                                       _meta(cfg, protocol=p.kind, model=key)))
        if "baseline" in names:
            sig = _baseline(cfg, out).rollout(p.strains())
            table = pr.path_columns(p.strains(), sig, p.direction, {"s": p.amplitudes()})
            written.append(write_table(out / "paths" / f"{p.name}__baseline.csv", table,
                                       _meta(cfg, protocol=p.kind, model="baseline")))
    return written


def compare_paths(reference, other, reversals, window=0.05, g_ref=None):
    """RMS q error and unloading-slope error of ``other`` against ``reference``."""
    slope_ref = 3.0 * (g_ref if g_ref is not None else matlib.LinearElasticParams().G)
    slopes = pr.unloading_slopes(other, reversals, window)
    err = max((abs(v - slope_ref) / slope_ref for v in slopes), default=float("nan"))
    return {"rms_q": pr.rms(reference["q"], other["q"]), "peak_q": float(np.max(reference["q"])),
            "slope_error": err, "n_unload": len(slopes)}


def stage_compare(cfg, out):
    out = Path(out)
    s = cfg["simulate"]
    rows = {k: [] for k in ("protocol", "model", "rms_q", "rms_q_over_sigma_y", "peak_q",
                            "slope_error", "n_unload")}
    names = [m for m in _split(s["models"]) if m != "oracle"]
    sy = matlib.J2Params().sigma_y0
    for p in build_protocols(cfg):
        ref_path = out / "paths" / f"{p.name}__oracle.csv"
        if not ref_path.exists():
            continue
        ref, _ = read_table(ref_path)
        for key in ["oracle"] + names:
            other, _ = read_table(out / "paths" / f"{p.name}__{key}.csv")
            m = compare_paths(ref, other, p.reversals(), s["window"])
            rows["protocol"].append(p.name)
            rows["model"].append(key)
            rows["rms_q_over_sigma_y"].append(m["rms_q"] / sy)
            for k in ("rms_q", "peak_q", "slope_error", "n_unload"):
                rows[k].append(m[k])
    if not rows["protocol"]:
        return []
    return [write_table(out / "reports" / "metrics.csv", rows, _meta(cfg))]


def stage_export(cfg, out):
    out = Path(out)
    written = []
    for curve in sorted((out / "curves").glob("*.csv")) if (out / "curves").exists() else []:
        cols, _ = read_table(curve)
        series = {k: (cols["epoch"], np.log10(np.maximum(cols[k], 1e-300)))
                  for k in ("total", "val_total") if k in cols}
        written.append(write_line_svg(out / "plots" / f"loss_{curve.stem}.svg", series,
                                      "epoch", "log10 loss", curve.stem))
    paths = sorted((out / "paths").glob("*.csv")) if (out / "paths").exists() else []
    groups = {}
    for p in paths:
        groups.setdefault(p.stem.split("__")[0], []).append(p)
    for name, files in groups.items():
        qs, pi = {}, {}
        for f in files:
            cols, _ = read_table(f)
            label = f.stem.split("__")[1]
            qs[label] = (cols["es_signed"], cols["q_signed"])
            pi[label] = (cols["pi_x"], cols["pi_y"])
        written.append(write_line_svg(out / "plots" / f"{name}_q.svg", qs,
                                      "signed shear strain", "signed q (kPa)", name))
        written.append(write_line_svg(out / "plots" / f"{name}_pi.svg", pi,
                                      "pi-plane x (kPa)", "pi-plane y (kPa)", name))
    return written


STAGES = {
    "gen-data": stage_gen_data,
    "train-energy": stage_train_energy,
    "train-yield": stage_train_yield,
    "train-flow": stage_train_flow,
    "simulate": stage_simulate,
    "compare": stage_compare,
    "export": stage_export,
}


def run_experiment(cfg, out, dry_run=False, stages=None):
    """Run the named stages (all by default) in order; returns written paths."""
    cfg.validate()
    order = list(stages or STAGES)
    if dry_run:
        return []
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.to_ini())
    written = []
    for name in order:
        try:
            written += STAGES[name](cfg, out) or []
        except (OSError, KeyError, ValueError, RuntimeError) as exc:
            raise RuntimeError(f"stage {name} failed: {exc}") from exc
    write_json(out / "manifest.json", {"experiment": cfg.name, "seed": cfg.seed,
                                       "stages": order,
                                       "files": sorted(str(Path(p).relative_to(out))
                                                       for p in written)})
    return written
