"""Command-line front end.

Each command reads one JSON scenario document; ``--set path=value`` overrides
individual fields (``value`` is parsed as JSON when possible).  Artifacts are
written to the output directory and embed the configuration hash and seed.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from .ets_design import (EtsDesign, EtsParams, NoFeasibleH, SingularG, build_model_codesign,
                         build_theorem1, build_theorem2, design, max_h_search)
from .ident import RankDeficient, consistent_with_data, least_squares_id
from .lmi import NumericalBreakdown
from .matrixcore import ConvergenceFailure, DimensionMismatch
from .simulate import run_ets, run_sts
from .sts import InertiaMismatch, LiftCache, SingularTheta, StsParams, prepare_lifted
from .sysdata import (GapError, InsufficientTail, LtiModel, ParseError, SchemaError, UnboundedSet,
                      assemble_theta, box_noise_bound, generate_experiment, ingest_csv)

EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


BUILDERS = ("theorem1", "theorem2-fixedK", "theorem2-codesign", "model-codesign")


# configuration --------------------------------------------------------------
@dataclass
class ScenarioConfig:
    raw: dict
    seed: int | None

    @property
    def digest(self) -> str:
        blob = json.dumps({"config": self.raw, "seed": self.seed}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def section(self, name) -> dict:
        return self.raw.get(name, {}) or {}

    def plant(self) -> LtiModel:
        p = self.section("plant")
        srcs = [k for k in ("continuous", "discrete") if k in p]
        if len(srcs) != 1:
            raise ConfigError("plant needs exactly one of 'continuous' or 'discrete'")
        if srcs[0] == "continuous":
            c = p["continuous"]
            return LtiModel.from_continuous(c["A"], c["B"], float(c["T"]))
        return LtiModel(np.array(p["discrete"]["A"], dtype=float), np.array(p["discrete"]["B"], dtype=float))

    def ets_params(self, **override) -> EtsParams:
        d = dict(self.section("ets"))
        d.update(override)
        try:
            return EtsParams(**d)
        except TypeError as exc:
            raise ConfigError(f"bad ets section: {exc}") from exc

    def need_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("--seed is required for workflows that generate data")
        return self.seed


def _set_path(d: dict, path: str, value):
    keys = path.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
    d[keys[-1]] = value


def load_config(path, overrides=(), seed=None) -> ScenarioConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    raw = copy.deepcopy(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be path=value: {item}")
        k, v = item.split("=", 1)
        try:
            val = json.loads(v)
        except json.JSONDecodeError:
            val = v
        _set_path(raw, k, val)
    data_file = raw.get("data", {}).get("file")
    if data_file and not os.path.exists(data_file):
        raise ConfigError(f"data file not found: {data_file}")
    return ScenarioConfig(raw, seed)


# shared steps -----------------------------------------------------------------
def dataset(cfg: ScenarioConfig, wbar=None):
    """Experiment data and its noise bound from the ``data`` section."""
    d = cfg.section("data")
    wbar = float(d.get("wbar", 0.01) if wbar is None else wbar)
    rho = int(d.get("rho", 800))
    B_w = np.array(d.get("B_w", [[0.01, 0.0], [0.0, 0.01]]), dtype=float)
    if d.get("file"):
        data = ingest_csv(d["file"], B_w=B_w, rho=rho)
    else:
        model = cfg.plant()
        data = generate_experiment(model, B_w, rho, wbar, cfg.need_seed(),
                                   u_range=tuple(d.get("u_range", (-1.0, 1.0))),
                                   tail=int(d.get("tail", 0))).data
    return data, box_noise_bound(wbar, data.rho, data.n_w), wbar


def _stamp(cfg: ScenarioConfig, payload: dict) -> dict:
    return {"config_hash": cfg.digest, "seed": cfg.seed, **payload}


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)


def _outdir(cfg: ScenarioConfig, args) -> str:
    out = args.output_dir or cfg.raw.get("output_dir", "out")
    os.makedirs(out, exist_ok=True)
    return out


def _design_from_config(cfg: ScenarioConfig, model_override=None):
    sec = cfg.section("design")
    builder = sec.get("builder", "theorem2")
    K = np.atleast_2d(sec["K"]) if sec.get("K") is not None else None
    params = cfg.ets_params()
    if builder == "theorem2":
        data, bound, wbar = dataset(cfg)
        rep = assemble_theta(data, bound)
        res = design(lambda hs: build_theorem2(rep, params, hs, K=K), params, "data", K=K)
        res.info.update({"wbar": wbar, "data_digest": data.digest()})
    elif builder == "model-codesign":
        model = model_override or cfg.plant()
        res = design(lambda hs: build_model_codesign(model, params, hs, K=K), params,
                     "model", K=K)
    elif builder == "theorem1":
        if K is None:
            raise ConfigError("theorem1 needs design.K")
        model = model_override or cfg.plant()
        res = design(lambda hs: build_theorem1(model, K, params, hs), params, "analysis", K=K)
    else:
        raise ConfigError(f"unknown design builder {builder!r}")
    return res, params


def _spectral_radius(model, K):
    return float(np.max(np.abs(np.linalg.eigvals(model.A + model.B @ K))))


def _settling(trace, frac=0.05):
    nx = np.linalg.norm(trace.x, axis=1)
    if nx[0] == 0:
        return 0
    above = np.flatnonzero(nx > frac * nx[0])
    return int(above[-1] + 1) if above.size else 0


# commands -----------------------------------------------------------------------
def cmd_maxh(cfg: ScenarioConfig, args) -> int:
    sec = cfg.section("maxh")
    builder = sec.get("builder", "theorem2-fixedK")
    if builder not in BUILDERS:
        raise ConfigError(f"maxh.builder must be one of {BUILDERS}")
    params = cfg.ets_params(periodic=sec.get("periodic", True))
    K = np.atleast_2d(sec["K"]) if sec.get("K") is not None else None
    h_cap = int(sec.get("h_cap", 400))
    stop_after = sec.get("stop_after", 3)
    out = _outdir(cfg, args)
    rows, scans = [], {}

    def run(label, build):
        try:
            r = max_h_search(build, 1, h_cap, stop_after=stop_after, raise_if_none=False)
            rows.append((label, r.h_max if r.h_max is not None else "-"))
            scans[str(label)] = r.to_dict()
        except (NumericalBreakdown, ArithmeticError) as exc:
            rows.append((label, "-"))
            scans[str(label)] = {"error": str(exc)}

    if builder == "theorem1":
        if K is None:
            raise ConfigError("theorem1 needs maxh.K")
        model = cfg.plant()
        run("model", lambda hs: build_theorem1(model, K, params, hs))
    elif builder == "model-codesign":
        model = cfg.plant()
        run("model", lambda hs: build_model_codesign(model, params, hs, K=K))
    else:
        if builder == "theorem2-fixedK" and K is None:
            raise ConfigError("theorem2-fixedK needs maxh.K")
        Kuse = K if builder == "theorem2-fixedK" else None
        for w in sec.get("wbar_list", [0.001, 0.002, 0.005, 0.01, 0.02, 0.05]):
            data, bound, _ = dataset(cfg, wbar=w)
            rep = assemble_theta(data, bound)
            run(w, lambda hs, rep=rep: build_theorem2(rep, params, hs, K=Kuse))
    with open(os.path.join(out, "maxh.csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["wbar", "h_max", "seed", "config_hash"])
        for label, hm in rows:
            wr.writerow([label, hm, cfg.seed, cfg.digest])
    _write_json(os.path.join(out, "maxh_scan.json"), _stamp(cfg, {"builder": builder, "scans": scans}))
    for label, hm in rows:
        print(f"{label}\t{hm}")
    return EXIT_OK


def cmd_design(cfg: ScenarioConfig, args) -> int:
    res, params = _design_from_config(cfg)
    report = {"design": res.to_dict()}
    try:
        model = cfg.plant()
        report["nominal_spectral_radius"] = _spectral_radius(model, res.K)
    except (ConfigError, KeyError):
        pass
    out = _outdir(cfg, args)
    _write_json(os.path.join(out, "design.json"), _stamp(cfg, report))
    print(json.dumps({"K": res.K.tolist(), "Omega": res.Omega.tolist(), "margin": res.margin}))
    return EXIT_OK


def _lift_cache(cfg: ScenarioConfig, sp: StsParams, path=None) -> LiftCache:
    if path:
        return LiftCache.load(path)
    sec = cfg.section("sts")
    data, _, wbar = dataset(cfg)
    return prepare_lifted(data.truncated(int(sec.get("rho", 750))), wbar, sp.s_bar,
                          horizons=sp.horizons)


def _sts_params(cfg: ScenarioConfig, K, Omega) -> StsParams:
    sec = cfg.section("sts")
    ets = cfg.section("ets")
    return StsParams(float(sec.get("sigma1", ets.get("sigma1", 0.0))),
                     float(sec.get("sigma2", ets.get("sigma2", 0.0))), Omega, K,
                     s_bar=int(sec.get("s_bar", 50)), step=int(sec.get("step", 1)))


def cmd_simulate(cfg: ScenarioConfig, args) -> int:
    if not args.design:
        raise ConfigError("simulate needs --design")
    try:
        with open(args.design) as fh:
            blob = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read design file: {exc}") from exc
    des = EtsDesign.from_dict(blob["design"] if "design" in blob else blob)
    sec = cfg.section("simulate")
    model = cfg.plant()
    x0 = np.array(sec.get("x0", [3.0, -2.0]), dtype=float)
    horizon = int(sec.get("horizon", 400))
    mode = sec.get("mode", "ets")
    out = _outdir(cfg, args)
    if mode == "ets":
        params = cfg.ets_params()
        trace, report = run_ets(model, des, params, x0, horizon)
        _write_json(os.path.join(out, "probes.json"), _stamp(cfg, json.loads(report.to_json())))
    elif mode in ("sts-data", "sts-model"):
        sp = _sts_params(cfg, des.K, des.Omega)
        cache = _lift_cache(cfg, sp, args.lift_cache) if mode == "sts-data" else None
        trace = run_sts(model, sp, x0, horizon, cache)
    else:
        raise ConfigError(f"unknown simulate.mode {mode!r}")
    trace.write_csv(os.path.join(out, "trace.csv"))
    with open(os.path.join(out, "plot.csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "norm_x", "eta", "transmitted"])
        wr.writerows(trace.plot_rows(int(sec.get("plot_every", 1))))
    summ = _stamp(cfg, trace.summary() | {"intervals": trace.intervals})
    _write_json(os.path.join(out, "summary.json"), summ)
    print(json.dumps(trace.summary()))
    return EXIT_OK


def cmd_compare_ident(cfg: ScenarioConfig, args) -> int:
    model = cfg.plant()
    data, bound, wbar = dataset(cfg)
    rep = assemble_theta(data, bound)
    params = cfg.ets_params()
    sec = cfg.section("simulate")
    x0 = np.array(sec.get("x0", [3.0, -2.0]), dtype=float)
    horizon = int(sec.get("horizon", 400))
    ident = least_squares_id(data)
    report = {"ident": ident.to_dict(), "ident_in_consistent_set": consistent_with_data(ident, rep)}
    pipelines = {
        "data-driven": (lambda hs: build_theorem2(rep, params, hs), True),
        "identification": (lambda hs: build_model_codesign(ident.model(), params, hs), False),
    }
    out = _outdir(cfg, args)
    sts_sec = cfg.section("sts")
    for name, (build, certified) in pipelines.items():
        des = design(build, params, name)
        tr, probe = run_ets(model, des, params, x0, horizon)
        sp = _sts_params(cfg, des.K, des.Omega)
        if certified:
            cache = prepare_lifted(data.truncated(int(sts_sec.get("rho", 750))), wbar, sp.s_bar,
                                   horizons=sp.horizons)
            trs = run_sts(model, sp, x0, horizon, cache)
        else:
            trs = run_sts(ident.model(), sp, x0, horizon)
            # intervals computed on the identified model, applied to the true plant
            trs = _replay_sts(model, sp, x0, horizon, trs.intervals)
        report[name] = {
            "K": des.K.tolist(), "Omega": des.Omega.tolist(), "certificate": certified,
            "certificate_note": ("robust for every system consistent with the data" if certified
                                 else "nominal only: no guarantee for the true plant"),
            "ets": tr.summary() | {"settling_step": _settling(tr), "probes_passed": probe.passed},
            "sts": trs.summary() | {"settling_step": _settling(trs)},
            "true_spectral_radius": _spectral_radius(model, des.K),
        }
    _write_json(os.path.join(out, "compare_ident.json"), _stamp(cfg, report))
    print(json.dumps({k: {"ets": v["ets"]["transmissions"], "sts": v["sts"]["transmissions"],
                          "certificate": v["certificate"]}
                      for k, v in report.items() if isinstance(v, dict) and "ets" in v}))
    return EXIT_OK


def _replay_sts(model, sp, x0, horizon, intervals):
    """Run the true plant with a precomputed transmission schedule."""
    from .simulate import TriggerTrace
    n = model.n
    x = np.empty((horizon + 1, n))
    x[0] = x0
    xk_hist = np.empty((horizon, n))
    trn = np.zeros(horizon, dtype=np.int8)
    t_next, it, xk = 0, iter(intervals), x[0]
    used = []
    BK = model.B @ sp.K
    for t in range(horizon):
        if t == t_next:
            xk = x[t].copy()
            trn[t] = 1
            s = next(it, sp.horizons[0])
            used.append(s)
            t_next = t + s
        xk_hist[t] = xk
        x[t + 1] = model.A @ x[t] + BK @ xk
    nan = np.full(horizon, np.nan)
    return TriggerTrace("sts-model", horizon, x, xk_hist @ sp.K.T, xk_hist, trn.copy(), trn,
                        np.zeros(horizon), nan, nan.copy(), sp.step, used)


def cmd_lift_cache(cfg: ScenarioConfig, args) -> int:
    sec = cfg.section("sts")
    K = np.atleast_2d(sec.get("K", [[0.0] * cfg.plant().m]))
    sp = StsParams(float(sec.get("sigma1", 0.0)), float(sec.get("sigma2", 0.0)),
                   np.eye(K.shape[1]), K, s_bar=int(sec.get("s_bar", 50)),
                   step=int(sec.get("step", 1)))
    cache = _lift_cache(cfg, sp)
    cache.meta["config_hash"] = cfg.digest
    out = _outdir(cfg, args)
    path = os.path.join(out, "lift_cache.npz")
    cache.save(path)
    print(json.dumps({"path": path, "horizons": sorted(cache.duals), "failures": cache.failures}))
    return EXIT_OK


COMMANDS = {"maxh": cmd_maxh, "design": cmd_design, "simulate": cmd_simulate,
            "compare-ident": cmd_compare_ident, "lift-cache": cmd_lift_cache}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ddtrigger", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("config", help="scenario JSON file")
        sp.add_argument("--seed", type=int, default=None, help="data-generation seed")
        sp.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                        help="override a config field, e.g. data.wbar=0.02")
        sp.add_argument("--output-dir", default=None)
        if name == "simulate":
            sp.add_argument("--design", help="design.json written by the design command")
            sp.add_argument("--lift-cache", default=None, help="npz from lift-cache")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set, args.seed)
        return COMMANDS[args.command](cfg, args)
    except NoFeasibleH as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, ParseError, SchemaError, GapError, InsufficientTail, RankDeficient,
            DimensionMismatch, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, (SingularG, SingularTheta, InertiaMismatch, UnboundedSet)):
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalBreakdown, ConvergenceFailure, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
