"""Command-line pipeline: direct problem, kernel, inversion, family sweep, theta."""
import argparse
import copy
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import inversion, kernel, morse, specfun
from .errors import MarchenkoError
from .output import write_csv, write_json

DEFAULTS = {
    "model": {"D": 1.0, "alpha": 2.0 / 3.0, "Re": 2.5, "C": 1.0},
    "k_grid": {"k_min": 1e-9, "k_max": 100.0, "per_decade": 64},
    "kernel": {"tail_start": 30.0, "fit_window": [30.0, 60.0],
               "inverse_check_k": [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0]},
    "nystrom": {"R": 15.0, "finite_panels": 2, "points_per_panel": 64,
                "Delta": 10000.0, "mapped_points": 64},
    "r_grid": {"lo": 0.3, "hi": 12.0, "h": 0.01},
    "s0": {"policy": "theoretical", "value": None, "sweep": [0.0, "theoretical", 100.0],
           "sweep_quantity": "s0_sq"},
    "output_dir": "marchenko_out",
    "tolerances": {"residual": 1e-8, "interpolation": 1e-8, "tail": 1e-9, "match": 1e-3},
}


class ConfigError(Exception):
    pass


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key '{path}{key}'")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"'{path}{key}' must be an object")
            out[key] = _merge(base[key], val, f"{path}{key}.")
        else:
            out[key] = val
    return out


def resolve_config(raw=None):
    cfg = _merge(DEFAULTS, raw or {})
    try:
        morse.MorseModel(**{k: float(v) for k, v in cfg["model"].items()})
    except (MarchenkoError, TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from None
    for name, val in cfg["tolerances"].items():
        if not isinstance(val, (int, float)) or val <= 0:
            raise ConfigError(f"tolerance '{name}' must be positive")
    if cfg["s0"]["policy"] not in ("theoretical", "explicit"):
        raise ConfigError("s0.policy must be 'theoretical' or 'explicit'")
    if cfg["s0"]["policy"] == "explicit" and not isinstance(cfg["s0"]["value"], (int, float)):
        raise ConfigError("s0.value must be a number when s0.policy is 'explicit'")
    if cfg["s0"]["sweep_quantity"] not in ("s0", "s0_sq"):
        raise ConfigError("s0.sweep_quantity must be 's0' or 's0_sq'")
    kg = cfg["k_grid"]
    if not 0 < kg["k_min"] < kg["k_max"] or kg["per_decade"] < 1:
        raise ConfigError("k_grid needs 0 < k_min < k_max and per_decade >= 1")
    rg = cfg["r_grid"]
    if not 0 <= rg["lo"] < rg["hi"] or rg["h"] <= 0:
        raise ConfigError("r_grid needs 0 <= lo < hi and h > 0")
    return cfg


def load_config(path):
    if path is None:
        return resolve_config()
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return resolve_config(raw)


def config_hash(cfg, sections):
    blob = json.dumps({s: cfg[s] for s in sections}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def model_of(cfg):
    return morse.MorseModel(**{k: float(v) for k, v in cfg["model"].items()})


def _outdir(cfg):
    out = Path(cfg["output_dir"])
    write_json(out / "config.resolved.json", cfg)
    return out


def _theoretical_s0_sq(model):
    return kernel.default_bound_terms(model)[0][0]


def _bound_terms(cfg, model):
    if cfg["s0"]["policy"] == "explicit":
        gamma = model.levels[0].gamma
        return ((float(cfg["s0"]["value"]), gamma),)
    return kernel.default_bound_terms(model)


def cmd_direct(cfg):
    model = model_of(cfg)
    out = _outdir(cfg)
    kg = cfg["k_grid"]
    table = morse.phase_table(model, morse.log_grid(kg["k_min"], kg["k_max"], kg["per_decade"]))
    write_csv(out / "phase_table.csv", ["k", "delta", "method"], [table.k, table.delta, table.method])
    levels = [{"n": lv.n, "E": lv.energy, "gamma": lv.gamma} for lv in model.levels]
    report = {"levels": levels, "n_bound": model.n_bound, "y0": model.y0, "a": model.a}
    if model.n_bound == 1:
        leading, integral = morse.norming_constant(model)
        report.update(E0=levels[0]["E"], gamma0=levels[0]["gamma"], s0_sq=leading,
                      s0_sq_integral=integral)
    write_json(out / "levels.json", report)
    a1, a3, a5 = morse.high_k_coefficients(model)
    write_json(out / "scattering.json", {
        "a0_fit": morse.scattering_length(model),
        "a0_low_energy": morse.scattering_length_low_energy(model),
        "a0_wavefunction": morse.scattering_length_from_wavefunction(model),
        "levinson_residual": table.levinson_residual,
        "high_k": {"a1": a1, "a3": a3, "a5": a5},
    })
    return out


def _kernel_rep(cfg, model):
    """Kernel samples cached under the output directory, keyed by a config hash."""
    key = config_hash(cfg, ["model", "k_grid", "kernel", "tolerances"])
    path = Path(cfg["output_dir"]) / "cache" / f"kernel-{key}.npz"
    kc = cfg["kernel"]
    if path.exists():
        data = np.load(path)
        tail = kernel.KernelTail(*[float(v) for v in data["tail"]])
        return kernel.KernelRep(data["x"], data["f"], data["g"], tail, float(data["tail_start"]),
                                _bound_terms(cfg, model), float(data["interp"]), float(data["mismatch"]))
    rep = kernel.build_kernel(model, _bound_terms(cfg, model), kc["tail_start"],
                              tuple(kc["fit_window"]), interp_tol=cfg["tolerances"]["interpolation"],
                              tail_tol=cfg["tolerances"]["tail"])
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp.npz")
    t = rep.tail
    np.savez(tmp, x=rep.sample_grid, f=rep.f_samples, g=rep.g_samples,
             tail=np.array([t.amplitude, t.rate, t.b, t.c, t.d]), tail_start=rep.tail_start,
             interp=rep.interpolation_error, mismatch=rep.tail_mismatch)
    tmp.replace(path)
    return rep


def _fixture_report(rep):
    fix = kernel.load_fixture()
    rows = []
    for which, col, scale in (("f", 0, 1.0), ("g", 1, kernel.FIXTURE_G_SCALE)):
        for seg, (lo, hi) in enumerate(fix.ranges[which]):
            x = np.linspace(lo, hi, 200)
            computed = rep.fg(x)[col]
            fit = kernel.rational_fit_eval(fix, which, x, segment=seg)
            dev = np.abs(computed - scale * fit)
            rows.append({"function": which, "range": [lo, hi], "max_deviation": float(dev.max()),
                         "at_x": float(x[np.argmax(dev)])})
    return {"g_table_scale": kernel.FIXTURE_G_SCALE, "ranges": rows,
            "max_deviation": max(r["max_deviation"] for r in rows)}


def cmd_kernel(cfg):
    model = model_of(cfg)
    out = _outdir(cfg)
    rep = _kernel_rep(cfg, model)
    kernel.export_kernel_csv(rep, out / "kernel.csv")
    t = rep.tail
    write_json(out / "tail_fit.json", {
        "amplitude": t.amplitude, "rate": t.rate, "b": t.b, "c": t.c, "d": t.d,
        "published_b": kernel.PUBLISHED_B, "published_c": kernel.PUBLISHED_C,
        "b_rel_diff": t.b / kernel.PUBLISHED_B - 1, "c_rel_diff": t.c / kernel.PUBLISHED_C - 1,
        "tail_mismatch": rep.tail_mismatch, "interpolation_error": rep.interpolation_error})
    checks = []
    for k in cfg["kernel"]["inverse_check_k"]:
        s2, s2d = kernel.inverse_check(rep, k)
        d = morse.phase_shift_series(model, k)
        checks.append({"k": k, "sin_sq_delta": s2, "sin_2delta": s2d,
                       "err_sin_sq": abs(s2 - np.sin(d) ** 2), "err_sin_2delta": abs(s2d - np.sin(2 * d))})
    write_json(out / "inverse_check.json", {"checks": checks, "max_error": max(
        max(c["err_sin_sq"], c["err_sin_2delta"]) for c in checks)})
    if cfg["model"] == DEFAULTS["model"]:
        write_json(out / "fixture_comparison.json", _fixture_report(rep))
    return out


def _nystrom(cfg):
    return inversion.nystrom_grid(**cfg["nystrom"])


def _r_grid(cfg):
    rg = cfg["r_grid"]
    return inversion.default_r_grid(rg["lo"], rg["hi"], rg["h"])


def cmd_solve(cfg):
    model = model_of(cfg)
    out = _outdir(cfg)
    rep = _kernel_rep(cfg, model)
    res = inversion.reconstruct(rep, _r_grid(cfg), _nystrom(cfg), C=model.C,
                                residual_tol=cfg["tolerances"]["residual"])
    res.to_csv(out / "reconstruction.csv")
    res.to_json(out / "reconstruction.json", model)
    return out


def sweep_values(cfg, model):
    """Sweep entries as s0^2; 'theoretical' stands for the closed-form value."""
    vals = []
    for v in cfg["s0"]["sweep"]:
        if v == "theoretical":
            vals.append(_theoretical_s0_sq(model))
        elif isinstance(v, (int, float)) and v >= 0:
            vals.append(float(v) ** 2 if cfg["s0"]["sweep_quantity"] == "s0" else float(v))
        else:
            raise ConfigError(f"invalid sweep entry {v!r}")
    return vals


def cmd_family(cfg):
    model = model_of(cfg)
    values = sweep_values(cfg, model)
    out = _outdir(cfg)
    rep = _kernel_rep(cfg, model)
    results = inversion.isospectral_family(rep, values, _r_grid(cfg), _nystrom(cfg), C=model.C,
                                           residual_tol=cfg["tolerances"]["residual"])
    dev = []
    for i, res in enumerate(results):
        res.to_csv(out / f"family_{i}.csv")
        dev.append(res.deviation(model))
    match = [d < cfg["tolerances"]["match"] for d in dev]
    write_csv(out / "family_summary.csv", ["member", "s0_sq", "max_deviation_vs_morse", "matches_model"],
              [list(range(len(values))), values, dev, match])
    return out


def cmd_theta(betas, stream=None):
    stream = stream or sys.stdout
    for b in betas:
        r = specfun.theta(b)
        print(f"{b:.17g} {r.value:.17g} {r.regime}", file=stream)


STAGES = {"direct": cmd_direct, "kernel": cmd_kernel, "solve": cmd_solve, "family": cmd_family}


def build_parser():
    p = argparse.ArgumentParser(prog="marchenko", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in STAGES:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config; missing fields take the defaults")
        sp.add_argument("--output-dir", help="override output_dir from the config")
    th = sub.add_parser("theta")
    th.add_argument("beta", nargs="+", type=float)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "theta":
        try:
            cmd_theta(args.beta)
        except MarchenkoError as exc:
            print(f"theta: {exc}", file=sys.stderr)
            return 2
        return 0
    try:
        cfg = load_config(args.config)
        if args.output_dir:
            cfg["output_dir"] = args.output_dir
    except ConfigError as exc:
        print(f"config: {exc}", file=sys.stderr)
        return 1
    try:
        STAGES[args.command](cfg)
    except ConfigError as exc:
        print(f"config: {exc}", file=sys.stderr)
        return 1
    except (MarchenkoError, ArithmeticError) as exc:
        print(f"{args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
