"""Command-line front end.

Exit codes: 0 success, 1 computation error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__, estimators, io, kernels, pipeline, residuals, simulator
from .core import FrequencyAxis, ScaleAxis
from .kernels import SpecError
from .transforms import transform

logger = logging.getLogger("epsd")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Spec parsing
# ---------------------------------------------------------------------------

_FIELDS = {
    "stft-box": (("h",), ()),
    "stft-gauss": (("sigma",), ()),
    "cwt-harmonic": (("m", "n"), ("c0", "s0", "levels")),
    "cwt-morse": (("beta", "gamma"), ("c0", "s0", "levels")),
}
# defaults used when `ratios` gets a bare transform name
_DEFAULTS = {
    "stft-box": {"h": 1.0},
    "stft-gauss": {"sigma": 1.0},
    "s-transform": {"kappa": 1.0},
    "cwt-harmonic": {"m": 1.0, "n": 2.0},
    "cwt-morse": {"beta": 20.0, "gamma": 3.0},
}


def _parse_k(obj):
    if not isinstance(obj, dict):
        raise SpecError("K must be an object with a 'kind' field")
    obj = dict(obj)
    kind = obj.pop("kind", None)
    if kind == "power-law":
        allowed = {"kappa0", "f_ref", "p"}
        cls = kernels.PowerLawK
    elif kind == "table":
        allowed = {"freqs", "values"}
        cls = kernels.TabulatedK
    else:
        raise SpecError(f"unknown K kind {kind!r} (use 'power-law' or 'table')")
    extra = set(obj) - allowed
    if extra:
        raise SpecError(f"unknown K field(s): {', '.join(sorted(extra))}")
    if kind == "table":
        for req in ("freqs", "values"):
            if req not in obj:
                raise SpecError(f"K table is missing field '{req}'")
        return cls(tuple(obj["freqs"]), tuple(obj["values"]))
    if "kappa0" not in obj:
        raise SpecError("power-law K is missing field 'kappa0'")
    return cls(**obj)


def spec_from_dict(obj: dict):
    """Build a transform spec from its JSON object form."""
    if not isinstance(obj, dict):
        raise SpecError("spec must be a JSON object")
    obj = dict(obj)
    name = obj.pop("transform", None)
    if name is None:
        raise SpecError("spec is missing field 'transform'")
    if name == "s-transform":
        if "kappa" in obj and "K" in obj:
            raise SpecError("give either 'kappa' or 'K', not both")
        extra = set(obj) - {"kappa", "K"}
        if extra:
            raise SpecError(f"unknown field(s) for s-transform: {', '.join(sorted(extra))}")
        if "K" in obj:
            return kernels.STransGeneralized(_parse_k(obj["K"]))
        if "kappa" not in obj:
            raise SpecError("s-transform spec is missing field 'kappa'")
        return kernels.STrans(obj["kappa"])
    if name not in _FIELDS:
        raise SpecError(
            f"unknown transform {name!r}; expected one of "
            "stft-box, stft-gauss, s-transform, cwt-harmonic, cwt-morse"
        )
    required, optional = _FIELDS[name]
    extra = set(obj) - set(required) - set(optional)
    if extra:
        raise SpecError(f"unknown field(s) for {name}: {', '.join(sorted(extra))}")
    for req in required:
        if req not in obj:
            raise SpecError(f"{name} spec is missing field '{req}'")
    for key, val in obj.items():
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise SpecError(f"field '{key}' must be a number")
    if name == "stft-box":
        return kernels.StftBox(obj["h"])
    if name == "stft-gauss":
        return kernels.StftGauss(obj["sigma"])
    axis = None
    given = [k for k in optional if k in obj]
    if given:
        if len(given) != 3:
            raise SpecError("a scale axis needs all of c0, s0 and levels")
        try:
            axis = ScaleAxis(obj["c0"], obj["s0"], obj["levels"])
        except ValueError as exc:
            raise SpecError(str(exc)) from exc
    if name == "cwt-harmonic":
        return kernels.CwtHarmonic(obj["m"], obj["n"], scale_axis=axis)
    return kernels.CwtMorse(obj["beta"], obj["gamma"], scale_axis=axis)


def parse_spec(text: str):
    """Parse a JSON spec document into a transform spec."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"malformed spec JSON: {exc}") from exc
    return spec_from_dict(obj)


def _load_spec_arg(value: str, allow_name: bool = False, overrides: Optional[dict] = None):
    """``--spec`` accepts inline JSON, a JSON file, or (for ``ratios``) a bare name."""
    value = value.strip()
    if value.startswith("{"):
        try:
            obj = json.loads(value)
        except json.JSONDecodeError as exc:
            raise SpecError(f"malformed spec JSON: {exc}") from exc
    elif os.path.exists(value):
        return _load_spec_arg(Path(value).read_text(), allow_name, overrides)
    elif allow_name and value in _DEFAULTS:
        obj = {"transform": value, **_DEFAULTS[value]}
    else:
        raise SpecError(f"--spec {value!r} is neither JSON, an existing file, nor a transform name")
    if overrides:
        if obj.get("transform") == "s-transform" and "kappa" in overrides:
            obj.pop("K", None)
        obj.update(overrides)
    return spec_from_dict(obj)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

_GEOMETRIC = {"h", "sigma", "kappa", "f", "beta", "gamma"}


def parse_sweep(text: str):
    """``name=start:stop:count``; geometric spacing for scale-like parameters."""
    try:
        name, rng = text.split("=", 1)
        start, stop, count = rng.split(":")
        start, stop, count = float(start), float(stop), int(count)
    except ValueError as exc:
        raise UsageError(f"bad --sweep {text!r}; expected name=start:stop:count") from exc
    if count < 1:
        raise UsageError("sweep count must be >= 1")
    name = name.strip()
    if name in _GEOMETRIC:
        if start <= 0 or stop <= 0:
            raise UsageError(f"geometric sweep of {name} needs positive bounds")
        return name, np.geomspace(start, stop, count)
    return name, np.linspace(start, stop, count)


def _parse_ints(text: str):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise UsageError(f"bad integer tuple {text!r}") from exc


def _model(args):
    if args.model == "seismic":
        return simulator.seismic_model()
    raise UsageError(f"unknown model {args.model!r}")


def _grid_axes(args, model, dt):
    n = int(round(model.duration / dt))
    freqs = FrequencyAxis.dft_bins(n, dt).values
    times = dt * np.arange(1, n)  # the model vanishes at t = 0
    if args.fmin is not None or args.fmax is not None:
        lo = args.fmin if args.fmin is not None else freqs[0]
        hi = args.fmax if args.fmax is not None else freqs[-1]
        freqs = freqs[(freqs >= lo) & (freqs <= hi)]
    if args.tstep > 1:
        times = times[:: args.tstep]
    if freqs.size == 0:
        raise UsageError("frequency range selects no DFT bin")
    return freqs, times


def _decimate(grid, step):
    if step <= 1:
        return grid
    sl = slice(None, None, step)
    validity = None if grid.validity is None else grid.validity[:, sl]
    return type(grid)(grid.freqs, grid.times[sl], grid.values[:, sl], signed=grid.signed, validity=validity)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args):
    model = _model(args)
    records = simulator.srm_simulate(model, args.samples, args.dt, args.seed, args.workers)
    out = Path(args.out)
    width = max(5, len(str(args.samples - 1)))
    for i, ts in enumerate(records):
        io.write_series(out / f"record_{i:0{width}d}.csv", ts)
    io.write_json(
        out / "manifest.json",
        {
            "model": model.name,
            "params": model.params,
            "seed": args.seed,
            "samples": args.samples,
            "dt": args.dt,
            "n": records[0].n,
            "version": __version__,
        },
    )


def cmd_transform(args):
    spec = _load_spec_arg(args.spec)
    ts = io.read_series(args.input)
    coeffs = transform(ts, spec)
    io.write_coefficients(args.out, coeffs, extra={"spec": kernels.spec_to_dict(spec)})


def _series_inputs(path):
    p = Path(path)
    if p.is_dir():
        files = sorted(p.glob("*.csv"))
        if not files:
            raise UsageError(f"no CSV files in {p}")
        return files
    return [p]


def _estimate_one(ts, spec, halfwidth):
    grid = estimators.epsd_estimate(transform(ts, spec), spec)
    return estimators.smooth_time(grid, halfwidth) if halfwidth else grid


def cmd_estimate(args):
    spec = _load_spec_arg(args.spec)
    files = _series_inputs(args.input)
    if args.stats:
        if len(files) < 2:
            raise UsageError("--stats needs a directory with at least 2 records")
        acc = None
        first = None
        for f in files:
            g = _estimate_one(io.read_series(f), spec, args.smooth_halfwidth)
            if first is None:
                first, acc = g, estimators.RunningStats()
            elif not first.same_axes(g):
                raise ValueError(f"{f}: record grid differs from the first record")
            acc.add(g.values)
        io.write_grid(args.out, first.with_values(acc.mean))
        out = Path(args.out)
        io.write_grid(out.with_name(out.stem + "_std" + out.suffix), first.with_values(acc.std()))
        return
    if len(files) != 1:
        raise UsageError("a directory input needs --stats")
    io.write_grid(args.out, _estimate_one(io.read_series(files[0]), spec, args.smooth_halfwidth))


def cmd_residual(args):
    model = _model(args)
    spec = _load_spec_arg(args.spec)
    freqs, times = _grid_axes(args, model, args.dt)
    band = args.band if args.band is not None else 0.5 / args.dt
    grid = residuals.residual_grid(model, spec, freqs, times, args.order, band=band)
    io.write_grid(args.out, grid)
    print(f"aggregate_abs {residuals.aggregate_abs(grid, model):.10g}")


def _ratio_value(spec, tup, f, band):
    if kernels.is_stft(spec):
        if len(tup) != 4:
            raise UsageError("STFT ratios take --tuple k,l,m,n")
        return residuals.ratio_stft(spec, *tup, band=band)
    if f is None:
        raise UsageError(f"{spec.name} ratios need --freq or a sweep over f")
    if kernels.is_st(spec):
        if len(tup) != 4:
            raise UsageError("S-transform ratios take --tuple k,l,m,n")
        return residuals.ratio_st(spec, f, *tup)
    if len(tup) != 2:
        raise UsageError("wavelet ratios take --tuple j,k")
    return residuals.ratio_cwt(spec, f, *tup)


def cmd_ratios(args):
    name, values = parse_sweep(args.sweep)
    tup = _parse_ints(args.tuple)
    rows = []
    for v in values:
        if name == "f":
            spec = _load_spec_arg(args.spec, allow_name=True)
            f = float(v)
        else:
            spec = _load_spec_arg(args.spec, allow_name=True, overrides={name: float(v)})
            f = args.freq
        rows.append((v, _ratio_value(spec, tup, f, args.band)))
    text = f"{name},ratio\n" + "".join(f"{p:.17g},{r:.17g}\n" for p, r in rows)
    if args.out:
        io.atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)


def cmd_constants(args):
    spec = _load_spec_arg(args.spec)
    if kernels.is_st(spec) and args.freq is None and isinstance(spec, kernels.STransGeneralized):
        raise UsageError("generalized S-transform constants need --freq")
    f = args.freq if args.freq is not None else (1.0 if kernels.is_st(spec) else None)
    const = kernels.norm_constants(spec, f).as_dict()
    if args.json:
        print(json.dumps({"spec": kernels.spec_to_dict(spec), **const}, indent=2, sort_keys=True))
    else:
        print(f"transform {spec.name}")
        for k, v in const.items():
            print(f"{k} {v:.6g}")


def cmd_mc(args):
    model = _model(args)
    n = int(round(model.duration / args.dt))
    specs = pipeline.PRESETS[args.preset](n, args.dt)
    mc = pipeline.run_mc(model, specs, args.samples, args.dt, args.seed, args.workers)
    out = Path(args.out)
    for name, res in mc.results.items():
        for kind in ("mean", "std", "diff"):
            io.write_grid(out / f"{name}_{kind}.csv", _decimate(getattr(res, kind), args.tstep))
    intensity = None
    if args.model == "seismic":
        p = simulator.SeismicModelParams()
        intensity = lambda t: p.E_T * p.lambda0(t)  # noqa: E731
    summ = pipeline.summary(mc, intensity)
    summ.update(model=model.name, preset=args.preset, dt=args.dt, version=__version__)
    io.write_json(out / "summary.json", summ)
    if mc.failures and not mc.results:
        raise RuntimeError("every spec failed: " + "; ".join(mc.failures.values()))


def cmd_residual_study(args):
    model = _model(args)
    n = int(round(model.duration / args.dt))
    specs = pipeline.PRESETS[args.preset](n, args.dt)
    freqs, times = _grid_axes(args, model, args.dt)
    study = pipeline.run_residual_study(model, specs, freqs, times, band=0.5 / args.dt)
    out = Path(args.out)
    agg = {}
    for name, grids in study.items():
        for order, grid in grids.items():
            io.write_grid(out / f"{name}_R{order}.csv", grid)
            agg[f"{name}_R{order}"] = residuals.aggregate_abs(grid, model)
    io.write_json(out / "summary.json", {"aggregate_abs": agg, "band_hz": 0.5 / args.dt})


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _env_workers():
    raw = os.environ.get("EPSD_WORKERS")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"EPSD_WORKERS must be an integer, got {raw!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="epsd", description="EPSD estimation toolkit")
    p.add_argument("--version", action="version", version=f"epsd {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def model_args(sp):
        sp.add_argument("--model", choices=["seismic"], default="seismic")
        sp.add_argument("--dt", type=float, default=0.02)

    def workers_arg(sp):
        sp.add_argument("--workers", type=int, default=None, help="defaults to $EPSD_WORKERS or 1")

    def grid_args(sp):
        sp.add_argument("--fmin", type=float)
        sp.add_argument("--fmax", type=float)
        sp.add_argument("--tstep", type=int, default=1, help="keep every k-th time sample")

    s = sub.add_parser("simulate", help="SRM sample records")
    model_args(s)
    workers_arg(s)
    s.add_argument("--samples", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("transform", help="coefficient grid of one record")
    s.add_argument("--input", required=True)
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_transform)

    s = sub.add_parser("estimate", help="EPSD estimate of a record or an ensemble")
    s.add_argument("--input", required=True)
    s.add_argument("--spec", required=True)
    s.add_argument("--smooth-halfwidth", type=float, default=0.0)
    s.add_argument("--stats", action="store_true", help="ensemble mean (and _std file) of a directory")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("residual", help="signed residual grid")
    model_args(s)
    grid_args(s)
    s.add_argument("--spec", required=True)
    s.add_argument("--order", type=int, choices=[1, 2], required=True)
    s.add_argument("--band", type=float, help="box-window band in Hz (default Nyquist)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_residual)

    s = sub.add_parser("ratios", help="ratio sweeps as CSV")
    s.add_argument("--spec", required=True, help="JSON, JSON file, or transform name")
    s.add_argument("--sweep", required=True, help="name=start:stop:count")
    s.add_argument("--tuple", required=True, help="k,l,m,n (STFT/ST) or j,k (CWT)")
    s.add_argument("--freq", type=float, help="analysis frequency for ST/CWT")
    s.add_argument("--band", type=float, help="box-window band for r(2,2,0,0)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_ratios)

    s = sub.add_parser("constants", help="normalization constants")
    s.add_argument("--spec", required=True)
    s.add_argument("--freq", type=float, help="frequency for S-transform constants (default 1 Hz)")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_constants)

    s = sub.add_parser("mc", help="Monte Carlo study")
    model_args(s)
    workers_arg(s)
    s.add_argument("--preset", choices=sorted(pipeline.PRESETS), default="figure8")
    s.add_argument("--samples", type=int, default=2000)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--tstep", type=int, default=1, help="keep every k-th time column in CSVs")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_mc)

    s = sub.add_parser("residual-study", help="residual grids for a preset")
    model_args(s)
    grid_args(s)
    s.add_argument("--preset", choices=sorted(pipeline.PRESETS), default="figure8")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_residual_study)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if hasattr(args, "workers") and args.workers is None:
            args.workers = _env_workers()
        args.func(args)
    except (UsageError, SpecError) as exc:
        print(f"epsd {args.command}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"epsd {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
