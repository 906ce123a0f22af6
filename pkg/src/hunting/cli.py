"""Command-line interface.

Every subcommand reads a JSON scenario file and writes CSV/JSON files
into the directory given by ``--out``. Exit codes: 0 success, 1 invalid
configuration or arguments, 2 file I/O failure, 3 parameters outside
the regime the command is defined for.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis, automaton, geometry, sweep
from .model import PARAM_KEYS, RegimeError, SystemParams, VoltagePair

log = logging.getLogger("hunting")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_REGIME = 0, 1, 2, 3


SCENARIO_KEYS = ("ic", "horizon", "negate_g_at", "trigger_fraction")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    params: SystemParams
    ic: VoltagePair | None = None
    horizon: float = 600.0
    negate_g_at: float | None = None
    # Fraction of eps at which the gain-flip trigger would fire. Recorded
    # in outputs for reference only; the flip time is ``negate_g_at``.
    trigger_fraction: float | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        """Parameters may be nested under ``params`` or given flat at top level."""
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data = dict(data)
        scenario = {k: data.pop(k) for k in SCENARIO_KEYS if k in data}
        if "params" in data:
            raw = data.pop("params")
        else:
            raw = {k: data.pop(k) for k in PARAM_KEYS if k in data}
        if data:
            raise ConfigError(f"unknown config keys: {sorted(data)}")
        try:
            params = SystemParams.from_dict(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        ic = scenario.get("ic")
        if ic is not None:
            if not (isinstance(ic, (list, tuple)) and len(ic) == 2):
                raise ConfigError("ic must be a pair [v1, v2]")
            try:
                ic = VoltagePair(float(ic[0]), float(ic[1]))
                horizon = float(scenario.get("horizon", 600.0))
            except (TypeError, ValueError) as exc:
                raise ConfigError(str(exc)) from exc
        else:
            horizon = scenario.get("horizon", 600.0)
        if isinstance(horizon, (bool, str)) or not isinstance(horizon, (int, float)):
            raise ConfigError(f"horizon must be a number, got {horizon!r}")
        horizon = float(horizon)
        if ic is not None and not all(math.isfinite(x) for x in ic):
            raise ConfigError("ic must be finite")
        if not horizon > 0 or not math.isfinite(horizon):
            raise ConfigError("horizon must be positive")
        negate = scenario.get("negate_g_at")
        trigger = scenario.get("trigger_fraction")
        try:
            negate = None if negate is None else float(negate)
            trigger = None if trigger is None else float(trigger)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return cls(params, ic, horizon, negate, trigger)

    def to_dict(self) -> dict:
        out: dict = {"params": self.params.to_dict(), "horizon": self.horizon}
        if self.ic is not None:
            out["ic"] = list(self.ic)
        if self.negate_g_at is not None:
            out["negate_g_at"] = self.negate_g_at
        if self.trigger_fraction is not None:
            out["trigger_fraction"] = self.trigger_fraction
        return out


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return ScenarioConfig.from_dict(data)


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def cmd_simulate(cfg: ScenarioConfig, out: Path, args) -> int:
    if cfg.ic is None:
        raise ConfigError("simulate needs an initial condition 'ic'")
    p = cfg.params
    if cfg.trigger_fraction is not None:
        log.info("trigger fraction %g of eps recorded; gain flip at %s", cfg.trigger_fraction, cfg.negate_g_at)
    traj = automaton.simulate(cfg.ic, p, cfg.horizon, negate_g_at=cfg.negate_g_at)
    events = automaton.detect_sequences(traj)
    outcome = automaton.classify_outcome(traj)
    automaton.write_trajectory_csv(traj, out / "trajectory.csv")
    automaton.write_events_csv(events, out / "events.csv")
    starts = [e.start_time for e in events]
    growth = [e.vdiff_end - e.vdiff_start for e in events]
    predicted = []
    for e in events:
        try:
            predicted.append(analysis.growth_delta(e.v_start, p))
        except ValueError:
            predicted.append(None)
    summary = {
        "outcome": outcome.kind.value,
        "outcome_time": outcome.time,
        "status": traj.status.value,
        "periods": len(events),
        "period_estimates": list(np.diff(starts)) if len(starts) > 1 else [],
        "vdiff_growth": growth,
        "vdiff_growth_predicted": predicted,
        "printed_alpha1_matches": sum(e.matches_printed_alpha1 for e in events),
        "event_kinds": sorted({e.kind for e in events}),
        "negate_g_at": cfg.negate_g_at,
        "trigger_fraction": cfg.trigger_fraction,
    }
    _write_json(out / "summary.json", summary)
    log.info("outcome %s with %d periods", outcome, len(events))
    return EXIT_OK


def cmd_regions(cfg: ScenarioConfig, out: Path, args) -> int:
    p = cfg.params
    if args.system == "two-ltc":
        part = geometry.partition_two_ltc(p)
    else:
        part = geometry.partition_four_device(p)
    regions = dict(part.regions)
    if args.system == "four-device":
        for name, piece in analysis.s_pieces(p).items():
            regions[f"S_{name}"] = piece
    geometry.write_regions_csv(regions, out / "regions.csv")
    summary = {
        "system": args.system,
        "strip_width_v1": part.strip_width[0],
        "strip_width_v2": part.strip_width[1],
        "areas": {name: r.area() for name, r in regions.items()},
        "area_w": geometry.named_regions(p).W.area(),
    }
    _write_json(out / "summary.json", summary)
    return EXIT_OK


def _require_amplifying(p: SystemParams, what: str) -> None:
    if p.g >= 0:
        raise RegimeError(f"{what} needs g < 0, got g={p.g}")


def cmd_analyze(cfg: ScenarioConfig, out: Path, args) -> int:
    p = cfg.params
    _require_amplifying(p, "analyze")
    if args.grid is not None:
        if not args.grid > 0:
            raise ConfigError("grid resolution must be positive")
        scan = analysis.scan_grid(p, args.grid, cfg.horizon)
        analysis.write_grid_csv(scan, out / "grid.csv")
        summary = {
            "resolution": args.grid,
            "points": int(len(scan.v1)),
            "in_s": int(scan.in_s.sum()),
            "oscillating_from_start": int(scan.from_start.sum()),
            "necessity_violations": int(len(scan.violations)),
        }
        _write_json(out / "summary.json", summary)
        log.info("%d grid points, %d necessity violations", summary["points"], summary["necessity_violations"])
        return EXIT_OK
    if args.sample:
        rng = np.random.default_rng(args.seed)
        pts = geometry.sample_points(analysis.build_set_S(p), args.sample, rng)
        reports = [analysis.classify_ic(VoltagePair(*v), p, cfg.horizon).to_dict() for v in pts]
        _write_json(out / "reports.json", reports)
        return EXIT_OK
    if cfg.ic is None:
        raise ConfigError("analyze needs 'ic' in the config, --grid or --sample")
    report = analysis.classify_ic(cfg.ic, p, cfg.horizon)
    _write_json(out / "report.json", report.to_dict())
    return EXIT_OK


def _parse_range(text: str) -> list[int]:
    try:
        lo, hi = (int(x) for x in text.split(".."))
    except ValueError as exc:
        raise ConfigError(f"--n1 expects lo..hi, got {text!r}") from exc
    if lo > hi:
        raise ConfigError(f"empty N1 range {text!r}")
    return list(range(lo, hi + 1))


def cmd_sweep(cfg: ScenarioConfig, out: Path, args) -> int:
    p = cfg.params
    _require_amplifying(p, "sweep")
    n1_values = _parse_range(args.n1)
    try:
        results = sweep.delay_sweep(p, n1_values)
    except RegimeError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    sweep.write_sweep_csv(results, out / "sweep.csv")
    n1_star = sweep.emptiness_threshold(results)
    summary = {
        "g": p.g,
        "threshold_n1": n1_star,
        "min_d_l1": None if n1_star is None else sweep.min_ltc_delay(n1_star, p.d_inv),
        "monotone": sweep.is_monotone(results),
        "line_invariant": all(r.line_invariant for r in results),
        "rounding_changes_verdict": [r.n1 for r in results if r.s_empty != r.s_empty_exact],
        "n2_by_n1": {str(r.n1): [r.n2, r.n2_exact] for r in results},
    }
    _write_json(out / "summary.json", summary)
    log.info("S empty from N1 = %s", n1_star)
    return EXIT_OK


def cmd_branches(cfg_path: Path, out: Path, args) -> int:
    """Config is a JSON object mapping branch ids to parameter sets."""
    try:
        text = Path(cfg_path).read_text()
    except OSError as exc:
        raise OSError(str(exc)) from exc
    try:
        data = json.loads(text)
        specs = [sweep.BranchSpec(str(k), SystemParams.from_dict(v)) for k, v in data.items()]
        report = sweep.multi_branch_check(specs)
    except (json.JSONDecodeError, AttributeError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    _write_json(out / "branches.json", report.to_dict())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hunting", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("config", type=Path, help="scenario JSON file")
        sp.add_argument("--out", type=Path, required=True, help="output directory")
        return sp

    add("simulate", "simulate one scenario and detect oscillation periods")
    sp = add("regions", "export region polygons")
    sp.add_argument("--system", choices=("two-ltc", "four-device"), default="two-ltc")
    sp = add("analyze", "compare the S prediction with simulation")
    sp.add_argument("--grid", type=float, default=None, help="scan W at this resolution (p.u.)")
    sp.add_argument("--sample", type=int, default=0, help="classify this many random points of S")
    sp.add_argument("--seed", type=int, default=0)
    sp = add("sweep", "sweep the substation-LTC actuation count")
    sp.add_argument("--n1", default="5..29", help="inclusive range lo..hi")
    add("branches", "joint check of several branches on one substation")
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "regions": cmd_regions,
    "analyze": cmd_analyze,
    "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            if args.command == "branches":
                return cmd_branches(args.config, args.out, args)
            cfg = load_config(args.config)
            return COMMANDS[args.command](cfg, args.out, args)
    except RegimeError as exc:
        log.error("%s", exc)
        return EXIT_REGIME
    except ValueError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
