"""Command-line surface.

Every subcommand is a thin client of the HTTP service: by default the
FastAPI app is mounted in-process over an ASGI transport (no sockets,
fully deterministic); ``--server URL`` targets a remote instance
started with ``muteqkd serve``.

Config precedence: command-line flags > --config file > defaults.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from typing import Optional

import httpx

from . import __version__
from .config import (ATTACK_MODES, ConfigError, _SECTIONS, _coerce,
                     load_config_file)


def _parse_set_flags(pairs: list[str]) -> dict:
    """Parse --set section.key=value flags into typed overrides."""
    overrides = {}
    for pair in pairs:
        if "=" not in pair or "." not in pair.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {pair!r}")
        target, raw = pair.split("=", 1)
        section, key = target.split(".", 1)
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        defaults = {f.name: f.default for f in dataclasses.fields(_SECTIONS[section])
                    if f.default is not dataclasses.MISSING}
        if key not in defaults:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        overrides[(section, key)] = _coerce(section, key, raw, defaults[key])
    return overrides


def _collect_overrides(args) -> dict:
    """Nested {section: {key: value}} dict for the service request."""
    merged = {}
    if args.config:
        merged.update(load_config_file(args.config))
    merged.update(_parse_set_flags(args.set or []))
    # dedicated flags outrank --set and the file
    if getattr(args, "seed", None) is not None:
        merged[("run", "seed")] = args.seed
    if getattr(args, "attack", None) is not None:
        merged[("run", "attack")] = args.attack
    if getattr(args, "pulses", None) is not None:
        merged[("run", "n_pulses")] = args.pulses
    if getattr(args, "distance_max", None) is not None:
        merged[("run", "distance_max_km")] = args.distance_max
    nested: dict = {}
    for (section, key), value in merged.items():
        if isinstance(value, tuple):
            value = list(value)
        nested.setdefault(section, {})[key] = value
    return nested


def _client(args) -> httpx.Client:
    if args.server:
        return httpx.Client(base_url=args.server, timeout=None)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service import app
    return TestClient(app)


def _post(args, path: str, payload: dict) -> dict:
    with _client(args) as client:
        resp = client.post(path, json=payload)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except Exception:
            detail = resp.text
        print(f"error: {detail}", file=sys.stderr)
        raise SystemExit(1)
    return resp.json()


def _write(out_dir: str, name: str, content: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(content)
    return path


# ------------------------------------------------------------------ commands

def cmd_sweep(args) -> int:
    payload = {"overrides": _collect_overrides(args)}
    if args.photons:
        payload["photons"] = args.photons
    data = _post(args, "/sweep", payload)
    path = _write(args.out, "sweep.csv", data["csv"])
    print(f"wrote {path} ({len(data['rows'])} rows)")
    return 0


def cmd_simulate(args) -> int:
    data = _post(args, "/simulate", {"overrides": _collect_overrides(args)})
    for name, key in (("tally.csv", "tally_csv"), ("clicks.csv", "clicks_csv"),
                      ("inferences.csv", "inference_csv"),
                      ("wide_events.csv", "wide_csv")):
        _write(args.out, name, data[key])
    print(f"simulated {data['n_pulses']} pulses ({data['n_gates']} gates, "
          f"{data['duration_s']:.6g} s)")
    for key, s in data["per_intensity"].items():
        print(f"  {key}: sent={s['sent']} Q={s['gain']:.6g} E={s['qber']:.6g}")
    print(f"  wide avalanches: {data['n_wide_events']}")
    if data["eve_knowledge"] is None:
        print("  Eve knowledge fraction: n/a")
    else:
        print(f"  Eve knowledge fraction: {data['eve_knowledge']:.6f}")
    print(f"outputs in {args.out}/")
    return 0


def cmd_keyrate(args) -> int:
    data = _post(args, "/keyrate", {"overrides": _collect_overrides(args)})
    path = _write(args.out, "keyrate.csv", data["csv"])
    print(f"wrote {path}")
    for scenario, km in data["cutoffs_km"].items():
        print(f"  cutoff {scenario}: {km:g} km")
    print(f"  attacked/unattacked rate ratio at 5 km: "
          f"{data['ratio_ideal_over_no_attack_at_5km']:.4f}")
    return 0


def cmd_monitor(args) -> int:
    try:
        with open(args.clicks, encoding="utf-8") as fh:
            clicks_csv = fh.read()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    payload = {"clicks_csv": clicks_csv, "overrides": _collect_overrides(args)}
    wide_path = args.wide
    if wide_path is None:
        sibling = os.path.join(os.path.dirname(args.clicks) or ".",
                               "wide_events.csv")
        if os.path.exists(sibling):
            wide_path = sibling
    if wide_path:
        with open(wide_path, encoding="utf-8") as fh:
            payload["wide_csv"] = fh.read()
    if args.duration is not None:
        payload["duration_s"] = args.duration
    data = _post(args, "/monitor", payload)
    path = _write(args.out, "monitor_report.csv", data["report_csv"])
    print(f"wrote {path}")
    print(f"  wide avalanche rate: {data['wide_avalanche_rate']:.6g}/s "
          f"(flag={data['wide_rate_flag']})")
    if data["phase_uniformity_pvalue"] is None:
        print(f"  periodicity: inconclusive "
              f"({data['n_clicks_tested']} clicks tested)")
    else:
        print(f"  periodicity: p={data['phase_uniformity_pvalue']:.3g} "
              f"two-peak score={data['two_peak_score']:.3f} "
              f"(flag={data['periodicity_flag']})")
    print(f"  alarm: {data['alarm']}")
    return 2 if data["alarm"] else 0


def cmd_serve(args) -> int:
    import uvicorn
    uvicorn.run("muteqkd.service:app", host=args.host, port=args.port)
    return 0


# -------------------------------------------------------------------- main

def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="PATH", help="INI config file")
    p.add_argument("--seed", type=int, help="master RNG seed")
    p.add_argument("--out", default="out", metavar="DIR", help="output directory")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override any config value (repeatable)")
    p.add_argument("--server", metavar="URL",
                   help="remote service URL (default: run in-process)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="muteqkd",
        description="Simulate and analyze the dead-time-matched muting attack "
                    "on a gated-SPAD BB84 receiver.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="single-SPAD count rate vs pulse intensity")
    _add_common(p)
    p.add_argument("--photons", type=float, nargs="+",
                   help="explicit photon grid (default 0.1-5000, 1 dB steps)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="event-level BB84 session")
    _add_common(p)
    p.add_argument("--attack", choices=ATTACK_MODES, help="attack mode")
    p.add_argument("--pulses", type=int, help="number of signal pulses")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("keyrate", help="decoy-state key-rate curves")
    _add_common(p)
    p.add_argument("--distance-max", type=float, metavar="KM",
                   help="maximum curve distance")
    p.set_defaults(func=cmd_keyrate)

    p = sub.add_parser("monitor", help="countermeasure analysis of a click log")
    _add_common(p)
    p.add_argument("clicks", metavar="CLICKS_CSV", help="click log to analyze")
    p.add_argument("--wide", metavar="PATH",
                   help="wide-avalanche log (default: wide_events.csv next to "
                        "the click log, if present)")
    p.add_argument("--duration", type=float, metavar="SECONDS",
                   help="observation time (default: inferred from gate span)")
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
