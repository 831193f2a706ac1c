"""Command-line entry point: one subcommand per stage plus ``all``.

Stages communicate only through files in the output directory, so running
them one by one gives the same bytes as ``all``. Exit codes: 0 success,
1 usage error, 2 data error (bad or missing input), 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from contextlib import contextmanager
from pathlib import Path

import pandas as pd

from . import pipeline as pl
from . import report as rp
from .cases import parse_cases, write_joined
from .geo import load_zones
from .ingest import format_sightings, parse_sightings
from .metrics import read_metrics, write_metrics
from .phase import PhaseReport
from .sdi import read_sdi, write_sdi
from .synth import generate, load_scenario, paper_shape_scenario, write_outputs

logger = logging.getLogger("mobility_sdi")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

STAGES = ["synth", "ingest", "trips", "activities", "weights", "metrics", "sdi", "phases", "cases", "report"]


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


# -- file helpers ---------------------------------------------------------------

class _Writer:
    """Collects a stage's outputs in temp files; commits them together or not at all."""

    def __init__(self, directory: Path):
        self.dir = directory
        self.pending: list[tuple[Path, Path]] = []

    def path(self, name: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{name}.", suffix=".tmp", dir=self.dir)
        os.close(fd)
        tmp = Path(tmp)
        self.pending.append((tmp, self.dir / name))
        return tmp

    def text(self, name: str, content: str):
        with open(self.path(name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(content)

    def json(self, name: str, obj):
        self.text(name, json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n")

    def frame(self, name: str, df: pd.DataFrame, float_format: str | None = None):
        df.to_csv(self.path(name), index=False, lineterminator="\n", float_format=float_format)

    def commit(self):
        mask = os.umask(0)
        os.umask(mask)
        for tmp, final in self.pending:
            os.chmod(tmp, 0o666 & ~mask)
            os.replace(tmp, final)
        self.pending.clear()

    def discard(self):
        for tmp, _ in self.pending:
            tmp.unlink(missing_ok=True)
        self.pending.clear()


@contextmanager
def _stage_outputs(directory: Path):
    w = _Writer(directory)
    try:
        yield w
    except BaseException:
        w.discard()
        raise
    w.commit()


def _need(stage: str, path: Path) -> Path:
    if not path.exists():
        raise DataError(f"{stage}: missing input {path}")
    return path


def _read_frame(path: Path, str_cols=(), none_cols=()) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={c: str for c in str_cols}, keep_default_na=False, na_values=[""],
                     float_precision="round_trip")
    for c in none_cols:
        if c in df.columns:
            df[c] = df[c].astype(object).where(df[c].notna(), None)
    return df


# -- stages ---------------------------------------------------------------------

def stage_synth(cfg: pl.PipelineConfig):
    sc = load_scenario(_need("synth", Path(cfg.scenario))) if cfg.scenario else paper_shape_scenario()
    out = generate(sc, n_jobs=cfg.jobs)
    target = cfg.synth_path
    target.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory(dir=target.parent, prefix=".synth.") as tmp:
        paths = write_outputs(out, tmp)
        for p in paths.values():
            os.replace(p, target / p.name)
    logger.info("synth: %d sightings, %d true trips -> %s", len(out.sightings), len(out.truth_trips), target)


def _zones(cfg, stage):
    return load_zones(_need(stage, cfg.input_path("zones")))


def stage_ingest(cfg: pl.PipelineConfig):
    src = _need("ingest", cfg.input_path("sightings"))
    sightings, errors = parse_sightings(src)
    cleaned, rep = pl.run_ingest(sightings, cfg)
    with _stage_outputs(cfg.out) as w:
        w.text("cleaned.csv", format_sightings(cleaned))
        w.json("cleaning_report.json", {**rep.to_dict(), "parse_errors": len(errors),
                                        "first_parse_errors": [f"line {e.line}: {e.message}" for e in errors[:20]]})
    logger.info("ingest: %d of %d records kept", rep.records_out, rep.records_in)


def _cleaned(cfg, stage):
    df, errors = parse_sightings(_need(stage, cfg.out / "cleaned.csv"))
    if errors:
        raise DataError(f"{stage}: cleaned.csv has {len(errors)} malformed rows")
    return df


TRIP_STR = ("trip_id", "device_id", "o_zone", "d_zone")


def _trips(cfg, stage):
    return _read_frame(_need(stage, cfg.out / "trips.csv"), TRIP_STR, ("o_zone", "d_zone"))


def stage_trips(cfg: pl.PipelineConfig):
    zones = _zones(cfg, "trips")
    trips, n_short = pl.run_trips(_cleaned(cfg, "trips"), zones, cfg)
    with _stage_outputs(cfg.out) as w:
        w.frame("trips.csv", trips)
        w.json("trips_report.json", {"trips": len(trips), "short_removed": n_short,
                                     "min_trip_length_m": cfg.trips.min_trip_length_m})
    logger.info("trips: %d kept, %d short removed", len(trips), n_short)


def _profiles(cfg, stage):
    df = _read_frame(_need(stage, cfg.out / "profiles.csv"), ("device_id", "home_zone", "work_zone"), ("work_zone",))
    df["employed"] = df["employed"].astype(bool)
    return df


def stage_activities(cfg: pl.PipelineConfig):
    zones = _zones(cfg, "activities")
    cleaned = _cleaned(cfg, "activities")
    profiles, excluded, _ = pl.run_activities(cleaned, _trips(cfg, "activities"), zones, cfg)
    with _stage_outputs(cfg.out) as w:
        w.frame("profiles.csv", profiles)
        w.json("excluded_devices.json", excluded)
    logger.info("activities: %d devices profiled, %d excluded", len(profiles), len(excluded))


def stage_weights(cfg: pl.PipelineConfig):
    zones = _zones(cfg, "weights")
    dw, factors, info = pl.run_weights(_cleaned(cfg, "weights"), _trips(cfg, "weights"),
                                       _profiles(cfg, "weights"), zones, cfg)
    with _stage_outputs(cfg.out) as w:
        w.frame("device_weights.csv", dw)
        w.json("weights.json", info)


def stage_metrics(cfg: pl.PipelineConfig):
    zones = _zones(cfg, "metrics")
    dw = _read_frame(_need("metrics", cfg.out / "device_weights.csv"),
                     ("device_id", "home_zone", "county_id", "state_id"))
    with open(_need("metrics", cfg.out / "weights.json"), encoding="utf-8") as fh:
        factors = json.load(fh)["trip_factors"]
    metrics = pl.run_metrics(_cleaned(cfg, "metrics"), _trips(cfg, "metrics"), _profiles(cfg, "metrics"),
                             dw, factors, zones, cfg)
    with _stage_outputs(cfg.out) as w:
        write_metrics(metrics, w.path("metrics.csv"))


def stage_sdi(cfg: pl.PipelineConfig):
    metrics = read_metrics(_need("sdi", cfg.out / "metrics.csv"))
    if metrics.empty:
        raise DataError("sdi: metrics.csv has no rows")
    sdi, bench = pl.run_sdi(metrics, cfg)
    with _stage_outputs(cfg.out) as w:
        w.frame("benchmark.csv", bench, "%.12g")
        write_sdi(sdi, w.path("sdi.csv"))


def _sdi(cfg, stage):
    path = _need(stage, cfg.out / "sdi.csv")
    try:
        sdi = read_sdi(path)
    except pd.errors.EmptyDataError:
        raise DataError(f"{stage}: SDI series in {path} is empty") from None
    if sdi.empty:
        raise DataError(f"{stage}: SDI series in {cfg.out / 'sdi.csv'} is empty")
    return sdi


def stage_phases(cfg: pl.PipelineConfig):
    reports, roc_frame = pl.run_phases(_sdi(cfg, "phases"), cfg)
    nat = pl.national_report(reports)
    with _stage_outputs(cfg.out) as w:
        w.frame("phases.csv", pl.phases_frame(reports), "%.12g")
        w.frame("roc.csv", roc_frame, "%.12g")
        w.text("phase_report.json", (nat or PhaseReport(geo_id="")).to_json() + "\n")
    if nat is not None:
        logger.info("phases: fatigue_start %s, p=%s", nat.fatigue_start, nat.p_value)


def _national(cfg, stage) -> dict:
    with open(_need(stage, cfg.out / "phase_report.json"), encoding="utf-8") as fh:
        return json.load(fh)


def stage_cases(cfg: pl.PipelineConfig):
    src = _need("cases", cfg.input_path("cases"))
    table = parse_cases(src)
    if table.errors:
        logger.warning("cases: %d malformed rows skipped", len(table.errors))
    zones = _zones(cfg, "cases")
    pivot = cfg.pivot_date or _national(cfg, "cases").get("fatigue_start")
    joined, fig3 = pl.run_cases(table, _sdi(cfg, "cases"), zones, pivot, cfg)
    with _stage_outputs(cfg.out) as w:
        write_joined(joined, w.path("cases_joined.csv"))
        w.frame("cases_before_after.csv", fig3 if len(fig3) else pd.DataFrame(columns=rp.FIG3_COLUMNS), "%.12g")


def stage_report(cfg: pl.PipelineConfig):
    sdi = _sdi(cfg, "report")
    metrics = read_metrics(_need("report", cfg.out / "metrics.csv"))
    bench = _read_frame(_need("report", cfg.out / "benchmark.csv"), ("level", "geo_id"))
    roc_frame = _read_frame(_need("report", cfg.out / "roc.csv"), ("date", "level", "geo_id"))
    nat = _national(cfg, "report")
    ba = cfg.out / "cases_before_after.csv"
    if ba.exists():
        fig3 = _read_frame(ba, ("geo_id",))
    else:
        fig3 = rp.figure3_from_phases(_read_frame(_need("report", cfg.out / "phases.csv"),
                                                  ("level", "geo_id") + tuple(pl.PHASE_COLUMNS[2:6])))
    t1 = rp.figure1_table(metrics, sdi, bench)
    t2 = rp.figure2_table(sdi, roc_frame, nat)
    with _stage_outputs(cfg.out) as w:
        for name, table, svg in (("figure1", t1, rp.figure1_svg(t1)), ("figure2", t2, rp.figure2_svg(t2)),
                                 ("figure3", fig3, rp.figure3_svg(fig3))):
            w.frame(f"{name}.csv", table, "%.12g")
            w.text(f"{name}.svg", svg)


STAGE_FUNCS = {
    "synth": stage_synth, "ingest": stage_ingest, "trips": stage_trips, "activities": stage_activities,
    "weights": stage_weights, "metrics": stage_metrics, "sdi": stage_sdi, "phases": stage_phases,
    "cases": stage_cases, "report": stage_report,
}


def run_all(cfg: pl.PipelineConfig):
    for stage in STAGES:
        if stage == "synth" and cfg.sightings is not None:
            continue
        if stage == "cases" and not cfg.input_path("cases").exists():
            logger.info("cases: no case file at %s, skipped", cfg.input_path("cases"))
            continue
        logger.info("stage %s", stage)
        STAGE_FUNCS[stage](cfg)


# -- entry point ----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mobility-sdi", description="Mobility metrics and social distancing index pipeline.")
    p.add_argument("--config", help=f"JSON config (default: ${pl.CONFIG_ENV}, else built-in defaults)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--jobs", type=int, help="maximum parallel workers (-1 for all cores)")
    p.add_argument("--scenario", help="scenario JSON for synth (default: the shipped paper-shape scenario)")
    p.add_argument("--dump-config", action="store_true", help="print the effective config and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("command", nargs="?", choices=STAGES + ["all"])
    return p


def load_config(path: str | None) -> pl.PipelineConfig:
    path = path or os.environ.get(pl.CONFIG_ENV)
    if not path:
        return pl.PipelineConfig()
    if not Path(path).exists():
        raise UsageError(f"config file not found: {path}")
    try:
        return pl.PipelineConfig.load(path)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid config {path}: {exc}") from None


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args.config)
        try:
            cfg = cfg.with_overrides(output_dir=args.out, jobs=args.jobs, scenario=args.scenario)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if args.dump_config:
            print(json.dumps(cfg.to_dict(), indent=1))
            return EXIT_OK
        if args.command is None:
            raise UsageError("a command is required")
    except UsageError as exc:
        print(f"mobility-sdi: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "all":
            run_all(cfg)
        else:
            STAGE_FUNCS[args.command](cfg)
    except DataError as exc:
        print(f"mobility-sdi: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, KeyError, json.JSONDecodeError, FileNotFoundError, pd.errors.ParserError) as exc:
        print(f"mobility-sdi: {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        logger.debug("internal error", exc_info=True)
        print(f"mobility-sdi: {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
