"""Command line front-end.

Exit status: 0 success, 1 usage error, 2 data or format error, 3 an
experiment finished but some arm evaluations failed.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import click

from . import __version__, association, logs
from .association import Observation, domains_of
from .dgs import build_direct_map, interleave, load_catalog, random_dgs, static_dgs, weighted_dgs
from .errors import ObfError
from .evaluation import (ExperimentConfig, baseline_profiles, prepare_population, read_observations,
                         read_observations_raw, run_experiment, summarize, write_observations)
from .rng import derive_seed
from .taxonomy import data_dir, load_taxonomy
from .tracker_sim import TrackerConfig, TrackerSimulator

EXIT_USAGE, EXIT_DATA, EXIT_PARTIAL = 1, 2, 3
DEFAULT_CONFIG = "paper-default.json"
MANIFEST_SUFFIX = ".manifest.json"

log = logging.getLogger("obfkit")


class PartialFailure(Exception):
    pass


# manifests ---------------------------------------------------------------

def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the clock for reproducible manifests
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def _lineage(inputs: list[Path]) -> str | None:
    """Config hash carried by the inputs' manifests; mismatched or stale inputs are rejected."""
    digests = set()
    for p in inputs:
        for mpath in sorted(p.parent.glob("*" + MANIFEST_SUFFIX)):
            try:
                manifest = json.loads(mpath.read_text(encoding="utf-8"))
            except (OSError, ValueError):
                raise ObfError(f"unreadable manifest {mpath}") from None
            listed = manifest.get("outputs", {}).get(p.name)
            if listed is None:
                continue
            if listed != file_digest(p):
                raise ObfError(f"{p} does not match the digest recorded in {mpath}; regenerate it")
            if manifest.get("config_hash"):
                digests.add(manifest["config_hash"])
    if len(digests) > 1:
        raise ObfError(f"inputs come from runs with different config hashes: {sorted(map(str, digests))}")
    return digests.pop() if digests else None


def write_manifest(out_dir: Path, command: str, seed: int | None, config_hash: str | None,
                   inputs: list[Path], outputs: list[Path]) -> Path:
    manifest = {
        "tool": "obfkit",
        "version": __version__,
        "command": command,
        "master_seed": seed,
        "config_hash": config_hash,
        "inputs": {str(p): file_digest(p) for p in inputs},
        "outputs": {p.name: file_digest(p) for p in outputs},
        "created": _timestamp(),
    }
    path = out_dir / f"{command}{MANIFEST_SUFFIX}"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


# shared helpers ----------------------------------------------------------

def resolve_config(name: str | None) -> Path:
    name = name or DEFAULT_CONFIG
    p = Path(name)
    if p.exists():
        return p
    bundled = data_dir() / p.name
    if bundled.exists():
        return bundled
    raise click.BadParameter(f"no config file {name!r}", param_hint="--config")


def load_experiment(config: str | None, seed: int | None) -> tuple[ExperimentConfig, Path]:
    path = resolve_config(config)
    cfg = ExperimentConfig.load(path)
    if seed is not None:
        cfg.master_seed = seed
    return cfg, path


def _out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def read_history(path: str | Path, user: str | None = None) -> tuple[str, list[str]]:
    """A plain file of URLs (one per line), or one user out of an observation JSONL."""
    path = Path(path)
    if path.suffix == ".jsonl":
        rows = read_observations_raw(path)
        if not rows:
            raise ObfError(f"{path}: no users")
        if user is None:
            return str(rows[0]["user_id"]), list(rows[0]["urls"])
        for r in rows:
            if str(r["user_id"]) == user:
                return user, list(r["urls"])
        raise ObfError(f"{path}: no user {user!r}")
    urls = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines()
            if ln.strip() and not ln.startswith("#")]
    return user or path.stem, urls


def emit(data, fmt: str, columns: list[str] | None = None) -> None:
    """Print a list of dict rows (or one dict) as csv, json or a plain table."""
    if fmt == "json":
        click.echo(json.dumps(data, indent=1, sort_keys=True))
        return
    rows = data if isinstance(data, list) else [data]
    columns = columns or list(rows[0]) if rows else []
    if fmt == "csv":
        click.echo(",".join(columns))
        for r in rows:
            click.echo(",".join("" if r.get(c) is None else str(r.get(c)) for c in columns))
        return
    widths = [max(len(c), *(len(str(r.get(c, ""))) for r in rows)) for c in columns]
    click.echo("  ".join(c.ljust(w) for c, w in zip(columns, widths)))
    for r in rows:
        click.echo("  ".join(str("" if r.get(c) is None else r.get(c)).ljust(w) for c, w in zip(columns, widths)))


fmt_option = click.option("--format", "fmt", type=click.Choice(["csv", "json", "table"]), default=None,
                          help="Output format.")
seed_option = click.option("--seed", type=int, default=None, help="Master seed.")
out_option = click.option("--out-dir", default=".", show_default=True, help="Directory for outputs.")
jobs_option = click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True,
                           help="Worker processes/threads.")
config_option = click.option("--config", default=None, help=f"Experiment config (default: bundled {DEFAULT_CONFIG}).")


@click.group()
@click.version_option(__version__, prog_name="obfkit")
@click.option("-v", "--verbose", count=True, help="More logging.")
def cli(verbose):
    """Interest-profile simulation, reconstruction and obfuscation experiments."""
    level = logging.WARNING - 10 * verbose
    logging.basicConfig(level=max(level, logging.DEBUG), format="%(levelname)s %(name)s: %(message)s")


@cli.command("gen-population")
@config_option
@seed_option
@out_option
@click.option("--n-users", type=int, default=None, help="Override the configured population size.")
def gen_population(config, seed, out_dir, n_users):
    """Generate a synthetic population, its tracker and a URL catalog."""
    cfg, cfg_path = load_experiment(config, seed)
    if n_users is not None:
        cfg.n_users = n_users
    out = _out_dir(out_dir)
    prep = prepare_population(cfg)
    _, profiles = baseline_profiles(prep, cfg.master_seed)
    obs_path, trk_path, cat_path = out / "population.jsonl", out / "tracker.json", out / "catalog.tsv"
    write_observations(obs_path, prep.users, profiles)
    prep.config.save(trk_path)
    prep.catalog.save(cat_path)
    write_manifest(out, "gen-population", cfg.master_seed, cfg.digest(), [cfg_path],
                   [obs_path, trk_path, cat_path])
    mean = sum(sum(p.bits) for p in profiles) / max(len(profiles), 1)
    click.echo(f"generated {len(prep.users)} users (mean breadth {mean:.2f}) -> {out}")


@cli.command()
@click.argument("observations", type=click.Path(exists=True, dir_okay=False))
@click.option("--epsilon", type=float, default=association.DEFAULT_EPSILON, show_default=True)
@click.option("--taxonomy", default="default", show_default=True)
@out_option
def learn(observations, epsilon, taxonomy, out_dir):
    """Learn P(domain | GIC) from an observation JSONL."""
    obs_path = Path(observations)
    lineage = _lineage([obs_path])
    obs = read_observations(obs_path, load_taxonomy(taxonomy))
    model = association.learn(obs, epsilon)
    out = _out_dir(out_dir)
    csv_path = association.save_model(model, out / "model.csv")
    sidecar = csv_path.with_suffix(".json")
    write_manifest(out, "learn", None, lineage, [obs_path], [csv_path, sidecar])
    click.echo(f"learned {len(model.domains)} domains x {len(model.roots)} GICs from {len(obs)} users -> {csv_path}")


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--history", required=True, type=click.Path(exists=True, dir_okay=False),
              help="URL list, or observation JSONL with --user.")
@click.option("--user", default=None)
@click.option("--k", type=click.IntRange(1, 24), default=8, show_default=True)
@fmt_option
def reconstruct(model_path, history, user, k, fmt):
    """Rank the GICs a browsing history most likely produced."""
    _lineage([Path(model_path), Path(history)])
    model = association.load_model(model_path)
    _, urls = read_history(history, user)
    res = association.reconstruct(model, domains_of(urls), k)
    rows = [{"rank": i + 1, "gic": g, "score": round(res.scores[g], 6)} for i, g in enumerate(res.ranked)]
    emit(rows, fmt or "table", ["rank", "gic", "score"])


@cli.command("anti-profile")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--history", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--user", default=None)
@click.option("--m", "size", type=click.IntRange(1, 24), default=5, show_default=True)
@fmt_option
def anti_profile_cmd(model_path, history, user, size, fmt):
    """The GICs least likely for a history, most unlikely first."""
    _lineage([Path(model_path), Path(history)])
    model = association.load_model(model_path)
    _, urls = read_history(history, user)
    anti = association.anti_profile(model, domains_of(urls), size)
    emit([{"rank": i + 1, "gic": g} for i, g in enumerate(anti)], fmt or "table", ["rank", "gic"])


@cli.command()
@click.option("--strategy", required=True, type=click.Choice(["random", "static", "weighted"]))
@click.option("--history", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--user", default=None)
@click.option("--dummies", type=click.IntRange(min=1), default=25, show_default=True)
@click.option("--m", "size", type=click.IntRange(1, 24), default=5, show_default=True,
              help="Anti-profile size for static/weighted.")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--catalog", type=click.Path(exists=True, dir_okay=False))
@click.option("--tracker", type=click.Path(exists=True, dir_okay=False),
              help="Tracker config to probe for the static strategy.")
@click.option("--probe-repeats", type=click.IntRange(min=1), default=200, show_default=True)
@click.option("--probe-threshold", type=float, default=0.05, show_default=True)
@click.option("--start-index", type=click.IntRange(min=0), default=80, show_default=True)
@seed_option
@out_option
def plan(strategy, history, user, dummies, size, model_path, catalog, tracker, probe_repeats,
         probe_threshold, start_index, seed, out_dir):
    """Build a dummy plan and the interleaved history."""
    seed = 0 if seed is None else seed
    inputs = [Path(p) for p in (history, model_path, catalog, tracker) if p]
    lineage = _lineage(inputs)
    uid, urls = read_history(history, user)
    plan_seed = derive_seed(seed, uid, strategy, "plan")
    if strategy == "random":
        if not catalog:
            raise click.UsageError("--strategy random needs --catalog")
        p = random_dgs(load_catalog(catalog), dummies, plan_seed)
    else:
        if not model_path:
            raise click.UsageError(f"--strategy {strategy} needs --model")
        model = association.load_model(model_path)
        anti = association.anti_profile(model, domains_of(urls), size)
        per_gic = max(1, dummies // size)
        if strategy == "weighted":
            p = weighted_dgs(model, anti, per_gic, plan_seed)
        else:
            if not (catalog and tracker):
                raise click.UsageError("--strategy static needs --catalog and --tracker")
            tax = load_taxonomy()
            sim = TrackerSimulator(TrackerConfig.load(tracker), tax)
            direct = build_direct_map(sim, load_catalog(catalog).domains(), probe_repeats,
                                      probe_threshold, derive_seed(seed, "probe"))
            p = static_dgs(direct, anti, per_gic, plan_seed)
    out = _out_dir(out_dir)
    plan_path, hist_path = out / "plan.json", out / "history.txt"
    plan_path.write_text(json.dumps(p.to_dict(), indent=1) + "\n", encoding="utf-8")
    mixed = interleave(urls, p, min(start_index, len(urls)))
    hist_path.write_text("\n".join(mixed) + "\n", encoding="utf-8")
    write_manifest(out, "plan", seed, lineage, inputs, [plan_path, hist_path])
    click.echo(f"{strategy} plan: {len(p.urls)} dummies for {uid} -> {plan_path}")


@cli.command()
@click.option("--tracker", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--history", required=True, type=click.Path(exists=True, dir_okay=False),
              help="URL list, an observation JSONL (all users), or a plan's history.txt.")
@click.option("--epochs", type=click.IntRange(min=0), default=0, show_default=True)
@seed_option
@fmt_option
@out_option
def simulate(tracker, history, epochs, seed, fmt, out_dir):
    """Replay histories against a tracker config and report the profiles."""
    seed = 0 if seed is None else seed
    inputs = [Path(tracker), Path(history)]
    lineage = _lineage(inputs)
    sim = TrackerSimulator(TrackerConfig.load(tracker), load_taxonomy()).advance_epoch(epochs)
    if Path(history).suffix == ".jsonl":
        users = [(str(r["user_id"]), list(r["urls"])) for r in read_observations_raw(history)]
    else:
        users = [read_history(history)]
    profiles = [sim.run_session(urls, derive_seed(seed, uid, "simulate")) for uid, urls in users]
    if len(users) == 1 and Path(history).suffix != ".jsonl":
        p = profiles[0]
        emit({"user_id": users[0][0], "breadth": sum(p.bits), "gics": ";".join(p.ordered_gics())},
             fmt or "table", ["user_id", "breadth", "gics"])
        return
    out = _out_dir(out_dir)
    path = out / "simulated.jsonl"
    write_observations(path, users, profiles)
    write_manifest(out, "simulate", seed, lineage, inputs, [path])
    click.echo(f"simulated {len(users)} sessions at epoch {epochs} -> {path}")


@cli.command()
@config_option
@seed_option
@out_option
@jobs_option
@fmt_option
@click.option("--no-figures", is_flag=True, help="Skip the PNG figures.")
def experiment(config, seed, out_dir, jobs, fmt, no_figures):
    """Run the baseline / recrawl / DGS experiment and write the report."""
    cfg, cfg_path = load_experiment(config, seed)
    inputs = [cfg_path] + [Path(p) for p in (cfg.observations, cfg.tracker, cfg.catalog) if p]
    report = run_experiment(cfg, jobs=jobs)
    out = _out_dir(out_dir)
    csv_path, json_path = out / "report.csv", out / "report.json"
    csv_path.write_text(summarize(report, "csv"), encoding="utf-8")
    json_path.write_text(summarize(report, "json"), encoding="utf-8")
    outputs = [csv_path, json_path]
    if not no_figures:
        from .plotting import render_figures  # matplotlib is slow to import
        outputs += render_figures(report, out)
    write_manifest(out, "experiment", cfg.master_seed, cfg.digest(), inputs, outputs)
    if fmt:
        click.echo(summarize(report, fmt), nl=False)
    failed = {r.arm: r.failed for r in report.rows if r.failed}
    rec = report.row("recrawl") if "recrawl" in report.arms else None
    tail = f", recrawl new {rec.mean_new:.2f}" if rec and rec.n else ""
    click.echo(f"experiment seed {cfg.master_seed}: {report.notes['n_users']} users, "
               f"{len(report.rows) - 1} arms{tail} -> {csv_path}")
    if failed:
        raise PartialFailure("arm evaluations failed: " + ", ".join(f"{a} ({n})" for a, n in failed.items()))


@cli.command("analyze-logs")
@click.argument("log_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--trackers", multiple=True, default=("google-dedicated", "google-all"), show_default=True,
              help="Bundled list name or newline-delimited domain file; repeatable.")
@click.option("--alexa", type=click.Path(exists=True, dir_okay=False), help="host,rank mapping for top domains.")
@click.option("--top", type=click.IntRange(min=1), default=12, show_default=True)
@click.option("--har-user", default=None, help="Treat LOG_PATH as a HAR capture for this user.")
@click.option("--lenient", is_flag=True, help="Skip malformed lines instead of failing.")
@fmt_option
@out_option
def analyze_logs(log_path, trackers, alexa, top, har_user, lenient, fmt, out_dir):
    """Tracker coverage, third-party share, cookies and top linked sites."""
    if har_user:
        records = logs.har_to_records(log_path, har_user)
    else:
        records = logs.ingest(log_path, lenient=lenient)
    if not records:
        raise ObfError(f"{log_path}: no request records")
    cover = {}
    for t in trackers:
        lst = logs.load_tracker_list(t)
        cover[lst.label] = logs.tracker_coverage(records, lst).to_dict()
    mapping = logs.load_rank_mapping(alexa) if alexa else None
    result = {
        "records": len(records),
        "users": len({r.user_id for r in records}),
        "tracker_coverage": cover,
        "third_party": logs.third_party_ratio(records).to_dict(),
        "cookies": logs.cookie_stats(records).to_dict(),
        "top_domains": [asdict(t) for t in logs.top_domains(records, top, mapping)],
    }
    out = _out_dir(out_dir)
    path = out / "log_stats.json"
    path.write_text(json.dumps(result, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    write_manifest(out, "analyze-logs", None, None, [Path(log_path)], [path])
    if fmt == "json":
        click.echo(json.dumps(result, indent=1, sort_keys=True))
    elif fmt:
        emit(result["top_domains"], fmt, ["rank", "domain", "links", "alexa_rank"])
    cov = ", ".join(f"{k} {v['mean']:.2f}" for k, v in cover.items())
    click.echo(f"{result['records']} requests from {result['users']} users: coverage {cov}; "
               f"third-party {result['third_party']['ratio']:.2f}; median cookies {result['cookies']['median']:g}")


@cli.command()
@config_option
@seed_option
@click.option("--observations", type=click.Path(exists=True, dir_okay=False),
              help="Observation JSONL; default is the configured synthetic population.")
@click.option("--folds", type=click.IntRange(min=2), default=10, show_default=True)
@click.option("--k", type=click.IntRange(1, 24), default=8, show_default=True)
@click.option("--epsilon", type=float, default=None)
@jobs_option
@fmt_option
def validate(config, seed, observations, folds, k, epsilon, jobs, fmt):
    """k-fold cross-validation of profile reconstruction."""
    cfg, _ = load_experiment(config, seed)
    eps = cfg.epsilon if epsilon is None else epsilon
    tax = load_taxonomy(cfg.taxonomy)
    if observations:
        obs = read_observations(observations, tax)
    else:
        prep = prepare_population(cfg, tax)
        _, profiles = baseline_profiles(prep, cfg.master_seed)
        obs = [Observation.from_urls(uid, urls, p) for (uid, urls), p in zip(prep.users, profiles)
               if sum(p.bits)]
    rep = association.cross_validate(obs, folds, k, eps, derive_seed(cfg.master_seed, "cv"), jobs)
    if fmt:
        emit(rep.to_dict() if fmt == "json" else {"folds": folds, "k": k, "users": len(obs),
             "mean_correct": round(rep.mean_correct, 4)}, fmt)
    click.echo(f"{folds}-fold CV over {len(obs)} users: mean correct in top {k} = {rep.mean_correct:.2f}")


def run(argv: list[str] | None = None) -> int:
    """Invoke the CLI and return its exit status instead of exiting."""
    try:
        cli.main(args=argv, prog_name="obfkit", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except PartialFailure as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_PARTIAL
    except (ObfError, ValueError, OSError, json.JSONDecodeError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA
    return 0


def main() -> None:
    sys.exit(run())
