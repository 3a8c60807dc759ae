"""Command-line front end: ``voxanon <command> [--config FILE] [flags]``.

Every command accepts a YAML/JSON config whose keys mirror its long flags
(dashes become underscores); flags override the file and unknown keys are
rejected. The merged configuration is written next to the outputs so a run
can be repeated with ``--config <that file>``.
"""
from __future__ import annotations

import sys
from pathlib import Path

import click
import yaml

from . import textio
from .anonymize import AnonymizerSpec, anonymize_batch
from .classifier import ForestConfig, condition_matrix
from .corpus import load_manifest, load_split, save_split, speaker_split
from .errors import ConfigError, VoxanonError
from .features import FAMILIES
from .pipeline import extract_corpus, feature_datasets
from .privacy import (EmbeddingCache, EvalRow, ScoreSet, audio_paths, compute_eer, compute_wer,
                      gen_trials, report_table, score_trials, write_report)
from .privacy.trials import TrialSet

DEFAULTS = {
    "anonymize": {"manifest": None, "out_dir": None, "method": None, "params": {}, "workers": 1,
                  "seed": 0},
    "gen-trials": {"manifest": None, "k_same": 5, "k_diff": 5, "out": None, "seed": 0},
    "privacy": {"manifest": None, "trials": None, "original_root": None, "conditions": {},
                "hypotheses": {}, "scores": {}, "orientation": "attack", "out_dir": None,
                "workers": 1, "seed": 0},
    "wer": {"refs": None, "hyps": None, "out": None},
    "extract-features": {"manifest": None, "audio_root": None, "families": list(FAMILIES),
                         "posteriors_dir": None, "out_dir": None},
    "patho": {"manifest": None, "conditions": {}, "split": None, "test_fraction": 0.34,
              "families": list(FAMILIES), "n_trees": 100, "max_depth": 20,
              "criterion": "entropy", "out_dir": None, "seed": 0, "workers": 1},
}
REQUIRED = {
    "anonymize": ("manifest", "out_dir", "method"),
    "gen-trials": ("manifest", "out"),
    "privacy": ("manifest", "trials", "out_dir"),
    "wer": ("refs", "hyps"),
    "extract-features": ("manifest", "out_dir"),
    "patho": ("manifest", "conditions", "out_dir"),
}


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def resolve(command: str, config_path, flags: dict, seed=None) -> dict:
    """Defaults, then config file, then explicit flags (``None`` means not given)."""
    file_cfg = load_config(config_path)
    unknown = sorted(set(file_cfg) - set(DEFAULTS[command]))
    if unknown:
        raise ConfigError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
    cfg = {**DEFAULTS[command], **file_cfg}
    for key, value in flags.items():
        if value is not None and value != () and value != {}:
            cfg[key] = value
    if seed is not None and "seed" in cfg:
        cfg["seed"] = seed
    missing = [k for k in REQUIRED[command] if not cfg.get(k)]
    if missing:
        raise ConfigError(f"{command}: missing required setting(s): "
                          + ", ".join("--" + k.replace("_", "-") for k in missing))
    return cfg


PATH_KEYS = {"manifest", "out_dir", "out", "trials", "original_root", "refs", "hyps", "audio_root",
             "posteriors_dir", "split"}
PATH_MAPS = {"conditions", "hypotheses", "scores"}


def _absolute(v):
    return None if v is None else str(Path(v).resolve())


def write_resolved(cfg: dict, directory, command: str) -> Path:
    """Write the merged config with absolute paths so it replays from any directory."""
    path = Path(directory) / f"{command}.config.yaml"
    path.parent.mkdir(parents=True, exist_ok=True)
    plain = {}
    for k, v in cfg.items():
        if k in PATH_KEYS:
            v = _absolute(v)
        elif k in PATH_MAPS:
            v = {name: _absolute(p) for name, p in v.items()}
        plain[k] = v
    path.write_text(yaml.safe_dump(plain, sort_keys=True), encoding="utf-8")
    return path


def parse_pairs(values, what: str) -> dict:
    out = {}
    for item in values or ():
        if "=" not in item:
            raise ConfigError(f"{what} must look like NAME=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _coerce(v: str):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return {"true": True, "false": False}.get(v.lower(), v)


def run_guarded(fn):
    """Map package errors to exit codes: 2 for configuration, 1 for run failures."""
    try:
        return fn()
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except (VoxanonError, FileNotFoundError, KeyError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


@click.group()
@click.option("--seed", type=int, default=None, help="Seed overriding every command's seed.")
@click.pass_context
def main(ctx, seed):
    """Voice anonymization, privacy evaluation and pathological-speech analysis."""
    ctx.ensure_object(dict)
    ctx.obj["seed"] = seed


config_option = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                             help="YAML or JSON config file.")


@main.command()
@config_option
@click.option("--manifest", type=click.Path())
@click.option("--out-dir", type=click.Path())
@click.option("--method", type=click.Choice(["mcadams", "vtln", "mel_gl", "external"]))
@click.option("--param", "params", multiple=True, help="Method setting NAME=VALUE (repeatable).")
@click.option("--workers", type=int)
@click.pass_context
def anonymize(ctx, config_path, manifest, out_dir, method, params, workers):
    """Anonymize every utterance of a manifest."""
    def run():
        flags = {"manifest": manifest, "out_dir": out_dir, "method": method, "workers": workers,
                 "params": {k: _coerce(v) for k, v in parse_pairs(params, "--param").items()}}
        cfg = resolve("anonymize", config_path, flags, ctx.obj["seed"])
        if not isinstance(cfg["params"], dict):
            raise ConfigError("params must be a mapping")
        spec = AnonymizerSpec(cfg["method"], dict(cfg["params"]), int(cfg["seed"]))
        m = load_manifest(cfg["manifest"])
        report = anonymize_batch(m, spec, cfg["out_dir"], int(cfg["workers"]))
        write_resolved(cfg, cfg["out_dir"], "anonymize")
        click.echo(f"{report.n_ok} ok ({report.n_warnings} with warnings), "
                   f"{report.n_failed} failed -> {cfg['out_dir']}")
        for utt, status, _ in report.rows:
            if status.startswith("error"):
                click.echo(f"  {utt}: {status}", err=True)
        if report.n_failed:
            sys.exit(1)
    run_guarded(run)


@main.command("gen-trials")
@config_option
@click.option("--manifest", type=click.Path())
@click.option("--k-same", type=int)
@click.option("--k-diff", type=int)
@click.option("--out", type=click.Path())
@click.pass_context
def gen_trials_cmd(ctx, config_path, manifest, k_same, k_diff, out):
    """Write a verification trial list."""
    def run():
        cfg = resolve("gen-trials", config_path,
                      {"manifest": manifest, "k_same": k_same, "k_diff": k_diff, "out": out},
                      ctx.obj["seed"])
        t = gen_trials(load_manifest(cfg["manifest"]), int(cfg["k_same"]), int(cfg["k_diff"]),
                       int(cfg["seed"]))
        t.save(cfg["out"])
        write_resolved(cfg, Path(cfg["out"]).parent, "gen-trials")
        click.echo(f"{len(t)} trials ({t.n_targets} target) -> {cfg['out']}")
    run_guarded(run)


def _condition_scores(name, trials, cfg, cache, enroll, test):
    if name in cfg["scores"]:
        return ScoreSet.from_mapping(trials, textio.read_scores(cfg["scores"][name]))
    return score_trials(trials, enroll, test, cache=cache, workers=int(cfg["workers"]))


@main.command()
@config_option
@click.option("--manifest", type=click.Path())
@click.option("--trials", type=click.Path())
@click.option("--original-root", type=click.Path())
@click.option("--condition", "conditions", multiple=True, help="NAME=ANON_AUDIO_DIR (repeatable).")
@click.option("--hypotheses", multiple=True, help="NAME=FILE; use NAME 'original' for unmodified audio.")
@click.option("--scores", multiple=True, help="NAME=FILE of external verifier scores.")
@click.option("--orientation", type=click.Choice(["attack", "anon_anon"]))
@click.option("--out-dir", type=click.Path())
@click.option("--workers", type=int)
@click.pass_context
def privacy(ctx, config_path, manifest, trials, original_root, conditions, hypotheses, scores,
            orientation, out_dir, workers):
    """EER (and WER when hypotheses are given) before and after anonymization."""
    def run():
        flags = {"manifest": manifest, "trials": trials, "original_root": original_root,
                 "conditions": parse_pairs(conditions, "--condition"),
                 "hypotheses": parse_pairs(hypotheses, "--hypotheses"),
                 "scores": parse_pairs(scores, "--scores"), "orientation": orientation,
                 "out_dir": out_dir, "workers": workers}
        cfg = resolve("privacy", config_path, flags, ctx.obj["seed"])
        m = load_manifest(cfg["manifest"])
        t = TrialSet.load(cfg["trials"])
        t.check_manifest(m)
        orig = audio_paths(m, cfg["original_root"] or m.root)
        refs = {e.utt_id: e.transcript for e in m if e.transcript}
        hyps = {k: textio.read_transcripts(v) for k, v in cfg["hypotheses"].items()}
        cache = EmbeddingCache()
        eer_o, _ = compute_eer(t, _condition_scores("original", t, cfg, cache, orig, orig))
        wer_o = compute_wer(refs, hyps["original"]).wer if "original" in hyps else None
        rows = []
        names = list(cfg["conditions"]) or [n for n in cfg["scores"] if n != "original"]
        for name in names:
            anon = audio_paths(m, cfg["conditions"][name]) if name in cfg["conditions"] else {}
            enroll = orig if cfg["orientation"] == "attack" else anon
            eer_a, _ = compute_eer(t, _condition_scores(name, t, cfg, cache, enroll, anon))
            wer_a = compute_wer(refs, hyps[name]).wer if name in hyps else None
            rows.append(EvalRow(name, eer_o, eer_a, wer_o, wer_a))
        if not rows:
            rows.append(EvalRow("original", eer_o, eer_o, wer_o, wer_o))
        out = Path(cfg["out_dir"])
        write_report(out / "privacy_report.csv", rows)
        table = report_table(rows)
        (out / "privacy_report.txt").write_text(table + "\n", encoding="utf-8")
        write_resolved(cfg, out, "privacy")
        click.echo(table)
    run_guarded(run)


@main.command()
@config_option
@click.option("--refs", type=click.Path(), help="Reference transcripts, or a manifest (.tsv).")
@click.option("--hyps", type=click.Path())
@click.option("--out", type=click.Path())
def wer(config_path, refs, hyps, out):
    """Corpus word error rate of hypothesis transcripts."""
    def run():
        cfg = resolve("wer", config_path, {"refs": refs, "hyps": hyps, "out": out})
        if str(cfg["refs"]).endswith(".tsv"):
            ref_map = {e.utt_id: e.transcript or "" for e in load_manifest(cfg["refs"])}
        else:
            ref_map = textio.read_transcripts(cfg["refs"])
        r = compute_wer(ref_map, textio.read_transcripts(cfg["hyps"]))
        line = (f"WER {r.wer:.2f}% (S={r.substitutions} D={r.deletions} I={r.insertions} "
                f"N={r.ref_words})")
        if cfg["out"]:
            textio.write_csv(cfg["out"], ["wer", "substitutions", "deletions", "insertions",
                                          "ref_words"], [list(r)])
            write_resolved(cfg, Path(cfg["out"]).parent, "wer")
        click.echo(line)
    run_guarded(run)


@main.command("extract-features")
@config_option
@click.option("--manifest", type=click.Path())
@click.option("--audio-root", type=click.Path(), help="Read audio here instead of the manifest root.")
@click.option("--family", "families", multiple=True, type=click.Choice(FAMILIES))
@click.option("--posteriors-dir", type=click.Path(), help="External <utt_id>.txt posteriors.")
@click.option("--out-dir", type=click.Path())
def extract_features(config_path, manifest, audio_root, families, posteriors_dir, out_dir):
    """Write one feature CSV per family."""
    def run():
        cfg = resolve("extract-features", config_path,
                      {"manifest": manifest, "audio_root": audio_root,
                       "families": list(families) or None, "posteriors_dir": posteriors_dir,
                       "out_dir": out_dir})
        m = load_manifest(cfg["manifest"])
        paths, notes = _extract(m, cfg["audio_root"], cfg["posteriors_dir"], cfg["out_dir"],
                                cfg["families"])
        write_resolved(cfg, cfg["out_dir"], "extract-features")
        click.echo(f"{len(paths)} utterances, {len(notes)} fallback(s) -> {cfg['out_dir']}")
        for utt, msg in notes:
            click.echo(f"  {utt}: {msg}", err=True)
    run_guarded(run)


def _extract(m, audio_root, posteriors_dir, out_dir, families):
    from .corpus import attach_external
    from .errors import CoverageError

    paths = audio_paths(m, audio_root or m.root)
    missing = [u for u in m.ids if u not in paths]
    if missing:
        raise CoverageError(f"{len(missing)} utterance(s) have no audio", missing)
    posteriors = None
    if posteriors_dir:
        posteriors = attach_external(m, "posteriors", posteriors_dir, 1.0).items
    return paths, extract_corpus(m, paths, out_dir, families, posteriors)


@main.command()
@config_option
@click.option("--manifest", type=click.Path())
@click.option("--condition", "conditions", multiple=True,
              help="NAME=DIR; DIR holds <family>.csv files or audio to extract from.")
@click.option("--split", type=click.Path(), help="'<utt_id> <train|test>' lines.")
@click.option("--family", "families", multiple=True, type=click.Choice(FAMILIES))
@click.option("--n-trees", type=int)
@click.option("--max-depth", type=int)
@click.option("--out-dir", type=click.Path())
@click.option("--workers", type=int)
@click.pass_context
def patho(ctx, config_path, manifest, conditions, split, families, n_trees, max_depth, out_dir,
          workers):
    """Healthy/pathological classification per condition and feature family."""
    def run():
        flags = {"manifest": manifest, "conditions": parse_pairs(conditions, "--condition"),
                 "split": split, "families": list(families) or None, "n_trees": n_trees,
                 "max_depth": max_depth, "out_dir": out_dir, "workers": workers}
        cfg = resolve("patho", config_path, flags, ctx.obj["seed"])
        m = load_manifest(cfg["manifest"])
        out = Path(cfg["out_dir"])
        if cfg["split"]:
            sp = load_split(cfg["split"], m)
        else:
            sp = speaker_split(m, float(cfg["test_fraction"]), int(cfg["seed"]))
            save_split(sp, out / "split.txt")
        fams = list(cfg["families"])
        train, test = {}, {}
        for name, src in cfg["conditions"].items():
            src = Path(src)
            if not all((src / f"{f}.csv").is_file() for f in fams):
                _extract(m, src, None, out / "features" / name, fams)
                src = out / "features" / name
            train[name], test[name] = feature_datasets(src, sp, fams)
        forest_cfg = ForestConfig(int(cfg["n_trees"]), int(cfg["max_depth"]), cfg["criterion"],
                                  seed=int(cfg["seed"]))
        report = condition_matrix(train, test, forest_cfg, int(cfg["workers"]))
        report.write_csv(out / "patho_report.csv")
        text = report.accuracy_table() + "\n\n" + report.average_table()
        (out / "patho_report.txt").write_text(text + "\n", encoding="utf-8")
        write_resolved(cfg, out, "patho")
        click.echo(text)
    run_guarded(run)


@main.command("synth-corpus")
@click.option("--panel", type=click.Choice(["privacy", "patho"]), default="privacy", show_default=True)
@click.option("--utts-per-speaker", type=int, default=6, show_default=True)
@click.option("--out-dir", type=click.Path(), required=True)
@click.pass_context
def synth_corpus(ctx, panel, utts_per_speaker, out_dir):
    """Write the bundled synthetic speaker panel as audio plus manifest.tsv."""
    from .synth import build_corpus

    def run():
        seed = ctx.obj["seed"] if ctx.obj["seed"] is not None else 0
        m = build_corpus(out_dir, panel, utts_per_speaker, seed)
        click.echo(f"{len(m)} utterances, {len(m.by_speaker())} speakers -> {Path(out_dir) / 'manifest.tsv'}")
    run_guarded(run)


@main.command()
@click.option("--quick", is_flag=True, help="Skip the slower end-to-end checks.")
@click.pass_context
def selftest(ctx, quick):
    """Run the built-in invariant checks on bundled synthetic data."""
    from .selftest import run_selftest

    seed = ctx.obj["seed"] if ctx.obj["seed"] is not None else 0
    ok = run_selftest(seed=seed, quick=quick, echo=click.echo)
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
