"""Train non-autoregressive proxy heads on teacher scores and evaluate them."""

import logging
import pathlib
import pprint
import sys

import click
import numpy as np
import pandas as pd

from .constants import (
    AGGREGATE_MODES,
    DEFER_DIRECTIONS,
    DEFER_POLICIES,
    DERIVED_TARGETS,
    FILTER_DIRECTIONS,
    HISTORY_FILE_SUFFIX,
    LOSS_KINDS,
    MIN_CORRELATION_BATCH,
    CORRELATION_LOSSES,
    OOD_DIRECTIONS,
    POOLINGS,
    RECORD_SUFFIX,
    TARGET_NAMES,
    VARIANTS,
    detection_schema,
    history_schema,
)
from .metrics import pearson_exact, spearman_exact
from .naphead import HeadParams, TrainConfig, init_head, predict, train_head
from .records import (
    read_records,
    split_records,
    stack_features,
    target_values,
    write_records,
)
from .synthkit import CorpusSpec, TeacherSpec, corpus_summary, gen_corpus
from .tasks import (
    DeferralInput,
    deferral_curve,
    filtering_curve,
    matched_operating_point,
    ood_detect,
)
from .utils import (
    data_errors,
    ensure_path_exists,
    load_config,
    load_module_dict,
    parse_fractions,
    set_logging_config,
    time_process,
    write_frame,
)

CFG = {
    "output_dir": "napkit_output",
    "log_file": "log.txt",
    "learning_rate": 1e-4,
    "epsilon": 1e-6,
    "alpha": 0.0,
    "batch_size": 32,
    "max_epochs": 30,
    "evals_per_epoch": 10,
    "variant": "3L-SM",
    "pooling": "average",
    "hidden_width": 64,
    "seed": 0,
}
CONFIG_FILE = load_config("./config.py")
CFG.update(CONFIG_FILE)
CONTEXT_SETTINGS = dict(
    default_map=CFG,
    help_option_names=['-h', '--help'],
)
OUTPUT_DIR = ensure_path_exists(CFG.get("output_dir"))
TARGET_CHOICES = TARGET_NAMES + list(DERIVED_TARGETS)


def resolve_dir(ctx, param, path):
    if path is not None:
        return OUTPUT_DIR / path


def ensure_dir(ctx, param, path):
    if path is None:
        path = OUTPUT_DIR
    return ensure_path_exists(path)


def configure_logging(ctx, param, verbose):
    """Configure logging level and destination based on user input."""
    return set_logging_config(verbose, logfile=(OUTPUT_DIR / CFG.get("log_file")))


def params_option(f):
    return click.option(
        "-p", "--params",
        type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path),
        help="Head parameter file to score the records with.",
    )(f)


def score_field_option(f):
    return click.option(
        "-s", "--score-field",
        type=click.Choice(TARGET_CHOICES),
        help="Use a stored target as the score instead of a trained head.",
    )(f)


def score_records(records, params_path, score_field) -> np.ndarray:
    """Scores from a trained head or from a stored target, exactly one of them."""
    if (params_path is None) == (score_field is None):
        raise click.UsageError("Give exactly one of --params or --score-field.")
    if score_field is not None:
        return target_values(records, score_field)
    params = HeadParams.load(params_path)
    features, mask = stack_features(records)
    return predict(params, features, mask)


@click.group(context_settings=CONTEXT_SETTINGS, invoke_without_command=True)
@click.option(
    "-v",
    "--verbose",
    count=True,
    callback=configure_logging,
    help="Print logging messages to the console in addition to the log file. "
         "-v is informative, -vv is detailed (for debugging)."
)
@click.pass_context
def main(ctx, verbose):
    """Train proxy heads that imitate teacher sequence scores, and evaluate them.

    Default hyperparameters and the output directory are specified in the
    config.py file. If provided, CLI arguments override the default values
    from the config.
    """
    logging.info("START LOG")
    if verbose:
        click.secho("Configuration values:", fg="yellow")
        click.echo(pprint.pformat(CFG))
        click.echo(f"Invoked command: {ctx.invoked_subcommand}")
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())
        sys.exit(0)


@main.command("gen")
@click.argument(
    "config_path",
    type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path),
)
@click.option(
    "-o", "--output-dir",
    type=click.Path(file_okay=False, path_type=pathlib.Path),
    callback=ensure_dir,
    help="The directory that the record files are written to.",
)
@time_process
@data_errors
def gen(config_path, output_dir):
    """Generate synthetic scored corpora from a corpus config file.

    The config is a python module with a `teacher` dict and a `corpora`
    list of dicts. Each corpus is written to <name>.jsonl.
    """
    config = load_module_dict(config_path)
    teacher = TeacherSpec.from_dict(config["teacher"])
    specs = [CorpusSpec.from_dict(corpus) for corpus in config["corpora"]]
    all_records = []
    for spec in specs:
        click.secho(f"Generate corpus {spec.name} ({spec.domain})", fg="cyan")
        records = gen_corpus(spec, teacher)
        write_records(output_dir / f"{spec.name}{RECORD_SUFFIX}", records)
        all_records.extend(records)
    click.echo(corpus_summary(all_records).to_string(index=False))


@main.command("train-head")
@click.argument(
    "records_path",
    type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path),
)
@click.option("-t", "--target", type=click.Choice(TARGET_CHOICES), required=True,
              help="Teacher score the head learns to imitate.")
@click.option("-l", "--loss", type=click.Choice(LOSS_KINDS), default="scc", show_default=True)
@click.option("--epsilon", type=float, default=CFG.get("epsilon"),
              help="Soft rank smoothing of the scc and ep_al losses.")
@click.option("--alpha", type=float, default=CFG.get("alpha"),
              help="Decorrelation weight of the ep_al loss.")
@click.option("--decorrelate-field", type=click.Choice(TARGET_CHOICES), default="aleatoric",
              help="Target that ep_al decorrelates the predictions from.")
@click.option("--variant", type=click.Choice(VARIANTS), default=CFG.get("variant"))
@click.option("--pooling", type=click.Choice(POOLINGS), default=CFG.get("pooling"))
@click.option("--hidden-width", type=click.IntRange(min=1), default=CFG.get("hidden_width"))
@click.option("--lr", "learning_rate", type=float, default=CFG.get("learning_rate"))
@click.option("--batch", "batch_size", type=click.IntRange(min=1),
              default=CFG.get("batch_size"))
@click.option("--max-epochs", type=click.IntRange(min=1), default=CFG.get("max_epochs"))
@click.option("--evals-per-epoch", type=click.IntRange(min=1),
              default=CFG.get("evals_per_epoch"))
@click.option("--patience", "patience_evals", type=click.IntRange(min=1),
              help="Evaluations without improvement before stopping. "
                   "Defaults to one epoch.")
@click.option("--seed", type=int, default=CFG.get("seed"))
@click.option(
    "-o", "--out",
    type=click.Path(dir_okay=False, path_type=pathlib.Path),
    callback=resolve_dir,
    help="Head parameter file. The history is written next to it.",
)
@time_process
def train(records_path, target, loss, epsilon, alpha, decorrelate_field, variant,
          pooling, hidden_width, learning_rate, batch_size, max_epochs,
          evals_per_epoch, patience_evals, seed, out):
    """Train a proxy head on the train split, validating on the validation split."""
    if loss in CORRELATION_LOSSES and batch_size < MIN_CORRELATION_BATCH:
        raise click.BadParameter(
            f"{loss} needs batches of at least {MIN_CORRELATION_BATCH}",
            param_hint="--batch")
    if out is None:
        out = OUTPUT_DIR / f"{target}_{variant}_{pooling}_{loss}.head"
    _train(records_path, target, variant, pooling, out, dict(
        loss=dict(kind=loss, epsilon=epsilon, alpha=alpha,
                  decorrelate_field=decorrelate_field),
        learning_rate=learning_rate,
        batch_size=batch_size,
        max_epochs=max_epochs,
        evals_per_epoch=evals_per_epoch,
        patience_evals=patience_evals,
        seed=seed,
        hidden_width=hidden_width,
    ))


@data_errors
def _train(records_path, target, variant, pooling, out, config_dict):
    config = TrainConfig(**config_dict)
    records = read_records(records_path)
    if not records:
        raise ValueError(f"no records in {records_path}")
    init_params = init_head(variant, pooling, records[0].features.shape[1],
                            config.hidden_width, config.seed)
    click.secho(f"Train {variant} head on {target} with {config.loss.kind} loss", fg="cyan")
    params, history = train_head(records, target, config, init_params)
    params.save(out)
    history_frame = history_schema.validate(
        pd.DataFrame(history, columns=["step", "validation_spearman"]))
    write_frame(out.with_name(out.name + HISTORY_FILE_SUFFIX), history_frame)
    click.secho(f"Best validation spearman: {history_frame.validation_spearman.max():.4f}",
                fg="green")


@main.command("eval-detect")
@click.argument("id_records",
                type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path))
@click.argument("ood_records",
                type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path))
@params_option
@score_field_option
@click.option("-d", "--direction", type=click.Choice(OOD_DIRECTIONS),
              default="higher_is_ood", show_default=True)
@click.option("-o", "--out", type=click.Path(dir_okay=False, path_type=pathlib.Path),
              default="detection.csv", callback=resolve_dir,
              help="CSV file the result row is written to.")
@click.option("--append", is_flag=True,
              help="Append the row to the CSV file instead of overwriting it.")
@data_errors
def eval_detect(id_records, ood_records, params, score_field, direction, out, append):
    """OOD detection AUROC (%) of the scores, the OOD records being positive."""
    id_scores = score_records(read_records(id_records), params, score_field)
    ood_scores = score_records(read_records(ood_records), params, score_field)
    auroc = ood_detect(id_scores, ood_scores, direction)
    click.echo(f"{auroc:.1f}")
    row = detection_schema.validate(pd.DataFrame([{
        "id_records": str(id_records),
        "ood_records": str(ood_records),
        "direction": direction,
        "auroc": auroc,
    }]))
    write_frame(out, row, mode="a" if append else "w")


@main.command("eval-filter")
@click.argument("records_path",
                type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path))
@params_option
@score_field_option
@click.option("-m", "--metric-field", type=click.Choice(TARGET_CHOICES), required=True,
              help="Per-example quality, or error counts in corpus_wer mode.")
@click.option("--mode", type=click.Choice(AGGREGATE_MODES), default="mean_metric",
              show_default=True)
@click.option("-d", "--direction", type=click.Choice(FILTER_DIRECTIONS),
              default="remove_lowest_predicted", show_default=True)
@click.option("-f", "--fractions", default="0:0.9:0.05", show_default=True,
              help="Comma separated fractions, or start:stop:step.")
@click.option("-o", "--out", type=click.Path(dir_okay=False, path_type=pathlib.Path),
              default="filter_curve.csv", callback=resolve_dir)
@data_errors
def eval_filter(records_path, params, score_field, metric_field, mode, direction,
                fractions, out):
    """Aggregate quality of the remainder as examples are filtered out."""
    records = read_records(records_path)
    predicted = score_records(records, params, score_field)
    ref_lens = target_values(records, "ref_len") if mode == "corpus_wer" else None
    curve = filtering_curve(predicted, target_values(records, metric_field),
                            parse_fractions(fractions), direction, mode, ref_lens)
    write_frame(out, curve)
    click.echo(curve.to_string(index=False))


@main.command("eval-defer")
@click.argument("records_path",
                type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path))
@params_option
@score_field_option
@click.option("-m", "--metric", "metric_name", type=click.Choice(["similarity", "wer"]),
              default="similarity", show_default=True,
              help="Quality measure; the _small and _large targets are used.")
@click.option("--mode", type=click.Choice(AGGREGATE_MODES), default="mean_metric",
              show_default=True)
@click.option("-d", "--direction", type=click.Choice(DEFER_DIRECTIONS),
              default="above_threshold_small", show_default=True)
@click.option("--policy", type=click.Choice(DEFER_POLICIES), default="proxy",
              show_default=True)
@click.option("--match-time", type=float, help="Report the metric at this total time.")
@click.option("--match-metric", type=float, help="Report the total time at this metric.")
@click.option("-o", "--out", type=click.Path(dir_okay=False, path_type=pathlib.Path),
              default="operating_curve.csv", callback=resolve_dir)
@data_errors
def eval_defer(records_path, params, score_field, metric_name, mode, direction, policy,
               match_time, match_metric, out):
    """Operating curve of routing records to a small or a large model."""
    records = read_records(records_path)
    scores = score_records(records, params, score_field)
    inputs = [
        DeferralInput(
            proxy_score=score,
            metric_small=record.target(f"{metric_name}_small"),
            metric_large=record.target(f"{metric_name}_large"),
            time_small=record.times["small"],
            time_large=record.times["large"],
            time_proxy=record.times.get("proxy", 0.0),
            errors_small=record.targets.get("errors_small"),
            errors_large=record.targets.get("errors_large"),
            ref_len=record.targets.get("ref_len"),
        )
        for score, record in zip(scores, records)
    ]
    curve = deferral_curve(inputs, policy, direction, mode)
    write_frame(out, curve)
    click.echo(curve.to_string(index=False))
    matched = []
    if match_time is not None:
        matched.append(matched_operating_point(curve, time=match_time))
    if match_metric is not None:
        matched.append(matched_operating_point(curve, metric=match_metric))
    if matched:
        rows = pd.DataFrame(matched, columns=["threshold", "metric", "time"])
        rows.insert(1, "fraction_deferred", np.nan)
        write_frame(out, rows, mode="a")
        click.secho("Matched operating points:", fg="yellow")
        click.echo(rows.to_string(index=False))


@main.command("score")
@click.argument("records_path",
                type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path))
@click.option(
    "-p", "--params", required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path))
@click.option("-o", "--out", type=click.Path(dir_okay=False, path_type=pathlib.Path),
              default="scores.csv", callback=resolve_dir)
@data_errors
def score(records_path, params, out):
    """Export the head's score of every record as id,score."""
    records = read_records(records_path)
    scores = score_records(records, params, None)
    write_frame(out, pd.DataFrame({"id": [r.id for r in records], "score": scores}))


@main.command("compare")
@click.argument("records_path",
                type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path))
@params_option
@score_field_option
@click.option("-t", "--target", type=click.Choice(TARGET_CHOICES), required=True)
@click.option("-o", "--out", type=click.Path(dir_okay=False, path_type=pathlib.Path),
              default="compare.csv", callback=resolve_dir)
@data_errors
def compare(records_path, params, score_field, target, out):
    """Spearman and Pearson correlation of the scores with a target, per split and domain."""
    records = read_records(records_path)
    scores = dict(zip((r.id for r in records),
                      score_records(records, params, score_field)))
    rows = []
    for split, split_group in split_records(records).items():
        for domain in sorted({r.domain for r in split_group}):
            group = [r for r in split_group if r.domain == domain]
            rows.append(_correlations(split, domain, group, scores, target))
    table = pd.DataFrame(rows)
    write_frame(out, table)
    click.echo(table.to_string(index=False))


def _correlations(split, domain, group, scores, target) -> dict:
    predicted = [scores[r.id] for r in group]
    actual = target_values(group, target)
    row = {"split": split, "domain": domain, "records": len(group)}
    for name, correlation in [("spearman", spearman_exact), ("pearson", pearson_exact)]:
        try:
            row[name] = correlation(predicted, actual)
        except ValueError as error:
            logging.warning("No %s correlation for %s/%s: %s", name, split, domain, error)
            row[name] = np.nan
    return row
