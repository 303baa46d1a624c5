"""Command-line front end.

Wires ingestion, the store, recall and the evaluation harness into
reproducible runs. All data output goes to stdout (or ``--out``) as UTF-8;
warnings and progress notes go to stderr so JSON output stays byte-stable.

Exit codes: 0 success, 2 usage error, 3 data or integrity error, 4 not found.
"""

from __future__ import annotations

import functools
import json
import time
from dataclasses import dataclass, replace
from pathlib import Path

import click

from .cooccurrence import CooccurrenceKind
from .errors import ConfigurationError, IntegrityError, NotFoundError, ValidationError
from .evaluation import compare_trigger_vs_recall, delta_sweep
from .ingestion import ingest_corpus, parse_feature_map, vectorize_features
from .recall import Normalizer, RecallRequest, recall_items
from .store import Store
from .vectors import ItemVector, Metric

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NOT_FOUND = 4

REBUILD_TOLERANCE = 1e-12


class _CommandError(click.ClickException):
    """A domain failure with a specific process exit code."""

    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


def _guarded(f):
    """Translate domain errors into exit-coded failures naming the subcommand."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        name = click.get_current_context().command_path
        try:
            return f(*args, **kwargs)
        except NotFoundError as exc:
            raise _CommandError(f"{name}: {exc}", EXIT_NOT_FOUND) from exc
        except (ValidationError, ConfigurationError, IntegrityError) as exc:
            raise _CommandError(f"{name}: {exc}", EXIT_DATA) from exc

    return wrapper


def _parse_metric_cb(ctx, param, value):
    try:
        return Metric.parse(value)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from None


def _parse_kind_cb(ctx, param, value):
    try:
        return CooccurrenceKind.parse(value)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from None


def _parse_normalizer_cb(ctx, param, value):
    try:
        return Normalizer.parse(value)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from None


def _epsilon_cb(ctx, param, value):
    if value is not None and not value >= 0.0:
        raise click.BadParameter("must be >= 0")
    return value


def _parse_deltas_cb(ctx, param, value):
    deltas = []
    for piece in value.split(","):
        piece = piece.strip()
        if not piece:
            continue
        try:
            d = float(piece)
        except ValueError:
            raise click.BadParameter(f"bad delta {piece!r}") from None
        if not d >= 0.0:
            raise click.BadParameter(f"deltas must be >= 0, got {piece}")
        if deltas and d < deltas[-1]:
            raise click.BadParameter(f"deltas must be sorted ascending, got {piece} after {deltas[-1]:g}")
        deltas.append(d)
    return deltas


_data_dir_option = click.option(
    "--data-dir",
    "data_dir",
    envvar="RECALL_DATA_DIR",
    required=True,
    type=click.Path(path_type=Path),
    metavar="DIR",
    help="Data directory (falls back to $RECALL_DATA_DIR).",
)


def _metric_option(f):
    return click.option(
        "--metric",
        default="cosine",
        callback=_parse_metric_cb,
        metavar="[euclidean|cosine]",
        help="Distance function. Default: cosine.",
    )(f)


def _cooccurrence_option(f):
    return click.option(
        "--cooccurrence",
        "kind",
        default="binary",
        callback=_parse_kind_cb,
        metavar="[binary|proportional|asymptotic:<delta>]",
        help="Co-occurrence kernel. Default: binary.",
    )(f)


def _normalizer_options(f):
    f = click.option(
        "--dense-sigmoid",
        is_flag=True,
        help="Apply the sigmoid to every coordinate, densifying the recall vector.",
    )(f)
    f = click.option(
        "--normalizer",
        default="l2",
        callback=_parse_normalizer_cb,
        metavar="[identity|l2|sigmoid[:<a>[:<b>]]]",
        help="Recall-vector normalizer. Default: l2.",
    )(f)
    return f


def _subtract_diagonal_option(f):
    return click.option(
        "--subtract-diagonal",
        is_flag=True,
        help="Zero the matrix diagonal before expanding the trigger.",
    )(f)


def _include_trigger_option(f):
    return click.option(
        "--include-trigger",
        is_flag=True,
        help="Keep the trigger itself among the candidates (matched by item id).",
    )(f)


@dataclass
class RunConfig:
    """One command invocation's validated knobs."""

    data_dir: Path
    metric: Metric
    kind: CooccurrenceKind
    normalizer: Normalizer
    subtract_diagonal: bool
    exclude_trigger: bool


def _build_config(data_dir, metric, kind, normalizer, dense_sigmoid, subtract_diagonal, include_trigger) -> RunConfig:
    if dense_sigmoid:
        if normalizer.name != "sigmoid":
            raise click.UsageError("--dense-sigmoid requires --normalizer sigmoid")
        normalizer = replace(normalizer, dense=True)
    _warn_large_delta(kind)
    return RunConfig(
        data_dir=data_dir,
        metric=metric,
        kind=kind,
        normalizer=normalizer,
        subtract_diagonal=subtract_diagonal,
        exclude_trigger=not include_trigger,
    )


def _warn_large_delta(kind: CooccurrenceKind) -> None:
    if kind.name == "asymptotic" and kind.delta > 1.0:
        click.echo(
            f"warning: asymptotic delta {kind.delta:g} > 1; the off-diagonal weight "
            "is meant to be small",
            err=True,
        )


def _json_line(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def _emit(lines: list[str], out: Path | None) -> None:
    text = "\n".join(lines) + "\n" if lines else ""
    if out is None:
        click.echo(text, nl=False)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
        click.echo(f"wrote {len(lines)} line(s) to {out}", err=True)


def _require_user(store: Store, user_id: str) -> None:
    if not store.user_exists(user_id):
        raise NotFoundError(f"unknown user {user_id!r}")


def _resolve_trigger(store: Store, token: str) -> ItemVector:
    """A trigger is a corpus document id, or @file pointing at a features map."""
    if not token.startswith("@"):
        return store.get_item(token)
    path = Path(token[1:])
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise NotFoundError(f"trigger file {path} does not exist") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc.msg})") from None
    if isinstance(obj, dict) and "features" in obj:
        raw = obj["features"]
        item_id = obj.get("id") if isinstance(obj.get("id"), str) else path.stem
    elif isinstance(obj, dict):
        raw, item_id = obj, path.stem
    else:
        raise ValidationError(f"{path}: expected a JSON object with a feature map")
    features = parse_feature_map(raw, str(path))
    dictionary, _ = store.load_dictionary()
    vector, unknown = vectorize_features(item_id, features, dictionary)
    if unknown:
        shown = ", ".join(unknown[:5]) + ("..." if len(unknown) > 5 else "")
        click.echo(
            f"warning: {path}: ignoring {len(unknown)} feature(s) not in the dictionary: {shown}",
            err=True,
        )
    return vector


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def cli() -> None:
    """Recall related past recommendations from a trigger item.

    Per-user co-occurrence statistics expand a trigger into a recall vector,
    which is then matched against the user's own recommendation history.
    """


@cli.command("ingest")
@click.option("--corpus", required=True, type=click.Path(path_type=Path, exists=False), metavar="FILE",
              help="JSONL corpus: one record per line with 'id' plus 'text' or 'features'.")
@_data_dir_option
@_guarded
def ingest_cmd(corpus: Path, data_dir: Path) -> None:
    """Build the feature dictionary and vectorize a corpus."""
    if not corpus.is_file():
        raise NotFoundError(f"corpus file {corpus} does not exist")
    result = ingest_corpus(corpus)
    store = Store(data_dir)
    store.save_dictionary(result.dictionary, result.model)
    store.save_items(result.items)
    click.echo(_json_line({
        "documents": len(result.items),
        "features": len(result.dictionary),
        "weighting": result.weighting,
    }))


@cli.command("log")
@click.option("--user", "user_id", required=True, metavar="ID", help="User the item was recommended to.")
@click.option("--item", "item_id", required=True, metavar="DOC-ID", help="Document id from the ingested corpus.")
@click.option("--ts", type=int, default=None, metavar="SECONDS",
              help="Event timestamp (seconds since epoch). Default: now.")
@_cooccurrence_option
@_data_dir_option
@_guarded
def log_cmd(user_id: str, item_id: str, ts: int | None, kind: CooccurrenceKind, data_dir: Path) -> None:
    """Append one recommendation event and update the user's matrices."""
    _warn_large_delta(kind)
    store = Store(data_dir)
    item = store.get_item(item_id)
    if ts is None:
        ts = int(time.time())
    ack = store.append_recommendation(user_id, item, ts, kinds=[kind])
    click.echo(_json_line({
        "user": user_id,
        "item_id": item_id,
        "ts": ts,
        "events": ack.events,
        "updated_kinds": ack.updated_kinds,
    }))


@cli.command("recall")
@click.option("--user", "user_id", required=True, metavar="ID")
@click.option("--trigger", required=True, metavar="DOC-ID|@FILE",
              help="Trigger item: a corpus document id, or @file with a feature map.")
@click.option("--epsilon", type=float, default=None, callback=_epsilon_cb, metavar="R",
              help="Distance threshold (strict).")
@click.option("--top-k", type=int, default=None, metavar="N", help="Return the N nearest instead.")
@_metric_option
@_cooccurrence_option
@_normalizer_options
@_subtract_diagonal_option
@_include_trigger_option
@_data_dir_option
@_guarded
def recall_cmd(user_id, trigger, epsilon, top_k, metric, kind, normalizer, dense_sigmoid,
               subtract_diagonal, include_trigger, data_dir) -> None:
    """Recall items from a user's history that relate to a trigger."""
    if (epsilon is None) == (top_k is None):
        raise click.UsageError("exactly one of --epsilon and --top-k is required")
    if top_k is not None and top_k < 1:
        raise click.UsageError("--top-k must be >= 1")
    config = _build_config(data_dir, metric, kind, normalizer, dense_sigmoid,
                           subtract_diagonal, include_trigger)
    store = Store(config.data_dir)
    _require_user(store, user_id)
    trigger_vec = _resolve_trigger(store, trigger)
    history = store.load_history(user_id)
    state = store.load_matrix(user_id, config.kind)
    request = RecallRequest(
        user_id=user_id,
        trigger=trigger_vec,
        epsilon=epsilon,
        top_k=top_k,
        metric=config.metric,
        normalizer=config.normalizer,
        subtract_diagonal=config.subtract_diagonal,
        exclude_trigger=config.exclude_trigger,
    )
    result = recall_items(request, history, state)
    click.echo(_json_line(result.to_dict()))


@cli.group("eval")
def eval_group() -> None:
    """Offline comparisons of trigger matching vs recall-vector matching."""


def _eval_output_options(f):
    f = click.option("--plot", type=click.Path(path_type=Path, dir_okay=False), default=None,
                     metavar="FILE", help="Also render a figure (png/pdf/svg by extension).")(f)
    f = click.option("--format", "fmt", type=click.Choice(["json", "table"]), default="json",
                     help="Output format. Default: json (one line per report).")(f)
    f = click.option("--out", type=click.Path(path_type=Path, dir_okay=False), default=None,
                     metavar="FILE", help="Write output to a file instead of stdout.")(f)
    return f


def _compare_table(report) -> list[str]:
    lines = [
        f"trigger        {report.trigger_id}",
        f"epsilon        {report.epsilon:g}",
        f"epsilon_prime  {report.epsilon_prime:g}",
        f"set_trigger    {', '.join(report.set_trigger) or '(none)'}",
        f"set_recall     {', '.join(report.set_recall) or '(none)'}",
        f"jaccard        {report.jaccard:.6f}",
        f"size_delta     {report.size_delta:+d}",
        "",
        f"{'item':<20} {'to_trigger':>12} {'to_recall':>12}",
    ]
    for shift in report.distance_shift:
        lines.append(f"{shift.item_id:<20} {shift.to_trigger:>12.6f} {shift.to_recall:>12.6f}")
    return lines


@eval_group.command("compare")
@click.option("--user", "user_id", required=True, metavar="ID")
@click.option("--trigger", required=True, metavar="DOC-ID|@FILE")
@click.option("--epsilon", type=float, required=True, callback=_epsilon_cb, metavar="R",
              help="Threshold for the raw trigger neighborhood.")
@click.option("--epsilon-prime", type=float, default=None, callback=_epsilon_cb, metavar="R",
              help="Threshold for the recall-vector neighborhood. Default: epsilon.")
@_metric_option
@_cooccurrence_option
@_normalizer_options
@_subtract_diagonal_option
@_include_trigger_option
@_eval_output_options
@_data_dir_option
@_guarded
def eval_compare_cmd(user_id, trigger, epsilon, epsilon_prime, metric, kind, normalizer,
                     dense_sigmoid, subtract_diagonal, include_trigger, out, fmt, plot,
                     data_dir) -> None:
    """Report how the recall vector changes one trigger's selection."""
    config = _build_config(data_dir, metric, kind, normalizer, dense_sigmoid,
                           subtract_diagonal, include_trigger)
    if epsilon_prime is None:
        epsilon_prime = epsilon
    store = Store(config.data_dir)
    _require_user(store, user_id)
    trigger_vec = _resolve_trigger(store, trigger)
    history = store.load_history(user_id)
    state = store.load_matrix(user_id, config.kind)
    report = compare_trigger_vs_recall(
        trigger_vec, history, state,
        epsilon=epsilon, epsilon_prime=epsilon_prime,
        metric=config.metric, normalizer=config.normalizer,
        subtract_diagonal=config.subtract_diagonal, exclude_trigger=config.exclude_trigger,
    )
    if fmt == "table":
        _emit(_compare_table(report), out)
    else:
        _emit([_json_line(report.to_dict())], out)
    if plot is not None:
        from . import figures

        figures.save_compare_figure(report, plot)
        click.echo(f"figure written to {plot}", err=True)


def _sweep_table(rows) -> list[str]:
    lines = [f"{'delta':>10} {'jaccard':>9} {'n_trigger':>10} {'n_recall':>9} {'size_delta':>11}"]
    for d, report in rows:
        lines.append(
            f"{d:>10g} {report.jaccard:>9.4f} {len(report.set_trigger):>10d} "
            f"{len(report.set_recall):>9d} {report.size_delta:>+11d}"
        )
    return lines


@eval_group.command("sweep")
@click.option("--user", "user_id", required=True, metavar="ID")
@click.option("--trigger", required=True, metavar="DOC-ID|@FILE")
@click.option("--deltas", default="0,0.1,0.25,0.5,0.75,1.0", callback=_parse_deltas_cb,
              metavar="D0,D1,...", show_default=True,
              help="Ascending asymptotic-kernel deltas, one comparison per value.")
@click.option("--epsilon", type=float, required=True, callback=_epsilon_cb, metavar="R")
@click.option("--epsilon-prime", type=float, default=None, callback=_epsilon_cb, metavar="R",
              help="Default: epsilon.")
@_metric_option
@_normalizer_options
@_subtract_diagonal_option
@_include_trigger_option
@_eval_output_options
@_data_dir_option
@_guarded
def eval_sweep_cmd(user_id, trigger, deltas, epsilon, epsilon_prime, metric, normalizer,
                   dense_sigmoid, subtract_diagonal, include_trigger, out, fmt, plot,
                   data_dir) -> None:
    """Run the comparison across a grid of asymptotic deltas (matrix rebuilt per row)."""
    config = _build_config(data_dir, metric, CooccurrenceKind.parse("binary"), normalizer,
                           dense_sigmoid, subtract_diagonal, include_trigger)
    if epsilon_prime is None:
        epsilon_prime = epsilon
    if deltas and deltas[-1] > 1.0:
        click.echo("warning: sweep includes deltas > 1; the off-diagonal weight is meant to be small",
                   err=True)
    store = Store(config.data_dir)
    _require_user(store, user_id)
    trigger_vec = _resolve_trigger(store, trigger)
    history = store.load_history(user_id)
    rows = delta_sweep(
        trigger_vec, history, deltas,
        epsilon=epsilon, epsilon_prime=epsilon_prime,
        metric=config.metric, normalizer=config.normalizer,
        subtract_diagonal=config.subtract_diagonal, exclude_trigger=config.exclude_trigger,
        n_features=store.n_features(),
    )
    if fmt == "table":
        _emit(_sweep_table(rows), out)
    else:
        _emit([_json_line({"delta": d, **report.to_dict()}) for d, report in rows], out)
    if plot is not None:
        from . import figures

        figures.save_sweep_figure(rows, plot, epsilon=epsilon, epsilon_prime=epsilon_prime)
        click.echo(f"figure written to {plot}", err=True)


@cli.command("rebuild")
@click.option("--user", "user_id", required=True, metavar="ID")
@_cooccurrence_option
@_data_dir_option
@_guarded
def rebuild_cmd(user_id: str, kind: CooccurrenceKind, data_dir: Path) -> None:
    """Batch-rebuild a matrix from the log and verify it against the snapshot.

    Read-only: prints the largest entrywise deviation and fails (exit 3) if
    the snapshot disagrees with the log beyond 1e-12.
    """
    store = Store(data_dir)
    _require_user(store, user_id)
    snapshot = store.load_user_snapshot(user_id, kind)
    rebuilt = store.rebuild_matrix(user_id, kind)
    deviation = rebuilt.max_abs_weight_difference(snapshot)
    counts_match = (
        dict(rebuilt.counts) == dict(snapshot.counts)
        and rebuilt.items_absorbed == snapshot.items_absorbed
    )
    ok = counts_match and deviation <= REBUILD_TOLERANCE
    click.echo(_json_line({
        "user": user_id,
        "kind": kind.token(),
        "events": rebuilt.items_absorbed,
        "snapshot_items": snapshot.items_absorbed,
        "counts_match": counts_match,
        "max_abs_deviation": deviation,
        "ok": ok,
    }))
    if not ok:
        raise _CommandError(
            f"{click.get_current_context().command_path}: snapshot for kind "
            f"{kind.token()} deviates from the log (max abs deviation {deviation:g})",
            EXIT_DATA,
        )


def run(argv: list[str] | None = None) -> int:
    """Execute the command line and return the process exit code."""
    try:
        cli.main(args=argv, prog_name="recallkit", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    return EXIT_OK


def main() -> None:
    raise SystemExit(run())
