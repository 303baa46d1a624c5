"""Durable per-user recommendation logs and relation-matrix snapshots.

Layout under one data directory:

    dictionary.json                      feature dictionary (+ tf-idf stats for text corpora)
    items.jsonl                          vectorized corpus, one item per line
    users/<user_id>/history.jsonl        append-only recommendation log
    users/<user_id>/matrix-<kind>.snap   relation matrix snapshot, one file per kind

The history log is the source of truth. Each line is one event,
{"item_id", "features", "ts"}, with integer feature ids as keys and
non-decreasing timestamps; events are never rewritten. Every line is written
together with its newline in a single write followed by fsync, so a trailing
chunk without a newline can only be an interrupted append and is ignored on
load. Any *complete* line that fails to parse is corruption and is reported
with its line number.

Snapshots are caches of the fold over the log, updated in the same logical
step as each append and rebuilt (or caught up) from the log whenever they are
missing or behind. The format is line oriented so partial writes are
detectable: a JSON header, one line per occurrence count, one line per
co-occurrence sum (reals carry 17 significant digits and reparse exactly),
then a CRC32 line over all preceding bytes. Snapshot loss is never data loss.
"""

from __future__ import annotations

import fcntl
import json
import logging
import math
import os
import re
import tempfile
import zlib
from collections.abc import Iterable, Sequence
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

from .cooccurrence import CooccurrenceKind
from .errors import IntegrityError, NotFoundError, ValidationError
from .ingestion import TfIdfModel
from .relation import RelationMatrix
from .vectors import FeatureDictionary, ItemVector

logger = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1
DICTIONARY_VERSION = 1
_USER_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._@-]*$")
_CRC_RE = re.compile(r"^[0-9a-f]{8}$")


@dataclass(frozen=True)
class HistoryEvent:
    """One recommendation shown to a user; ``taken`` records acceptance if known."""

    item: ItemVector
    ts: int
    taken: bool | None = None


@dataclass
class UserHistory:
    """Ordered, append-only log of everything recommended to one user."""

    user_id: str
    events: list[HistoryEvent] = field(default_factory=list)

    def items(self) -> list[ItemVector]:
        return [e.item for e in self.events]

    def latest_by_item(self) -> list[HistoryEvent]:
        """One event per item id, the most recent, in first-seen order."""
        latest: dict[str, HistoryEvent] = {}
        for event in self.events:
            latest[event.item.item_id] = event
        return list(latest.values())

    def __len__(self) -> int:
        return len(self.events)


# ---------------------------------------------------------------------------
# snapshot serialization


def _format_real(x: float) -> str:
    return format(x, ".17g")


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def save_snapshot(state: RelationMatrix, path: str | Path) -> None:
    """Write a relation matrix snapshot atomically (temp file + rename)."""
    path = Path(path)
    header = {
        "version": SNAPSHOT_VERSION,
        "kind": state.kind.name,
        "delta": state.kind.delta,
        "n_features": state.n_features,
        "items_absorbed": state.items_absorbed,
    }
    lines = [json.dumps(header, separators=(",", ":"))]
    for i in sorted(state.counts):
        lines.append(f'{{"i":{i},"c":{state.counts[i]}}}')
    for i, j, s in sorted(state.iter_sums()):
        lines.append(f'{{"i":{i},"j":{j},"s":{_format_real(s)}}}')
    payload = ("\n".join(lines) + "\n").encode("utf-8")
    crc = f"{zlib.crc32(payload):08x}\n".encode("ascii")
    _atomic_write(path, payload + crc)


def _snapshot_line(path: Path, line_no: int, line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"invalid JSON ({exc.msg})", path=str(path), line=line_no) from None
    if not isinstance(obj, dict):
        raise IntegrityError("expected a JSON object", path=str(path), line=line_no)
    return obj


def load_snapshot(path: str | Path) -> RelationMatrix:
    """Load and verify a snapshot; any damage raises IntegrityError.

    A truncated file never yields a silently partial state: the trailing
    checksum line must be present and match.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise NotFoundError(f"no snapshot at {path}") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise IntegrityError("snapshot is not valid UTF-8", path=str(path)) from None
    if not text.endswith("\n"):
        raise IntegrityError("snapshot is truncated (no trailing newline)", path=str(path))
    lines = text.split("\n")
    lines.pop()  # the empty tail after the final newline
    if len(lines) < 2:
        raise IntegrityError("snapshot is truncated (missing checksum line)", path=str(path))
    crc_line = lines[-1]
    if not _CRC_RE.match(crc_line):
        raise IntegrityError(
            "snapshot is truncated (last line is not a checksum)", path=str(path), line=len(lines)
        )
    payload = ("\n".join(lines[:-1]) + "\n").encode("utf-8")
    if zlib.crc32(payload) != int(crc_line, 16):
        raise IntegrityError("snapshot checksum mismatch", path=str(path))

    header = _snapshot_line(path, 1, lines[0])
    if header.get("version") != SNAPSHOT_VERSION:
        raise IntegrityError(f"unsupported snapshot version {header.get('version')!r}", path=str(path), line=1)
    try:
        kind = CooccurrenceKind(header["kind"], header.get("delta"))
    except (KeyError, ValueError, TypeError) as exc:
        raise IntegrityError(f"bad snapshot kind: {exc}", path=str(path), line=1) from None
    n_features = header.get("n_features")
    items_absorbed = header.get("items_absorbed")
    if n_features is not None and (isinstance(n_features, bool) or not isinstance(n_features, int)):
        raise IntegrityError("n_features must be an integer or null", path=str(path), line=1)
    if isinstance(items_absorbed, bool) or not isinstance(items_absorbed, int):
        raise IntegrityError("items_absorbed must be an integer", path=str(path), line=1)

    counts: dict[int, int] = {}
    sums: list[tuple[int, int, float]] = []
    in_sums = False
    for line_no, line in enumerate(lines[1:-1], start=2):
        obj = _snapshot_line(path, line_no, line)
        keys = set(obj)
        if keys == {"i", "c"}:
            if in_sums:
                raise IntegrityError("count line after sum lines", path=str(path), line=line_no)
            i, c = obj["i"], obj["c"]
            if not isinstance(i, int) or not isinstance(c, int) or isinstance(i, bool) or isinstance(c, bool):
                raise IntegrityError("count line fields must be integers", path=str(path), line=line_no)
            if i in counts:
                raise IntegrityError(f"duplicate count for feature {i}", path=str(path), line=line_no)
            counts[i] = c
        elif keys == {"i", "j", "s"}:
            in_sums = True
            i, j, s = obj["i"], obj["j"], obj["s"]
            if not isinstance(i, int) or not isinstance(j, int) or isinstance(s, (bool, str)):
                raise IntegrityError("sum line fields have wrong types", path=str(path), line=line_no)
            if not math.isfinite(float(s)):
                raise IntegrityError("sum value is not finite", path=str(path), line=line_no)
            sums.append((i, j, float(s)))
        else:
            raise IntegrityError(f"unrecognized snapshot line with keys {sorted(keys)}", path=str(path), line=line_no)
    try:
        return RelationMatrix.restore(kind, n_features, items_absorbed, counts, sums)
    except ValueError as exc:
        raise IntegrityError(f"inconsistent snapshot state: {exc}", path=str(path)) from None


# ---------------------------------------------------------------------------
# the store


@dataclass(frozen=True)
class AppendResult:
    events: int
    updated_kinds: list[str]


class Store:
    """File-backed store for histories, matrices, the dictionary and the corpus.

    Creating a Store never touches the filesystem; only appends and the
    ingest-time save methods create files. One writer per user is enforced
    with an advisory lock, readers need no coordination.
    """

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self._dictionary_cache: tuple[FeatureDictionary, TfIdfModel | None] | None = None
        self._items_cache: dict[str, ItemVector] | None = None

    # -- paths

    @property
    def dictionary_path(self) -> Path:
        return self.data_dir / "dictionary.json"

    @property
    def items_path(self) -> Path:
        return self.data_dir / "items.jsonl"

    def user_dir(self, user_id: str) -> Path:
        if not _USER_ID_RE.match(user_id):
            raise ValidationError(
                f"invalid user id {user_id!r}: use letters, digits, '.', '_', '@' or '-'"
            )
        return self.data_dir / "users" / user_id

    def history_path(self, user_id: str) -> Path:
        return self.user_dir(user_id) / "history.jsonl"

    def snapshot_path(self, user_id: str, kind: CooccurrenceKind) -> Path:
        return self.user_dir(user_id) / f"matrix-{kind.token()}.snap"

    # -- dictionary and corpus items

    def save_dictionary(self, dictionary: FeatureDictionary, model: TfIdfModel | None = None) -> None:
        doc = {
            "version": DICTIONARY_VERSION,
            "features": dictionary.names,
            "tfidf": None,
        }
        if model is not None:
            doc["tfidf"] = {
                "doc_freq": [model.doc_freq[fid] for fid in range(len(dictionary))],
                "corpus_size": model.corpus_size,
            }
        _atomic_write(self.dictionary_path, (json.dumps(doc, ensure_ascii=False) + "\n").encode("utf-8"))
        self._dictionary_cache = None

    def load_dictionary(self) -> tuple[FeatureDictionary, TfIdfModel | None]:
        if self._dictionary_cache is not None:
            return self._dictionary_cache
        path = self.dictionary_path
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise NotFoundError(f"no dictionary at {path}; run ingest first") from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise IntegrityError(f"invalid JSON ({exc.msg})", path=str(path)) from None
        features = doc.get("features")
        if not isinstance(features, list) or not all(isinstance(n, str) for n in features):
            raise IntegrityError("'features' must be a list of strings", path=str(path))
        if len(set(features)) != len(features):
            raise IntegrityError("feature names are not unique", path=str(path))
        dictionary = FeatureDictionary(features)
        model = None
        stats = doc.get("tfidf")
        if stats is not None:
            doc_freq = stats.get("doc_freq")
            corpus_size = stats.get("corpus_size")
            if (
                not isinstance(doc_freq, list)
                or len(doc_freq) != len(features)
                or not isinstance(corpus_size, int)
                or corpus_size < 1
            ):
                raise IntegrityError("malformed tf-idf statistics", path=str(path))
            model = TfIdfModel(
                dictionary=dictionary,
                doc_freq={fid: df for fid, df in enumerate(doc_freq)},
                corpus_size=corpus_size,
            )
        self._dictionary_cache = (dictionary, model)
        return self._dictionary_cache

    def n_features(self) -> int | None:
        """Size of the persisted dictionary, or None when nothing was ingested."""
        try:
            dictionary, _ = self.load_dictionary()
        except NotFoundError:
            return None
        return len(dictionary)

    def save_items(self, items: Iterable[ItemVector]) -> None:
        lines = []
        for item in items:
            feats = {str(fid): item.weights[fid] for fid in sorted(item.weights)}
            lines.append(json.dumps({"id": item.item_id, "features": feats}, separators=(",", ":"), ensure_ascii=False))
        _atomic_write(self.items_path, ("\n".join(lines) + "\n").encode("utf-8") if lines else b"")
        self._items_cache = None

    def load_items(self) -> dict[str, ItemVector]:
        if self._items_cache is not None:
            return self._items_cache
        path = self.items_path
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise NotFoundError(f"no vectorized corpus at {path}; run ingest first") from None
        items: dict[str, ItemVector] = {}
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                item_id = obj["id"]
                weights = {int(k): float(v) for k, v in obj["features"].items()}
                vector = ItemVector(item_id, weights)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError, AttributeError):
                raise IntegrityError("malformed item record", path=str(path), line=line_no) from None
            if item_id in items:
                raise IntegrityError(f"duplicate item id {item_id!r}", path=str(path), line=line_no)
            items[item_id] = vector
        self._items_cache = items
        return items

    def get_item(self, item_id: str) -> ItemVector:
        items = self.load_items()
        try:
            return items[item_id]
        except KeyError:
            raise NotFoundError(f"unknown item {item_id!r} (not in the ingested corpus)") from None

    # -- history

    def user_exists(self, user_id: str) -> bool:
        return self.user_dir(user_id).is_dir()

    def load_history(self, user_id: str) -> UserHistory:
        """Full ordered history; an unknown user simply has an empty one."""
        path = self.history_path(user_id)
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            return UserHistory(user_id=user_id)
        if text and not text.endswith("\n"):
            # A line and its newline are written in one write; a missing
            # newline therefore marks an interrupted append, which the crash
            # contract resolves to the pre-append state.
            cut = text.rfind("\n") + 1
            logger.info("ignoring torn trailing record in %s", path)
            text = text[:cut]
        events: list[HistoryEvent] = []
        last_ts: int | None = None
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                raise IntegrityError("blank line in history log", path=str(path), line=line_no)
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IntegrityError(f"invalid JSON ({exc.msg})", path=str(path), line=line_no) from None
            if not isinstance(obj, dict):
                raise IntegrityError("event must be a JSON object", path=str(path), line=line_no)
            item_id = obj.get("item_id")
            ts = obj.get("ts")
            taken = obj.get("taken")
            if not isinstance(item_id, str) or not item_id:
                raise IntegrityError("event needs a non-empty 'item_id'", path=str(path), line=line_no)
            if isinstance(ts, bool) or not isinstance(ts, int):
                raise IntegrityError("event 'ts' must be an integer", path=str(path), line=line_no)
            if taken is not None and not isinstance(taken, bool):
                raise IntegrityError("event 'taken' must be a boolean", path=str(path), line=line_no)
            if last_ts is not None and ts < last_ts:
                raise IntegrityError(
                    f"timestamp {ts} goes backwards (previous was {last_ts})", path=str(path), line=line_no
                )
            features = obj.get("features")
            if not isinstance(features, dict):
                raise IntegrityError("event 'features' must be an object", path=str(path), line=line_no)
            try:
                vector = ItemVector(item_id, {int(k): float(v) for k, v in features.items()})
            except (TypeError, ValueError) as exc:
                raise IntegrityError(f"bad feature weights: {exc}", path=str(path), line=line_no) from None
            events.append(HistoryEvent(item=vector, ts=ts, taken=taken))
            last_ts = ts
        return UserHistory(user_id=user_id, events=events)

    @contextmanager
    def _user_lock(self, user_id: str):
        user_dir = self.user_dir(user_id)
        user_dir.mkdir(parents=True, exist_ok=True)
        fd = os.open(user_dir / ".lock", os.O_CREAT | os.O_RDWR, 0o644)
        try:
            fcntl.flock(fd, fcntl.LOCK_EX)
            yield
        finally:
            fcntl.flock(fd, fcntl.LOCK_UN)
            os.close(fd)

    def snapshot_kinds(self, user_id: str) -> list[CooccurrenceKind]:
        """Co-occurrence kinds that currently have a snapshot for this user."""
        user_dir = self.user_dir(user_id)
        kinds = []
        if not user_dir.is_dir():
            return kinds
        for path in sorted(user_dir.glob("matrix-*.snap")):
            token = path.name[len("matrix-") : -len(".snap")]
            try:
                kinds.append(CooccurrenceKind.parse(token))
            except ValueError:
                logger.warning("ignoring snapshot with unrecognized kind: %s", path)
        return kinds

    def _current_matrix(self, kind: CooccurrenceKind, history: UserHistory) -> RelationMatrix:
        """Snapshot if fresh, caught up from the log if behind, else rebuilt."""
        path = self.snapshot_path(history.user_id, kind)
        if not path.exists():
            return RelationMatrix.from_history(history.items(), kind, self.n_features())
        state = load_snapshot(path)
        if state.kind != kind:
            raise IntegrityError(
                f"snapshot header says kind {state.kind.token()} but the file name says {kind.token()}",
                path=str(path),
            )
        if state.items_absorbed > len(history.events):
            logger.warning("snapshot %s is ahead of the log; rebuilding from the log", path)
            return RelationMatrix.from_history(history.items(), kind, self.n_features())
        if state.items_absorbed < len(history.events):
            logger.info(
                "snapshot %s is %d events behind; catching up",
                path,
                len(history.events) - state.items_absorbed,
            )
            for event in history.events[state.items_absorbed :]:
                state.absorb(event.item)
        return state

    def load_matrix(self, user_id: str, kind: CooccurrenceKind) -> RelationMatrix:
        """Read-only access to the user's up-to-date matrix; never writes."""
        return self._current_matrix(kind, self.load_history(user_id))

    def rebuild_matrix(self, user_id: str, kind: CooccurrenceKind) -> RelationMatrix:
        """Batch rebuild straight from the log, ignoring any snapshot."""
        history = self.load_history(user_id)
        return RelationMatrix.from_history(history.items(), kind, self.n_features())

    def load_user_snapshot(self, user_id: str, kind: CooccurrenceKind) -> RelationMatrix:
        return load_snapshot(self.snapshot_path(user_id, kind))

    def append_recommendation(
        self,
        user_id: str,
        item: ItemVector,
        ts: int,
        *,
        kinds: Sequence[CooccurrenceKind] = (),
        taken: bool | None = None,
    ) -> AppendResult:
        """Durably append one event and update the matrix caches in step.

        Updates the snapshots for ``kinds`` plus every kind that already has
        one. The log line is fsynced before any snapshot is replaced, and
        snapshots are swapped atomically, so a crash leaves either the old or
        the new state visible, never a blend; a stale snapshot is caught up
        from the log on the next access.
        """
        if isinstance(ts, bool) or not isinstance(ts, int):
            raise ValidationError(f"timestamp must be an integer, got {ts!r}")
        with self._user_lock(user_id):
            history = self.load_history(user_id)
            if history.events and ts < history.events[-1].ts:
                raise ValidationError(
                    f"timestamp {ts} is before the user's last event at {history.events[-1].ts}"
                )
            update_kinds: dict[str, CooccurrenceKind] = {}
            for kind in list(kinds) + self.snapshot_kinds(user_id):
                update_kinds.setdefault(kind.token(), kind)
            matrices = {
                token: self._current_matrix(kind, history) for token, kind in update_kinds.items()
            }
            for state in matrices.values():
                state.absorb(item)

            feats = {str(fid): item.weights[fid] for fid in sorted(item.weights)}
            record: dict = {"item_id": item.item_id, "features": feats, "ts": ts}
            if taken is not None:
                record["taken"] = taken
            line = (json.dumps(record, separators=(",", ":"), ensure_ascii=False) + "\n").encode("utf-8")
            path = self.history_path(user_id)
            with open(path, "ab") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())

            for token, state in matrices.items():
                save_snapshot(state, self.snapshot_path(user_id, update_kinds[token]))
        return AppendResult(events=len(history.events) + 1, updated_kinds=sorted(update_kinds))
