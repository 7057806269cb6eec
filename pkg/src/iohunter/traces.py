"""Ingestion of behavioral trace logs and ground-truth labels.

Trace files are JSONL (one object per line) or CSV with the same headers;
list-valued CSV fields are '|'-separated. Labels files are CSV with header
``user_id,label``.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence
from urllib.parse import urlsplit

from .errors import FormatError, InputError

logger = logging.getLogger(__name__)

TRACE_CSV_HEADERS = [
    "post_id",
    "user_id",
    "timestamp",
    "text",
    "urls",
    "hashtags",
    "retweeted_post_id",
    "retweeted_user_id",
    "retweet_latency",
    "popularity",
]

# Above this fraction of malformed lines the whole file is rejected.
MALFORMED_FATAL_FRACTION = 0.10


def canonicalize_url(raw: str) -> str:
    """Normalize a URL to scheme://host/path with query and trailing slash stripped.

    The host is lowercased so co-URL matching does not fragment on
    tracking parameters or host capitalization. Strings that do not parse
    as absolute URLs are returned stripped of surrounding whitespace.
    """
    raw = raw.strip()
    parts = urlsplit(raw)
    if not parts.scheme or not parts.netloc:
        return raw.rstrip("/")
    path = parts.path.rstrip("/")
    return f"{parts.scheme.lower()}://{parts.netloc.lower()}{path}"


def normalize_hashtag(raw: str) -> str:
    """Lowercase and strip the leading '#'."""
    return raw.strip().lstrip("#").lower()


@dataclass(frozen=True)
class TraceRecord:
    """One post or retweet event."""

    post_id: str
    user_id: str
    timestamp: int
    text: str = ""
    urls: tuple[str, ...] = ()
    hashtags: tuple[str, ...] = ()
    retweeted_post_id: Optional[str] = None
    retweeted_user_id: Optional[str] = None
    retweet_latency: Optional[int] = None
    popularity: int = 0

    @property
    def is_retweet(self) -> bool:
        return self.retweeted_post_id is not None


@dataclass
class ParseResult:
    """Records plus the malformed-line report for one trace file."""

    records: list[TraceRecord]
    malformed_lines: list[int] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def malformed(self) -> int:
        return len(self.malformed_lines)


def _coerce_record(obj: dict) -> TraceRecord:
    """Validate one raw mapping and build a TraceRecord.

    Raises ValueError on any invariant violation so the caller can count
    the line as malformed.
    """
    post_id = obj.get("post_id")
    user_id = obj.get("user_id")
    if not post_id or not user_id:
        raise ValueError("post_id and user_id are required")
    timestamp = int(obj["timestamp"])
    if timestamp <= 0:
        raise ValueError(f"timestamp must be > 0, got {timestamp}")

    rt_post = obj.get("retweeted_post_id") or None
    rt_user = obj.get("retweeted_user_id") or None
    latency_raw = obj.get("retweet_latency")
    latency = None if latency_raw in (None, "") else int(latency_raw)
    # Latency is defined exactly when the record is a retweet.
    if (latency is None) != (rt_post is None):
        raise ValueError("retweet_latency present iff retweeted_post_id present")
    if latency is not None and latency < 0:
        raise ValueError(f"retweet_latency must be >= 0, got {latency}")

    if "popularity" in obj and obj["popularity"] not in (None, ""):
        popularity = int(obj["popularity"])
    elif obj.get("retweet_count") not in (None, ""):
        popularity = int(obj["retweet_count"])
    elif obj.get("like_count") not in (None, ""):
        popularity = int(obj["like_count"])
    else:
        popularity = 0
    if popularity < 0:
        raise ValueError(f"popularity must be >= 0, got {popularity}")

    urls = obj.get("urls") or []
    hashtags = obj.get("hashtags") or []
    if isinstance(urls, str) or isinstance(hashtags, str):
        raise ValueError("urls and hashtags must be lists")

    return TraceRecord(
        post_id=str(post_id),
        user_id=str(user_id),
        timestamp=timestamp,
        text=str(obj.get("text") or ""),
        urls=tuple(canonicalize_url(u) for u in urls if str(u).strip()),
        hashtags=tuple(normalize_hashtag(h) for h in hashtags if normalize_hashtag(h)),
        retweeted_post_id=rt_post,
        retweeted_user_id=rt_user,
        retweet_latency=latency,
        popularity=popularity,
    )


def _split_list_field(value: str) -> list[str]:
    return [part for part in value.split("|") if part] if value else []


def parse_traces(path: str | Path, fmt: str = "jsonl") -> ParseResult:
    """Parse a trace file into records, counting malformed lines.

    Records are returned in file order. Malformed lines are dropped but
    counted; more than 10% malformed is fatal, as is an unreadable file.
    """
    path = Path(path)
    if fmt not in ("jsonl", "csv"):
        raise InputError(f"unknown trace format {fmt!r}, expected jsonl or csv")
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read trace file {path}: {exc}") from exc

    result = ParseResult(records=[])
    total = 0
    if fmt == "jsonl":
        for lineno, line in enumerate(raw.splitlines(), start=1):
            if not line.strip():
                continue
            total += 1
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("line is not a JSON object")
                result.records.append(_coerce_record(obj))
            except (ValueError, TypeError, KeyError) as exc:
                result.malformed_lines.append(lineno)
                result.warnings.append(f"line {lineno}: {exc}")
    else:
        reader = csv.DictReader(raw.splitlines())
        for lineno, row in enumerate(reader, start=2):
            total += 1
            try:
                obj = dict(row)
                obj["urls"] = _split_list_field(row.get("urls", ""))
                obj["hashtags"] = _split_list_field(row.get("hashtags", ""))
                result.records.append(_coerce_record(obj))
            except (ValueError, TypeError, KeyError) as exc:
                result.malformed_lines.append(lineno)
                result.warnings.append(f"line {lineno}: {exc}")

    if total == 0:
        result.warnings.append(f"{path}: no records")
        logger.warning("%s contains no records", path)
    elif result.malformed > MALFORMED_FATAL_FRACTION * total:
        raise FormatError(
            f"{path}: {result.malformed}/{total} malformed lines "
            f"(lines {result.malformed_lines})"
        )
    if result.malformed:
        logger.warning("%s: %d malformed lines dropped", path, result.malformed)
    return result


def read_labels(path: str | Path) -> dict[str, int]:
    """Read a ``user_id,label`` CSV; conflicting duplicates are fatal."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read labels file {path}: {exc}") from exc
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or "user_id" not in reader.fieldnames or "label" not in reader.fieldnames:
        raise FormatError(f"{path}: expected header user_id,label")
    labels: dict[str, int] = {}
    for row in reader:
        user = row["user_id"]
        try:
            label = int(row["label"])
        except (TypeError, ValueError) as exc:
            raise FormatError(f"{path}: bad label for user {user!r}: {row['label']!r}") from exc
        if label not in (0, 1):
            raise FormatError(f"{path}: label for {user!r} must be 0 or 1, got {label}")
        if user in labels and labels[user] != label:
            raise InputError(f"{path}: conflicting labels for user {user!r}")
        labels[user] = label
    return labels


@dataclass
class DatasetBundle:
    """All records, users, and labels of one campaign dataset.

    Node indices are assigned by lexicographic user-id order and are the
    single source of truth for every downstream matrix and network.
    Immutable after construction; safe to share read-only.
    """

    records: list[TraceRecord]
    users: list[str]
    labels: dict[str, int]
    name: str

    def __post_init__(self) -> None:
        self.index: dict[str, int] = {u: i for i, u in enumerate(self.users)}

    @property
    def n(self) -> int:
        return len(self.users)

    def label_array(self) -> list[int]:
        """Labels in node-index order; -1 marks an unlabeled user."""
        return [self.labels.get(u, -1) for u in self.users]

    def records_by_user(self) -> list[list[TraceRecord]]:
        """Per-node lists of records, preserving file order within a user."""
        grouped: list[list[TraceRecord]] = [[] for _ in self.users]
        for rec in self.records:
            grouped[self.index[rec.user_id]].append(rec)
        return grouped


def build_bundle(
    records: Sequence[TraceRecord],
    labels: dict[str, int] | str | Path,
    name: str,
    allow_unlabeled: bool = False,
) -> DatasetBundle:
    """Assemble a DatasetBundle from records and labels.

    Users are the sorted union of record authors and labeled ids. Users
    appearing only in the labels file become isolated nodes with empty
    content. Unlabeled users are fatal unless allow_unlabeled is set.
    """
    if not isinstance(labels, dict):
        labels = read_labels(labels)
    record_users = {rec.user_id for rec in records}
    users = sorted(record_users | set(labels))
    unlabeled = sorted(record_users - set(labels))
    if unlabeled and not allow_unlabeled:
        preview = ", ".join(unlabeled[:5])
        raise InputError(
            f"{len(unlabeled)} users without labels (e.g. {preview}); "
            "pass allow_unlabeled to keep them"
        )
    return DatasetBundle(records=list(records), users=users, labels=dict(labels), name=name)


def write_traces_jsonl(records: Iterable[TraceRecord], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            obj = {
                "post_id": rec.post_id,
                "user_id": rec.user_id,
                "timestamp": rec.timestamp,
                "text": rec.text,
                "urls": list(rec.urls),
                "hashtags": list(rec.hashtags),
                "popularity": rec.popularity,
            }
            if rec.retweeted_post_id is not None:
                obj["retweeted_post_id"] = rec.retweeted_post_id
                obj["retweeted_user_id"] = rec.retweeted_user_id
                obj["retweet_latency"] = rec.retweet_latency
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def write_labels_csv(labels: dict[str, int], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "label"])
        for user in sorted(labels):
            writer.writerow([user, labels[user]])


def load_bundle(
    traces_path: str | Path,
    labels_path: str | Path,
    name: str,
    fmt: str = "jsonl",
    allow_unlabeled: bool = False,
) -> DatasetBundle:
    """Parse traces and labels from disk into a bundle in one step."""
    parsed = parse_traces(traces_path, fmt)
    return build_bundle(parsed.records, labels_path, name, allow_unlabeled=allow_unlabeled)
