"""Minimal reader for the trace JSONL schema consumed by the detector."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class Post:
    post_id: str
    user_id: str
    text: str
    popularity: int


def read_posts(path: str | Path) -> list[Post]:
    """Parse the fields the exporter needs; malformed lines are fatal here.

    Unlike the detector's tolerant ingester, an exporter fed garbage
    should stop rather than silently embed a partial corpus.
    """
    posts: list[Post] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                posts.append(
                    Post(
                        post_id=str(obj["post_id"]),
                        user_id=str(obj["user_id"]),
                        text=str(obj.get("text") or ""),
                        popularity=int(obj.get("popularity") or 0),
                    )
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise TraceError(f"{path}:{lineno}: {exc}") from exc
    return posts
