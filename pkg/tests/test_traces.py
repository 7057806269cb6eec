"""Trace ingestion, validation, and bundle assembly."""
import json

import pytest

from iohunter.errors import FormatError, InputError
from iohunter.traces import (
    DatasetBundle,
    TraceRecord,
    build_bundle,
    canonicalize_url,
    load_bundle,
    normalize_hashtag,
    parse_traces,
    read_labels,
    write_labels_csv,
    write_traces_jsonl,
)


def write_jsonl(path, objs):
    path.write_text("\n".join(json.dumps(o) for o in objs) + "\n", encoding="utf-8")


BASE = {"post_id": "p1", "user_id": "u1", "timestamp": 100, "text": "hi", "urls": [], "hashtags": []}


class TestUrlCanonicalization:
    def test_query_stripped(self):
        assert canonicalize_url("https://ex.com/a/b?utm=1&x=2") == "https://ex.com/a/b"

    def test_trailing_slash_and_host_case(self):
        assert canonicalize_url("HTTPS://Example.COM/Path/") == "https://example.com/Path"

    def test_non_url_passthrough(self):
        assert canonicalize_url("  not a url/ ") == "not a url"


class TestParseTraces:
    def test_hashtag_lowercased(self, tmp_path):
        p = tmp_path / "t.jsonl"
        write_jsonl(p, [dict(BASE, hashtags=["X"])])
        result = parse_traces(p)
        assert len(result.records) == 1
        assert result.records[0].hashtags == ("x",)

    def test_empty_file_warns(self, tmp_path):
        p = tmp_path / "t.jsonl"
        p.write_text("", encoding="utf-8")
        result = parse_traces(p)
        assert result.records == []
        assert any("no records" in w for w in result.warnings)

    def test_retweet_without_latency_is_malformed(self, tmp_path):
        p = tmp_path / "t.jsonl"
        good = [dict(BASE, post_id=f"p{i}") for i in range(20)]
        bad = dict(BASE, post_id="px", retweeted_post_id="p0", retweeted_user_id="u1")
        write_jsonl(p, good + [bad])
        result = parse_traces(p)
        assert result.malformed == 1
        assert result.malformed_lines == [21]
        assert len(result.records) == 20

    def test_latency_without_retweet_is_malformed(self, tmp_path):
        p = tmp_path / "t.jsonl"
        good = [dict(BASE, post_id=f"p{i}") for i in range(20)]
        write_jsonl(p, good + [dict(BASE, retweet_latency=5)])
        assert parse_traces(p).malformed == 1

    def test_too_many_malformed_is_fatal(self, tmp_path):
        p = tmp_path / "t.jsonl"
        write_jsonl(p, [BASE, {"user_id": "u2"}])  # 50% malformed
        with pytest.raises(FormatError, match="malformed"):
            parse_traces(p)

    def test_missing_file_fatal(self, tmp_path):
        with pytest.raises(InputError, match="cannot read"):
            parse_traces(tmp_path / "absent.jsonl")

    def test_nonpositive_timestamp_malformed(self, tmp_path):
        p = tmp_path / "t.jsonl"
        good = [dict(BASE, post_id=f"p{i}") for i in range(20)]
        write_jsonl(p, good + [dict(BASE, timestamp=0)])
        assert parse_traces(p).malformed == 1

    def test_csv_roundtrip_of_list_fields(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text(
            "post_id,user_id,timestamp,text,urls,hashtags,retweeted_post_id,retweeted_user_id,retweet_latency,popularity\n"
            "p1,u1,100,hello,https://a.com/x|https://b.com/y,Tag1|tag2,,,,3\n",
            encoding="utf-8",
        )
        result = parse_traces(p, fmt="csv")
        rec = result.records[0]
        assert rec.urls == ("https://a.com/x", "https://b.com/y")
        assert rec.hashtags == ("tag1", "tag2")
        assert rec.popularity == 3

    def test_popularity_fallback_to_retweet_count(self, tmp_path):
        p = tmp_path / "t.jsonl"
        write_jsonl(p, [dict(BASE, retweet_count=7)])
        assert parse_traces(p).records[0].popularity == 7


class TestBuildBundle:
    def test_users_sorted_with_indices(self):
        records = [
            TraceRecord("p1", "u2", 10),
            TraceRecord("p2", "u1", 11),
        ]
        bundle = build_bundle(records, {"u1": 1, "u2": 0}, "x")
        assert bundle.users == ["u1", "u2"]
        assert bundle.index == {"u1": 0, "u2": 1}

    def test_label_only_user_becomes_isolated_node(self):
        records = [TraceRecord("p1", "u1", 10)]
        bundle = build_bundle(records, {"u1": 1, "u3": 0}, "x")
        assert "u3" in bundle.users
        assert bundle.records_by_user()[bundle.index["u3"]] == []

    def test_conflicting_labels_fatal(self, tmp_path):
        p = tmp_path / "labels.csv"
        p.write_text("user_id,label\nu1,1\nu1,0\n", encoding="utf-8")
        with pytest.raises(InputError, match="conflicting"):
            read_labels(p)

    def test_unlabeled_user_fatal_by_default(self):
        records = [TraceRecord("p1", "u1", 10), TraceRecord("p2", "u2", 11)]
        with pytest.raises(InputError, match="without labels"):
            build_bundle(records, {"u1": 1}, "x")
        bundle = build_bundle(records, {"u1": 1}, "x", allow_unlabeled=True)
        assert bundle.label_array() == [1, -1]


class TestRoundTrip:
    def test_serialize_reparse_identical(self, tmp_path):
        records = [
            TraceRecord("p1", "u2", 10, "hello", ("https://a.com/x",), ("t",)),
            TraceRecord("p2", "u1", 12, "", (), (), "p1", "u2", 4, 0),
        ]
        bundle = build_bundle(records, {"u1": 0, "u2": 1}, "rt")
        tp, lp = tmp_path / "t.jsonl", tmp_path / "l.csv"
        write_traces_jsonl(bundle.records, tp)
        write_labels_csv(bundle.labels, lp)
        again = load_bundle(tp, lp, "rt")
        assert again.users == bundle.users
        assert again.labels == bundle.labels
        assert again.records == bundle.records

    def test_parse_is_deterministic(self, tmp_path):
        p = tmp_path / "t.jsonl"
        write_jsonl(p, [dict(BASE, post_id=f"p{i}") for i in range(5)])
        assert parse_traces(p).records == parse_traces(p).records
