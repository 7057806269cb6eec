"""Deterministic synthetic campaign generator.

IO users share entities drawn from small pools and fast-retweet a few
push posts, so TF-IDF projection recovers a dense coordinated cluster.
Organic users draw from large Zipf-distributed pools through per-user
interest windows: without the windows, everyone samples the same global
head entities and the similarity layers degenerate into near-complete
graphs. Camouflage fractions plant IO users whose text or sharing
behavior looks organic, which keeps single-modality classifiers from
saturating. Everything is a pure function of the config, so a config
plus seed reproduces the bundle byte for byte.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import InputError
from .traces import DatasetBundle, TraceRecord, build_bundle


@dataclass(frozen=True)
class SynthConfig:
    name: str
    n_organic: int
    n_io: int
    io_url_pool: int = 25
    io_hashtag_pool: int = 15
    io_template_pool: int = 8
    organic_url_pool: int = 1200
    organic_hashtag_pool: int = 700
    organic_template_pool: int = 300
    zipf_exponent: float = 1.1
    interest_window: float = 0.12  # fraction of a pool one organic user samples
    p_fast: float = 0.7
    posts_min: int = 6
    posts_max: int = 14
    retweet_share: float = 0.4
    io_push_targets: int = 20  # retweetable IO posts concentrating fast retweets
    noise: float = 0.2
    text_camouflage: float = 0.12
    graph_camouflage: float = 0.12
    organic_engagement: float = 0.05  # organic actions amplifying IO content
    # Fraction of IO template tokens drawn from a vocabulary shared by all
    # campaigns. Campaigns re-use propaganda content, and a frozen
    # multilingual encoder maps it to one region of the embedding space;
    # without this shared geometry nothing can transfer across campaigns.
    io_shared_token_frac: float = 0.5
    vocab_tag: str = ""
    seed: int = 0

    @property
    def n(self) -> int:
        return self.n_organic + self.n_io


# Scaled-down analogues of real campaign datasets: (nodes, IO proportion,
# organic engagement). Engagement is tuned per preset because the real
# campaigns differ widely in how much organic traffic touches IO content,
# visible as edge homophily between roughly 0.4 and 0.8.
PRESETS: dict[str, tuple[int, float, float]] = {
    "uae-like": (2000, 0.357, 0.15),
    "cuba-like": (2000, 0.023, 0.02),
    "russia-like": (666, 0.384, 0.15),
    "venezuela-like": (2000, 0.106, 0.02),
    "iran-like": (2000, 0.322, 0.02),
    "china-like": (2000, 0.033, 0.05),
    "benchmark": (2000, 0.10, 0.05),
    "tiny": (60, 8 / 60, 0.05),
}


def preset(name: str, seed: int = 0, n_nodes: Optional[int] = None) -> SynthConfig:
    """Named config preserving the preset's IO proportion at any scale."""
    if name not in PRESETS:
        raise InputError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    base_n, prop, engagement = PRESETS[name]
    n = n_nodes if n_nodes is not None else base_n
    n_io = max(1, round(prop * n))
    tag = name.split("-")[0]
    config = SynthConfig(
        name=name,
        n_organic=n - n_io,
        n_io=n_io,
        organic_url_pool=max(200, int(0.6 * n)),
        organic_hashtag_pool=max(120, int(0.35 * n)),
        organic_template_pool=max(80, int(0.15 * n)),
        organic_engagement=engagement,
        vocab_tag=tag,
        seed=seed,
    )
    if name == "tiny":
        config = replace(config, posts_min=4, posts_max=8)
    return config


def _word(*key: object) -> str:
    """Deterministic pseudo-word; keys sharing no parts share no 3-grams."""
    digest = hashlib.blake2b("/".join(map(str, key)).encode("utf-8"), digest_size=8).digest()
    letters = "abcdefghijklmnopqrstuvwxyz"
    return "".join(letters[b % 26] for b in digest[:6])


TEMPLATE_TOKENS = 8
SHARED_AGENDA_VOCAB = 40


def _template(tag: str, kind: str, rank: int, shared_frac: float = 0.0) -> str:
    words = []
    n_shared = round(TEMPLATE_TOKENS * shared_frac)
    for i in range(TEMPLATE_TOKENS):
        if i < n_shared:
            words.append(_word("agenda-common", (rank * 3 + i) % SHARED_AGENDA_VOCAB))
        else:
            words.append(_word(tag, kind, rank, i))
    return " ".join(words)


class _ZipfWindow:
    """Zipf draws over a per-user window into a ranked pool.

    The window models interest locality: rank probabilities fall off
    within the window, and the window start varies per user, so no
    global head entity emerges across the whole population.
    """

    def __init__(self, pool_size: int, window_fraction: float, exponent: float):
        self.pool = pool_size
        self.window = max(1, min(pool_size, max(10, int(window_fraction * pool_size))))
        ranks = np.arange(1, self.window + 1, dtype=np.float64)
        probs = ranks**-exponent
        self.probs = probs / probs.sum()

    def draw(self, rng: np.random.Generator, start: int) -> int:
        offset = int(rng.choice(self.window, p=self.probs))
        return (start + offset) % self.pool


class _ZipfPool:
    """Plain global Zipf pool (used for IO push-target concentration)."""

    def __init__(self, size: int, exponent: float):
        ranks = np.arange(1, size + 1, dtype=np.float64)
        probs = ranks**-exponent
        self.probs = probs / probs.sum()
        self.size = size

    def draw(self, rng: np.random.Generator) -> int:
        return int(rng.choice(self.size, p=self.probs))


def _validate(config: SynthConfig) -> None:
    if config.n_organic < 1 or config.n_io < 1:
        raise InputError("need at least one organic and one IO user")
    for field_name in (
        "io_url_pool",
        "io_hashtag_pool",
        "io_template_pool",
        "organic_url_pool",
        "organic_hashtag_pool",
        "organic_template_pool",
        "io_push_targets",
    ):
        if getattr(config, field_name) < 1:
            raise InputError(f"pool {field_name} too small to cover posts per user")
    for p_name in ("p_fast", "noise", "text_camouflage", "graph_camouflage", "retweet_share"):
        value = getattr(config, p_name)
        if not 0.0 <= value <= 1.0:
            raise InputError(f"{p_name} must be in [0,1], got {value}")
    if config.posts_min < 1 or config.posts_max < config.posts_min:
        raise InputError("posts-per-user range is empty")


@dataclass
class _Draft:
    """Mutable record stub; popularity is filled in after retweet counting."""

    post_id: str
    user_id: str
    timestamp: int
    text: str = ""
    urls: tuple[str, ...] = ()
    hashtags: tuple[str, ...] = ()
    retweeted_post_id: Optional[str] = None
    retweeted_user_id: Optional[str] = None
    retweet_latency: Optional[int] = None


def generate(config: SynthConfig) -> DatasetBundle:
    """Generate a labeled campaign bundle; deterministic given the seed."""
    _validate(config)
    rng = np.random.default_rng(config.seed)
    tag = config.vocab_tag or config.name.replace("-", "")

    io_users = [f"{tag}io{i:05d}" for i in range(config.n_io)]
    organic_users = [f"{tag}org{i:05d}" for i in range(config.n_organic)]
    all_users = io_users + organic_users
    labels = {u: 1 for u in io_users}
    labels.update({u: 0 for u in organic_users})

    url_window = _ZipfWindow(config.organic_url_pool, config.interest_window, config.zipf_exponent)
    tag_window = _ZipfWindow(config.organic_hashtag_pool, config.interest_window, config.zipf_exponent)
    tpl_window = _ZipfWindow(config.organic_template_pool, config.interest_window, config.zipf_exponent)

    # Personas and interest-window starts, one pass over users so the
    # random stream stays independent of later branching.
    persona: dict[str, str] = {}
    interests: dict[str, tuple[int, int, int, float]] = {}
    for user in all_users:
        if labels[user] == 1:
            u = rng.random()
            if u < config.text_camouflage:
                persona[user] = "text_camo"
            elif u < config.text_camouflage + config.graph_camouflage:
                persona[user] = "graph_camo"
            else:
                persona[user] = "plain"
        else:
            persona[user] = "organic"
        interests[user] = (
            int(rng.integers(config.organic_url_pool)),
            int(rng.integers(config.organic_hashtag_pool)),
            int(rng.integers(config.organic_template_pool)),
            float(rng.random()),  # relative position of the retweet-interest window
        )

    def organic_text(user: str) -> str:
        rank = tpl_window.draw(rng, interests[user][2])
        return f"{_template(tag, 'story', rank)} {_word(tag, 'nz', int(rng.integers(100000)))}"

    def io_text() -> str:
        rank = int(rng.integers(config.io_template_pool))
        body = _template(tag, "agenda", rank, shared_frac=config.io_shared_token_frac)
        return f"{body} {_word(tag, 'nz', int(rng.integers(100000)))}"

    def organic_entities(user: str) -> tuple[tuple[str, ...], tuple[str, ...]]:
        urls = ()
        if rng.random() < 0.6:
            urls = (f"https://{tag}-news.example.org/{url_window.draw(rng, interests[user][0])}",)
        tags = tuple(
            f"{tag}topic{tag_window.draw(rng, interests[user][1])}"
            for _ in range(int(rng.integers(0, 3)))
        )
        return urls, tags

    def io_entities() -> tuple[tuple[str, ...], tuple[str, ...]]:
        urls = (f"https://{tag}-push.example.net/{int(rng.integers(config.io_url_pool))}",)
        tags = (f"{tag}agenda{int(rng.integers(config.io_hashtag_pool))}",)
        return urls, tags

    # Plan post counts and action types; the first post is always an
    # original so every user has some text.
    plans: dict[str, list[str]] = {}
    for user in all_users:
        n_posts = int(rng.integers(config.posts_min, config.posts_max + 1))
        actions = ["orig"]
        for _ in range(n_posts - 1):
            actions.append("rt" if rng.random() < config.retweet_share else "orig")
        plans[user] = actions

    drafts: list[_Draft] = []
    io_originals: list[_Draft] = []
    organic_originals: list[_Draft] = []
    clock = 1_600_000_000
    post_seq = 0

    def next_post_id() -> str:
        nonlocal post_seq
        post_seq += 1
        return f"p{post_seq:07d}"

    # Pass A: originals.
    for user in all_users:
        style = persona[user]
        for action in plans[user]:
            if action != "orig":
                continue
            clock += int(rng.integers(1, 30))
            draft = _Draft(post_id=next_post_id(), user_id=user, timestamp=clock)
            if style == "organic":
                draft.text = organic_text(user)
                if rng.random() < config.organic_engagement:
                    # Organic amplification: shares IO links but keeps
                    # organic wording.
                    draft.urls, draft.hashtags = io_entities()
                else:
                    draft.urls, draft.hashtags = organic_entities(user)
                organic_originals.append(draft)
            elif style == "graph_camo":
                draft.text = io_text()
                draft.urls, draft.hashtags = organic_entities(user)
                organic_originals.append(draft)
            elif style == "text_camo":
                draft.text = organic_text(user)
                draft.urls, draft.hashtags = io_entities()
                io_originals.append(draft)
            elif rng.random() < config.noise:
                draft.text = organic_text(user)
                draft.urls, draft.hashtags = organic_entities(user)
                organic_originals.append(draft)
            else:
                draft.text = io_text()
                draft.urls, draft.hashtags = io_entities()
                io_originals.append(draft)
            drafts.append(draft)

    # Pass B: retweets of pass-A originals. IO fast retweets concentrate
    # on a few push posts; organic retweets spread over interest windows.
    push_posts = io_originals[: config.io_push_targets] if io_originals else []
    push_zipf = _ZipfPool(max(1, len(push_posts)), 1.3)
    org_rt_window = _ZipfWindow(max(1, len(organic_originals)), config.interest_window, config.zipf_exponent)
    for user in all_users:
        style = persona[user]
        for action in plans[user]:
            if action != "rt":
                continue
            io_style_rt = (
                labels[user] == 1
                and style != "graph_camo"
                and not (style == "plain" and rng.random() < config.noise)
            )
            if io_style_rt and push_posts:
                target = push_posts[push_zipf.draw(rng)]
                if rng.random() < config.p_fast:
                    latency = int(rng.integers(0, 11))
                else:
                    latency = int(rng.integers(11, 3601))
            elif style == "organic" and push_posts and rng.random() < config.organic_engagement:
                # Organic amplification at human speed, never automation-fast.
                target = push_posts[push_zipf.draw(rng)]
                latency = int(rng.integers(30, 86401))
            else:
                if not organic_originals:
                    continue
                start = int(interests[user][3] * len(organic_originals))
                target = organic_originals[org_rt_window.draw(rng, start)]
                latency = int(rng.integers(30, 86401))
            drafts.append(
                _Draft(
                    post_id=next_post_id(),
                    user_id=user,
                    timestamp=target.timestamp + latency,
                    retweeted_post_id=target.post_id,
                    retweeted_user_id=target.user_id,
                    retweet_latency=latency,
                )
            )

    retweet_counts: dict[str, int] = {}
    for draft in drafts:
        if draft.retweeted_post_id is not None:
            retweet_counts[draft.retweeted_post_id] = retweet_counts.get(draft.retweeted_post_id, 0) + 1

    records = [
        TraceRecord(
            post_id=d.post_id,
            user_id=d.user_id,
            timestamp=d.timestamp,
            text=d.text,
            urls=d.urls,
            hashtags=d.hashtags,
            retweeted_post_id=d.retweeted_post_id,
            retweeted_user_id=d.retweeted_user_id,
            retweet_latency=d.retweet_latency,
            popularity=retweet_counts.get(d.post_id, 0),
        )
        for d in drafts
    ]
    return build_bundle(records, labels, name=config.name)
