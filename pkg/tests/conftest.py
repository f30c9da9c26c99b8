"""Shared fixtures: tiny deterministic synthetic datasets."""

import pytest

from pairrank.featurize import DataBundle
from pairrank.ingest import Comment, Submission
from pairrank.synth import MarketConfig, generate, write_market


def mk_sub(sid, t, score, community="c", author="u1", title="hello world",
           image=None, link_key=None):
    return Submission(id=sid, author=author, community=community,
                      created_utc=t, score=score, title=title,
                      image=image, link_key=link_key)


def mk_com(cid, author, link_id, parent_id, t, score=1, body="ok then"):
    return Comment(id=cid, author=author, link_id=link_id,
                   parent_id=parent_id, created_utc=t, score=score, body=body)


@pytest.fixture(scope="session")
def small_market():
    """A content-signal market with comments and images, in memory."""
    cfg = MarketConfig(n_submissions=700, days=3, seed=11, alpha=1.2,
                       noise=0.4, comment_rate=1.2, images=True,
                       image_bias=0.8, plant_strength=0.9)
    return generate(cfg)


@pytest.fixture(scope="session")
def small_market_dir(small_market, tmp_path_factory):
    """The same market written to disk in the pipeline's file formats."""
    out = tmp_path_factory.mktemp("market")
    write_market(small_market, out)
    return out


@pytest.fixture(scope="session")
def small_bundle(small_market, small_market_dir):
    return DataBundle.build(small_market.submissions, small_market.comments,
                            small_market_dir / "images", {})
