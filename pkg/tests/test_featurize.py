import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from q8ssp.data import RESIDUE_TOKENS, decode_sequence, residue_index
from q8ssp.errors import ConfigError
from q8ssp.featurize import (
    BIGRAM_PAD,
    EncodedDataset,
    cache_key,
    encode_features,
    load_cached,
    make_bigrams,
    prepare,
    save_cached,
    window_mix,
)
from q8ssp.synthetic import synthetic_records

from conftest import make_record

REAL = "ACEDGFIHKMLNQPSRTWVYX"
seqs = st.text(alphabet=REAL, min_size=1, max_size=120)


def brute_window(seq, decay):
    """Direct evaluation of the decayed sums, one position at a time."""
    n = len(seq)
    pre = np.zeros((700, 22))
    fol = np.zeros((700, 22))
    for i in range(n):
        w = 0.0
        for k in range(1, i + 1):
            pre[i, residue_index(seq[i - k])] += decay**k
            w += decay**k
        if w:
            pre[i] /= w
        w = 0.0
        for k in range(1, n - i):
            fol[i, residue_index(seq[i + k])] += decay**k
            w += decay**k
        if w:
            fol[i] /= w
    return pre, fol


def test_encode_features_length3():
    ft = encode_features([make_record("ACD")])
    assert ft.values.shape == (1, 700, 46)
    assert ft.mask.sum() == 3
    onehot = ft.values[0, :, :22]
    assert (onehot.sum(axis=1) == 1).all()
    assert (onehot[:3, 21] == 0).all() and (onehot[3:, 21] == 1).all()
    assert ft.values[0, :, 44].nonzero()[0].tolist() == [0]
    assert ft.values[0, :, 45].nonzero()[0].tolist() == [2]
    assert (ft.values[0, 3:, 22:] == 0).all()


def test_profile_passthrough_and_squash():
    prof = np.full((4, 22), 2.0, dtype=np.float32)
    rec = make_record("ACDE", profile=prof)
    assert (encode_features([rec]).values[0, :4, 22:44] == 2.0).all()
    sq = encode_features([rec], squash_profile=True).values[0]
    assert np.allclose(sq[:4, 22:44], 1 / (1 + np.exp(-2.0)))
    assert (sq[4:, 22:44] == 0).all()


@settings(max_examples=40, deadline=None)
@given(seqs)
def test_onehot_columns_invert_decode(seq):
    rec = make_record(seq)
    onehot = encode_features([rec]).values[0, :, :22]
    decoded = "".join(RESIDUE_TOKENS[i] for i in onehot.argmax(axis=1)[: rec.length])
    assert decoded == decode_sequence(rec) == seq


def test_bigram_examples():
    assert make_bigrams([make_record("AC")]).tokens[0, :3].tolist() == [1, 43, BIGRAM_PAD]
    assert BIGRAM_PAD == 483
    tokens = make_bigrams(synthetic_records(5, seed=3)).tokens
    assert tokens.min() >= 0 and tokens.max() < 484


def test_all_padding_row_is_pad_token():
    from q8ssp.featurize import bigram_tokens

    assert (bigram_tokens(np.full((1, 700), 21)) == 483).all()


@settings(max_examples=40, deadline=None)
@given(seqs)
def test_bigram_bijection(seq):
    rec = make_record(seq)
    t = make_bigrams([rec]).tokens[0]
    nxt = np.append(rec.residues[1:], 21)
    assert (t // 22 == rec.residues).all() and (t % 22 == nxt).all()


def test_window_mix_examples():
    w = window_mix([make_record("AC")], 0.5)
    a = np.eye(22)[residue_index("A")]
    assert (w.preceding[0, 0] == 0).all()
    assert np.allclose(w.preceding[0, 1], a)
    assert (w.following[0, 1] == 0).all()
    w1 = window_mix([make_record("AAA")], 1.0)
    assert np.allclose(w1.preceding[0, 2], a)


@pytest.mark.parametrize("decay", [0.0, -0.1, 1.5])
def test_window_mix_decay_range(decay):
    with pytest.raises(ConfigError):
        window_mix([make_record("AC")], decay)


@settings(max_examples=25, deadline=None)
@given(seqs, st.sampled_from([0.1, 0.5, 0.9, 1.0]))
def test_window_mix_matches_brute_force(seq, decay):
    w = window_mix([make_record(seq)], decay)
    pre, fol = brute_window(seq, decay)
    assert np.allclose(w.preceding[0], pre, atol=1e-6)
    assert np.allclose(w.following[0], fol, atol=1e-6)
    sums = w.preceding[0, : len(seq)].sum(axis=1)
    assert np.allclose(sums[1:], 1.0, atol=1e-5) and sums[0] == 0
    assert (w.preceding >= 0).all() and (w.following >= 0).all()


@settings(max_examples=25, deadline=None)
@given(st.text(alphabet=REAL, min_size=2, max_size=60), st.data())
def test_window_mix_causality(seq, data):
    j = data.draw(st.integers(0, len(seq) - 1))
    other = data.draw(st.sampled_from([c for c in REAL if c != seq[j]]))
    mutated = seq[:j] + other + seq[j + 1:]
    a = window_mix([make_record(seq)], 0.5)
    b = window_mix([make_record(mutated)], 0.5)
    pre_changed = np.abs(a.preceding[0] - b.preceding[0]).sum(axis=1) > 0
    fol_changed = np.abs(a.following[0] - b.following[0]).sum(axis=1) > 0
    assert set(np.flatnonzero(pre_changed)) == set(range(j + 1, len(seq)))
    assert set(np.flatnonzero(fol_changed)) == set(range(0, j))


def test_prepare_and_cache(tmp_path):
    recs = synthetic_records(4, seed=9)
    ds = prepare(recs, "syn")
    assert isinstance(ds, EncodedDataset)
    assert ds.features.shape == (4, 700, 46) and ds.window.shape == (4, 700, 44)
    assert ds.lengths.tolist() == [r.length for r in recs]
    key = cache_key("abc")
    assert key != cache_key("abc", decay=0.25) and key != cache_key("abd")
    paths = save_cached(ds, tmp_path, key)
    assert all(key in p.name for p in paths.values())
    back = load_cached(tmp_path, "syn", key)
    assert back.content_hash() == ds.content_hash()
    assert back.sequences == ds.sequences
    assert load_cached(tmp_path, "syn", "0" * 16) is None
    sub = ds.subset([2, 0])
    assert sub.ids == [ds.ids[2], ds.ids[0]]
