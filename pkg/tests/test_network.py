import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from comfp.network import (
    DataError,
    InfeasibleError,
    OverlapError,
    ParseError,
    assemble_composite,
    degree_histogram,
    filter_popular_users,
    holdout_split,
    load_edge_list,
    load_manifest,
    read_split,
    sample_negatives,
    write_degree_histogram,
    write_edge_list,
    write_manifest,
    write_split,
)

from conftest import labelled_layer


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_edge_list_dedups_undirected(tmp_path):
    g = load_edge_list(write(tmp_path, "a.tsv", "a\tb\nb\ta\n"))
    assert g.dyads == {("a", "b")}
    assert g.name == "a"


def test_edge_list_timestamps_and_comments(tmp_path):
    g = load_edge_list(write(tmp_path, "t.tsv", "# header\na\tb\t5\na\tc\t9\nb\ta\t3\n"), has_timestamps=True)
    assert g.m == 2
    # the earliest observation of a repeated dyad wins
    assert g.timestamps == {("a", "b"): 3, ("a", "c"): 9}


def test_self_loops_are_counted_and_skipped(tmp_path):
    g = load_edge_list(write(tmp_path, "s.tsv", "a\ta\nb\tc\n"))
    assert g.skipped_self_loops == 1
    assert g.dyads == {("b", "c")}


@pytest.mark.parametrize("text,line", [("a\tb\nonly-one-field\n", 2), ("a\tb\tx\n", 1), ("\tb\n", 1)])
def test_malformed_lines_report_line_number(tmp_path, text, line):
    ts = "\tx" in text
    with pytest.raises(ParseError, match=f":{line}:"):
        load_edge_list(write(tmp_path, "bad.tsv", text), has_timestamps=ts)


def test_assemble_examples():
    net = assemble_composite([labelled_layer("x", [("a", "b")]), labelled_layer("y", [("b", "c")])])
    assert net.roster == ["a", "b", "c"] and net.n == 3
    with pytest.raises(OverlapError) as err:
        assemble_composite([labelled_layer("x", [("a", "b")]), labelled_layer("y", [("c", "d")])])
    assert err.value.layers == ("x", "y")
    single = assemble_composite([labelled_layer("x", [("a", "b")])])
    assert single.N == 1


def test_assemble_rejects_empty_input():
    with pytest.raises(DataError):
        assemble_composite([])


edge_lists = st.lists(
    st.tuples(st.integers(0, 9), st.integers(0, 9)).filter(lambda e: e[0] != e[1]), min_size=1, max_size=30
)


@given(edge_lists, edge_lists)
def test_decompose_inverts_assemble(e1, e2):
    lab = lambda es: [(f"u{a}", f"u{b}") for a, b in es]  # noqa: E731
    shared = f"u{e1[0][0]}"
    layers = [labelled_layer("p", lab(e1)), labelled_layer("q", lab(e2), extra_members=[shared])]
    net = assemble_composite(layers)
    back = net.decompose()
    for orig, got in zip(layers, back):
        assert got.dyads == orig.dyads
        assert got.members == orig.members


def test_manifest_round_trip(tmp_path):
    net = assemble_composite(
        [labelled_layer("x", [("a", "b"), ("b", "c")], timestamps={("a", "b"): 1, ("b", "c"): 2}),
         labelled_layer("y", [("c", "d")])]
    )
    write_edge_list(net.layers[0], tmp_path / "x.tsv", net.roster)
    write_edge_list(net.layers[1], tmp_path / "y.tsv", net.roster)
    write_manifest(tmp_path / "m.json", [{"name": "x", "path": "x.tsv", "timestamps": True},
                                         {"name": "y", "path": "y.tsv", "timestamps": False}])
    again = load_manifest(tmp_path / "m.json")
    assert again.roster == net.roster
    assert [g.dyads for g in again.layers] == [g.dyads for g in net.layers]
    assert again.layers[0].timestamps == net.layers[0].timestamps


def test_manifest_errors(tmp_path):
    with pytest.raises(ParseError):
        load_manifest(write(tmp_path, "m.json", "{not json"))
    with pytest.raises(ParseError):
        load_manifest(write(tmp_path, "e.json", '{"layers": []}'))
    with pytest.raises(OSError):
        load_manifest(write(tmp_path, "g.json", '{"layers": [{"name": "a", "path": "missing.tsv"}]}'))


def chain(m, timestamps=True):
    edges = [(f"v{k:03d}", f"v{k + 1:03d}") for k in range(m)]
    ts = {tuple(sorted(e)): k + 1 for k, e in enumerate(edges)} if timestamps else None
    return assemble_composite([labelled_layer("c", edges, timestamps=ts)])


def test_holdout_sizes():
    split = holdout_split(chain(100), 0.1, "uniform", seed=3)
    assert len(split.layers[0].heldout_pos) == 10
    assert len(split.layers[0].train_pos) == 90


def test_temporal_holdout_takes_latest():
    net = chain(10)
    split = holdout_split(net, 0.2, "temporal")
    held = {tuple(p) for p in split.layers[0].heldout_pos.tolist()}
    ts = net.layers[0].timestamps
    assert sorted(ts[d] for d in held) == [9, 10]


def test_holdout_validation():
    with pytest.raises(DataError):
        holdout_split(chain(10, timestamps=False), 0.1, "temporal")
    for bad in (0.0, 1.0, -0.5):
        with pytest.raises(ValueError):
            holdout_split(chain(10), bad, "uniform")
    with pytest.raises(ValueError):
        holdout_split(chain(10), 0.1, "random")


def test_uniform_holdout_deterministic():
    a = holdout_split(chain(50), 0.3, "uniform", seed=9)
    b = holdout_split(chain(50), 0.3, "uniform", seed=9)
    assert np.array_equal(a.layers[0].heldout_pos, b.layers[0].heldout_pos)


def random_net(seed, n=40, p=0.15, layers=2):
    rng = np.random.default_rng(seed)
    out = []
    for d in range(layers):
        edges = [(f"u{i:02d}", f"u{j:02d}") for i, j in itertools.combinations(range(n), 2) if rng.random() < p]
        ts = {e: int(rng.integers(1000)) for e in edges}
        out.append(labelled_layer(f"L{d}", edges, extra_members=[f"u{i:02d}" for i in range(n)], timestamps=ts))
    return assemble_composite(out)


@given(st.integers(0, 10_000), st.sampled_from(["temporal", "uniform"]), st.integers(1, 10))
def test_split_set_algebra(seed, mode, pool):
    net = random_net(seed)
    split = sample_negatives(net, holdout_split(net, 0.2, mode, seed), pool, seed)
    for g, ls in zip(net.layers, split.layers):
        tp = {tuple(p) for p in ls.train_pos.tolist()}
        hp = {tuple(p) for p in ls.heldout_pos.tolist()}
        tn = {tuple(p) for p in ls.train_neg.tolist()}
        en = {tuple(sorted(p)) for p in ls.eval_neg.tolist()}
        assert tp | hp == g.dyads
        assert not (tp & hp) and not (tn & (tp | hp)) and not (en & (tp | hp)) and not (tn & en)
        assert len(tn) == len(tp) == len(ls.train_neg)
        owners = ls.eval_neg[:, 0]
        for u in set(ls.heldout_pos.ravel().tolist()):
            assert np.sum(owners == u) == pool
        assert all(i < j for i, j in tn)


def test_negative_sampling_deterministic():
    net = random_net(5)
    a = sample_negatives(net, holdout_split(net, 0.1, "uniform", 1), 5, 2)
    b = sample_negatives(net, holdout_split(net, 0.1, "uniform", 1), 5, 2)
    for la, lb in zip(a.layers, b.layers):
        assert np.array_equal(la.train_neg, lb.train_neg)
        assert np.array_equal(la.eval_neg, lb.eval_neg)


def test_complete_layer_is_infeasible():
    users = [f"u{k}" for k in range(6)]
    net = assemble_composite([labelled_layer("k6", list(itertools.combinations(users, 2)))])
    with pytest.raises(InfeasibleError):
        sample_negatives(net, holdout_split(net, 0.2, "uniform", 0), 1, 0)


def test_popularity_filter_example():
    # hub has total degree 10, everyone else 1: threshold 20/11 + 2.587 = 4.41
    edges_a = [("hub", f"x{k}") for k in range(7)]
    edges_b = [("hub", "p"), ("hub", "q"), ("hub", "r")]
    net = assemble_composite([labelled_layer("a", edges_a, extra_members=["p"]), labelled_layer("b", edges_b)])
    deg = net.total_degrees()
    thresh = deg.mean() + deg.std()
    out = filter_popular_users(net)
    assert "hub" not in out.roster
    assert all(lab in out.roster for lab, d in zip(net.roster, deg) if d <= thresh)


def test_popularity_filter_keeps_regular_graph():
    users = [f"u{k}" for k in range(5)]
    ring = [(users[k], users[(k + 1) % 5]) for k in range(5)]
    net = assemble_composite([labelled_layer("ring", ring)])
    assert filter_popular_users(net).roster == net.roster


@given(st.integers(0, 10_000))
def test_popularity_filter_never_drops_below_mean(seed):
    net = random_net(seed, n=25, p=0.2)
    deg = net.total_degrees()
    kept = set(filter_popular_users(net).roster)
    for lab, d in zip(net.roster, deg):
        if d <= deg.mean():
            assert lab in kept


def test_degree_histograms(tmp_path):
    star = assemble_composite([labelled_layer("s", [("c", "a"), ("c", "b"), ("c", "d")])]).layers[0]
    assert degree_histogram(star) == {1: 3, 3: 1}
    tri = assemble_composite([labelled_layer("t", [("a", "b"), ("b", "c"), ("a", "c")])]).layers[0]
    assert degree_histogram(tri) == {2: 3}
    empty = labelled_layer("e", [], extra_members=["a", "b"])
    assert degree_histogram(empty) == {0: 2}
    write_degree_histogram(star, tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text() == "degree,count\n1,3\n3,1\n"


def test_split_file_round_trip(tmp_path):
    net = random_net(1)
    split = sample_negatives(net, holdout_split(net, 0.1, "temporal", 0), 3, 0)
    write_split(split, tmp_path / "s.txt", net.roster, {"seed": 0})
    back, roster, cfg = read_split(tmp_path / "s.txt")
    assert roster == net.roster and cfg == {"seed": 0}
    assert back.layer_names == split.layer_names
    for a, b in zip(split.layers, back.layers):
        for key in ("train_pos", "heldout_pos", "train_neg", "eval_neg"):
            assert np.array_equal(getattr(a, key), getattr(b, key))


def test_split_file_rejects_other_formats(tmp_path):
    with pytest.raises(ParseError):
        read_split(write(tmp_path, "x.txt", "hello\n"))
