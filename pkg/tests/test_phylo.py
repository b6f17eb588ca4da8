"""Phylogeny tests: NJ formulas and consistency, GQD vs an independent
path-length oracle, Newick round trips."""

import numpy as np
import pytest

from diaphon.phylo import (
    DistanceMatrix,
    NewickError,
    cosine_distance_matrix,
    emit_newick,
    generalized_quartet_distance,
    gqd_counts,
    neighbor_join,
    parse_newick,
    path_length_matrix,
    quartet_resolutions,
    random_binary_tree,
    same_topology,
)

from oracles import quartet_topologies_by_paths


class TestCosineDistances:
    def test_identical_vectors(self):
        d = cosine_distance_matrix({"a": np.array([1.0, 2.0]), "b": np.array([2.0, 4.0])})
        assert d.values[0, 1] == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal_vectors(self):
        d = cosine_distance_matrix({"a": np.array([1.0, 0.0]), "b": np.array([0.0, 3.0])})
        assert d.values[0, 1] == pytest.approx(1.0)

    def test_binary_vectors(self):
        d = cosine_distance_matrix(
            {"a": np.array([1.0, 1.0, 0.0]), "b": np.array([1.0, 0.0, 1.0])}
        )
        assert d.values[0, 1] == pytest.approx(0.5)

    def test_zero_vector_names_taxon(self):
        with pytest.raises(ValueError, match="bad_taxon"):
            cosine_distance_matrix({"ok": np.ones(3), "bad_taxon": np.zeros(3)})

    def test_output_satisfies_invariants(self):
        rng = np.random.default_rng(3)
        emb = {f"t{i}": rng.normal(size=8) for i in range(6)}
        d = cosine_distance_matrix(emb)  # constructor checks the invariants
        assert d.values.max() <= 2.0


def tree_from(newick):
    return parse_newick(newick)


class TestNeighborJoin:
    def test_three_taxa_branch_lengths(self):
        d = DistanceMatrix(
            ("A", "B", "C"),
            np.array([[0.0, 3.0, 4.0], [3.0, 0.0, 5.0], [4.0, 5.0, 0.0]]),
        )
        tree = neighbor_join(d)
        lengths = {leaf.label: leaf.length for leaf in tree.leaves()}
        assert lengths["A"] == pytest.approx((3 + 4 - 5) / 2)
        assert lengths["B"] == pytest.approx((3 + 5 - 4) / 2)
        assert lengths["C"] == pytest.approx((4 + 5 - 3) / 2)

    def test_additive_four_taxa(self):
        taxa = ("A", "B", "C", "D")
        v = np.full((4, 4), 4.0)
        v[0, 1] = v[1, 0] = 2.0
        v[2, 3] = v[3, 2] = 2.0
        np.fill_diagonal(v, 0.0)
        tree = neighbor_join(DistanceMatrix(taxa, v))
        assert same_topology(tree, tree_from("((A,B),(C,D));"))
        for leaf in tree.leaves():
            assert leaf.length == pytest.approx(1.0)
        # the one internal edge carries the remaining 4 - 1 - 1 = 2
        internal = [c for _, c in tree.edges() if not c.is_leaf and c.length is not None]
        assert any(e.length == pytest.approx(2.0) for e in internal)

    def test_too_few_taxa(self):
        with pytest.raises(ValueError):
            neighbor_join(DistanceMatrix(("A", "B"), np.array([[0.0, 1.0], [1.0, 0.0]])))

    def test_recovers_random_binary_trees(self):
        # NJ is consistent on additive matrices
        rng = np.random.default_rng(99)
        for k in range(100):
            n = int(rng.integers(4, 9))
            labels = [f"t{i}" for i in range(n)]
            tree = random_binary_tree(labels, rng)
            rebuilt = neighbor_join(path_length_matrix(tree))
            assert same_topology(rebuilt, tree), f"case {k}"
            assert generalized_quartet_distance(rebuilt, tree) == 0.0

    def test_taxa_order_invariance(self):
        rng = np.random.default_rng(5)
        labels = [f"t{i}" for i in range(7)]
        tree = random_binary_tree(labels, rng)
        d = path_length_matrix(tree)
        perm = list(rng.permutation(len(labels)))
        shuffled = DistanceMatrix(
            tuple(d.taxa[i] for i in perm), d.values[np.ix_(perm, perm)]
        )
        assert same_topology(neighbor_join(d), neighbor_join(shuffled))

    def test_binary_output(self):
        rng = np.random.default_rng(11)
        d = cosine_distance_matrix({f"t{i}": rng.normal(size=5) for i in range(8)})
        tree = neighbor_join(d)
        kids = [len(n.children) for n in tree.nodes() if not n.is_leaf]
        assert kids.count(3) == 1 and all(k == 2 for k in kids if k != 3)


class TestQuartetDistance:
    def test_identity_is_zero(self):
        t = tree_from("((A,B),(C,D),(E,F));")
        assert generalized_quartet_distance(t, t) == 0.0

    def test_single_quartet_different_resolution(self):
        a = tree_from("((A,B),(C,D));")
        b = tree_from("((A,C),(B,D));")
        assert generalized_quartet_distance(a, b) == 1.0

    def test_leaf_set_mismatch_lists_difference(self):
        a = tree_from("((A,B),(C,D));")
        b = tree_from("((A,B),(C,E));")
        with pytest.raises(ValueError, match="D.*E|E.*D"):
            generalized_quartet_distance(a, b)

    def test_multifurcating_reference_shrinks_denominator(self):
        ref = tree_from("(A,B,(C,D,E));")
        cand = tree_from("((A,C),(B,(D,E)));")
        # only quartets pairing {A,B} against two of {C,D,E} are resolved
        diff, resolved = gqd_counts(cand, ref)
        assert resolved == 3
        star = quartet_resolutions(ref)[frozenset({"B", "C", "D", "E"})]
        assert star is None

    def test_matches_path_length_oracle(self):
        rng = np.random.default_rng(2024)
        for k in range(50):
            n = int(rng.integers(4, 11))
            labels = [f"x{i}" for i in range(n)]
            cand = random_binary_tree(labels, rng)
            ref = random_binary_tree(labels, rng)
            mine_c = quartet_resolutions(cand)
            mine_r = quartet_resolutions(ref)
            oracle_c = quartet_topologies_by_paths(cand)
            oracle_r = quartet_topologies_by_paths(ref)
            assert mine_c == oracle_c and mine_r == oracle_r, f"case {k}"
            diff = sum(
                1
                for q, r in oracle_r.items()
                if r is not None and oracle_c[q] is not None and oracle_c[q] != r
            )
            resolved = sum(1 for r in oracle_r.values() if r is not None)
            assert gqd_counts(cand, ref) == (diff, resolved)
            assert gqd_counts(cand, cand)[0] == 0

    def test_range(self):
        rng = np.random.default_rng(8)
        labels = [f"x{i}" for i in range(6)]
        for _ in range(20):
            a = random_binary_tree(labels, rng)
            b = random_binary_tree(labels, rng)
            assert 0.0 <= generalized_quartet_distance(a, b) <= 1.0


class TestNewick:
    def test_parse_simple(self):
        tree = tree_from("(A,B,(C,D));")
        assert tree.leaf_labels() == {"A", "B", "C", "D"}
        # one internal edge separating {C, D} from {A, B}
        assert tree.splits() in ({frozenset({"C", "D"})}, {frozenset({"A", "B"})})
        assert len(tree.splits()) == 1

    def test_round_trip_random_trees(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            n = int(rng.integers(3, 10))
            tree = random_binary_tree([f"t{i}" for i in range(n)], rng)
            again = parse_newick(emit_newick(tree))
            assert same_topology(tree, again)
            # branch lengths survive too
            d1, d2 = path_length_matrix(tree), path_length_matrix(again)
            np.testing.assert_allclose(d1.values, d2.values, rtol=1e-9)

    def test_unbalanced_parentheses_reports_offset(self):
        with pytest.raises(NewickError, match="offset"):
            parse_newick("(A,(B);")

    def test_duplicate_labels_rejected(self):
        with pytest.raises(NewickError, match="duplicate"):
            parse_newick("(A,(A,B));")

    def test_branch_lengths_optional(self):
        tree = tree_from("(A:1.5,B:0.5,(C,D):2);")
        lengths = {n.label: n.length for n in tree.leaves()}
        assert lengths["A"] == 1.5 and lengths["C"] is None
