import pytest

from semid.asm import assemble
from semid.coalesce import (
    DecisionTree,
    Interior,
    Leaf,
    TreeFormatError,
    build_matrix,
    build_tree,
    coalesce,
    row_partition,
)
from semid.corpus import FunctionRecord, select
from semid.explore import FuzzConfig, explore_corpus
from semid.taint import generate_accepting_run


@pytest.fixture(scope="module")
def trained(corpus):
    recs = select(corpus, variants={"xa-O2"})
    profs = explore_corpus(recs, FuzzConfig(), seed=0)
    training = [(p.record, p.dcis) for p in profs]
    matrix, tree = coalesce(training)
    return training, matrix, tree


def _rec(name, body):
    img = assemble(f".func {name} xa\n{body}\n.end")
    return FunctionRecord(name, "t", img)


def test_single_function_matrix(by_key):
    rec = by_key[("gcd", "xa-O2")]
    dcis = [generate_accepting_run(rec.image, s) for s in (1, 2, 3)]
    m = build_matrix([(rec, dcis)])
    assert m.cells == [(True, True, True)]
    tree = build_tree(m)
    assert isinstance(tree.root, Leaf) and tree.root.functions == [0]


def test_disjoint_pair_splits():
    one = _rec("one", "    li r0, 1\n    ret")
    neg = _rec("neg", "    li r0, -1\n    ret")
    training = [(r, [generate_accepting_run(r.image, 0)]) for r in (one, neg)]
    m, tree = coalesce(training)
    assert m.cells == [(True, False), (False, True)]
    assert isinstance(tree.root, Interior) and tree.root.column == 0
    assert sorted(tree.classes()) == [["neg"], ["one"]]
    assert tree.interior_count() == 1


def test_identical_rows_share_leaf():
    a = _rec("a", "    li r0, 5\n    ret")
    b = _rec("b", "    li r0, 9\n    ret")
    m, tree = coalesce([(r, [generate_accepting_run(r.image, 0)]) for r in (a, b)])
    assert tree.classes() == [["a", "b"]]


def test_empty_dcis_is_unclassifiable():
    a = _rec("a", "    li r0, 5\n    ret")
    z = _rec("z", "    li r7, 0\n    div r1, r7\n    ret")
    m, tree = coalesce([(a, [generate_accepting_run(a.image, 0)]), (z, [])])
    assert tree.unclassifiable == [1]
    assert tree.classes() == [["a"]]


def test_empty_matrix():
    m, tree = coalesce([])
    assert tree.root is None and tree.leaves() == []


def test_diagonal(trained):
    _, m, _ = trained
    for row in m.classified():
        assert all(m.cells[row][c] for c in m.owned_columns(row))


def test_partition_equivalence(trained):
    _, m, tree = trained
    leaves = sorted(sorted(l.functions) for l in tree.leaves())
    assert leaves == sorted(sorted(g) for g in row_partition(m))


def test_tree_shape(trained):
    _, m, tree = trained
    n = len(m.classified())
    assert tree.interior_count() < n
    assert tree.interior_count() + len(tree.leaves()) <= 2 * len(tree.leaves()) - 1


def test_path_patterns_match(trained):
    _, m, tree = trained

    def walk(node, path):
        if isinstance(node, Leaf):
            for f in node.functions:
                assert all(m.cells[f][c] == want for c, want in path)
            assert node.confirm is not None and all(m.cells[f][node.confirm] for f in node.functions)
            return
        walk(node.accept, path + [(node.column, True)])
        walk(node.reject, path + [(node.column, False)])
    walk(tree.root, [])


def test_equivalence_pair(trained):
    _, _, tree = trained
    assert sorted(["scale10", "times_ten"]) in [sorted(c) for c in tree.classes()]


def test_greedy_choice_is_balanced(trained):
    _, m, tree = trained
    rows = m.classified()
    scores = []
    for c in range(len(m.columns)):
        acc = sum(m.cells[r][c] for r in rows)
        if 0 < acc < len(rows):
            scores.append((abs(2 * acc - len(rows)), c))
    assert tree.root.column == min(scores)[1]


def test_json_round_trip(trained, tmp_path):
    _, _, tree = trained
    p = tmp_path / "tree.json"
    tree.save(p)
    again = DecisionTree.load(p)
    assert again.dumps() == tree.dumps()
    assert again.classes() == tree.classes()


def test_corrupt_tree(tmp_path):
    p = tmp_path / "tree.json"
    p.write_text("{not json")
    with pytest.raises(TreeFormatError, match="tree.json"):
        DecisionTree.load(p)
    p.write_text('{"format": 1, "dialect": "xa"}')
    with pytest.raises(TreeFormatError, match="malformed"):
        DecisionTree.load(p)


def test_matrix_parallel_matches_serial(trained):
    training, m, _ = trained
    assert build_matrix(training[:8], jobs=2).cells == build_matrix(training[:8]).cells
