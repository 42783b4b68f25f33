import numpy as np
import pytest

from src.tlg_graph import (
    DanglingReference,
    DuplicateVertex,
    HennebergStep,
    NonAdjacentParents,
    NotTLG,
    alternative_henneberg_orders,
    build_tlg,
    induced_subsystem,
    random_tlg,
    recognize_tlg,
    reduce_last_vertex,
    relabel,
    tlg_subgraphs,
)


def test_build_triangle():
    g = build_tlg((1, 2), [(3, (1, 2))])
    assert g.n == 3
    assert g.edge_list == [(1, 2), (1, 3), (2, 3)]
    assert g.construction_edges() == [(1, 2), (1, 3), (2, 3)]
    assert g.neighbors(3) == [1, 2]


def test_edge_count_is_laman(triangle_chain):
    assert len(triangle_chain.edges) == 2 * triangle_chain.n - 3
    assert triangle_chain.to_networkx().number_of_edges() == 7


def test_edge_count_is_enforced(monkeypatch):
    # collapse every edge onto the base edge so the step adds nothing
    monkeypatch.setattr("src.tlg_graph.edge_key", lambda i, j: (1, 2))
    with pytest.raises(NotTLG, match="Laman"):
        build_tlg((1, 2), [(3, (1, 2))])


def test_non_adjacent_parents():
    with pytest.raises(NonAdjacentParents):
        build_tlg((1, 2), [(3, (1, 2)), (4, (1, 2)), (5, (3, 4))])


def test_same_parent_twice():
    with pytest.raises(NonAdjacentParents):
        HennebergStep(3, (1, 1))


def test_duplicate_vertex():
    with pytest.raises(DuplicateVertex):
        build_tlg((1, 2), [(3, (1, 2)), (3, (1, 2))])
    with pytest.raises(DuplicateVertex):
        build_tlg((1, 1), [])


def test_dangling_parent():
    with pytest.raises(DanglingReference):
        build_tlg((1, 2), [(3, (1, 4))])


def test_ids_must_be_dense():
    with pytest.raises(DanglingReference):
        build_tlg((1, 2), [(4, (1, 2))])


def test_recognize_two_triangles():
    g = recognize_tlg([(1, 2), (2, 3), (3, 4), (1, 4), (1, 3)])
    assert g.n == 4
    assert g.edges == frozenset({(1, 2), (2, 3), (3, 4), (1, 4), (1, 3)})


def test_recognize_rejects_k4():
    with pytest.raises(NotTLG):
        recognize_tlg([(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)])


def test_recognize_rejects_laman_graph_without_simplicial_vertex():
    with pytest.raises(NotTLG):
        recognize_tlg([(1, 2), (1, 3), (2, 3), (1, 4), (4, 5), (2, 5), (3, 5)])


def test_alternative_orders_share_edges(triangle_chain):
    orders = alternative_henneberg_orders(triangle_chain)
    assert len(orders) > 1
    assert all(o.edges == triangle_chain.edges for o in orders)
    assert len({(o.base_edge, o.steps) for o in orders}) == len(orders)


def test_relabel_swaps_ids():
    g = build_tlg((1, 2), [(3, (1, 2)), (4, (2, 3))])
    h = relabel(g, {1: 4, 2: 3, 3: 2, 4: 1})
    assert h.edges == frozenset({(3, 4), (2, 4), (2, 3), (1, 3), (1, 2)})


def test_induced_subsystem_relabels_in_order(triangle_chain):
    sub, remap = induced_subsystem(triangle_chain, [(2, 3), (2, 4), (3, 4)])
    assert remap == {2: 1, 3: 2, 4: 3}
    assert sub.n == 3
    assert sub.edges == frozenset({(1, 2), (1, 3), (2, 3)})


def test_induced_subsystem_rejects_foreign_edges(triangle_chain):
    with pytest.raises(NotTLG):
        induced_subsystem(triangle_chain, [(1, 5)])
    with pytest.raises(NotTLG):
        induced_subsystem(triangle_chain, [])


def test_reduce_last_vertex(triangle_chain):
    g, remap = reduce_last_vertex(triangle_chain)
    assert g.n == 4
    assert remap == {1: 1, 2: 2, 3: 3, 4: 4}


def test_reduce_shifts_ids_above_removed_vertex():
    g = build_tlg((2, 3), [(1, (2, 3))])
    red, remap = reduce_last_vertex(g)
    assert remap == {2: 1, 3: 2}
    assert red.edges == frozenset({(1, 2)})


def test_random_tlg_roundtrips_through_recognition():
    rng = np.random.default_rng(5)
    for n in range(2, 9):
        g = random_tlg(n, rng)
        assert len(g.edges) == 2 * n - 3
        assert recognize_tlg(g.edge_list).edges == g.edges


def test_tlg_subgraphs_triangle():
    g = build_tlg((1, 2), [(3, (1, 2))])
    subs = tlg_subgraphs(g)
    assert [len(s) for s in subs] == [1, 1, 1, 3]


def test_tlg_subgraphs_chain(triangle_chain):
    subs = tlg_subgraphs(triangle_chain)
    sizes = [len(s) for s in subs]
    assert sizes.count(1) == 7
    assert sizes.count(3) == 3
    assert sizes.count(5) == 2
    assert sizes.count(7) == 1
    assert len(subs) == 13
