use saegraph_bench::{planted_graph, prepared_pair};

#[test]
fn fixtures_are_usable() {
    let pair = prepared_pair(64, 500, 0.02);
    assert_eq!(pair.frames.len(), 500);
    let acc = pair.accumulate(16);
    assert_eq!(acc.n_tokens(), 500);
    assert!(planted_graph(4).n_edges() > 0);
}
