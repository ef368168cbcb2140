mod common;

use common::*;

#[test]
fn oracle_self_checks() {
    // chain 0 -> 1 -> 2
    let chain = Dag::new(3, [(0, 1), (1, 2)]);
    assert!(!dsep_oracle(&chain, &[0], &[2], &[]));
    assert!(dsep_oracle(&chain, &[0], &[2], &[1]));
    // collider 0 -> 2 <- 1
    let coll = Dag::new(3, [(0, 2), (1, 2)]);
    assert!(dsep_oracle(&coll, &[0], &[1], &[]));
    assert!(!dsep_oracle(&coll, &[0], &[1], &[2]));
    assert_eq!(all_dags(3).len(), 25);
    assert_eq!(all_dags(4).len(), 543);
    assert_eq!(cpdag_oracle(&chain), vec![vec![0, 1, 0], vec![1, 0, 1], vec![0, 1, 0]]);
    assert_eq!(cpdag_oracle(&coll), vec![vec![0, 0, -1], vec![0, 0, -1], vec![1, 1, 0]]);
}
