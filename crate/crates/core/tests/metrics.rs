mod support;

use std::collections::BTreeMap;

use dsqa_core::evaluation::{pcc, speaker_aggregate, srcc};
use support::oracle;

#[test]
fn examples_reproduce() {
    let c = oracle::metric_examples();
    assert!(c.passed, "{}", c.detail);
}

#[test]
fn monotone_invariance() {
    let c = oracle::srcc_monotone_invariance(300);
    assert!(c.passed, "{}", c.detail);
}

#[test]
fn spearman_closed_form() {
    let c = oracle::srcc_closed_form(300);
    assert!(c.passed, "{}", c.detail);
}

#[test]
fn correlations_stay_in_range() {
    let a = [1.0, 5.0, 2.0, 2.0, 9.0, -1.0];
    let b = [0.0, 0.5, 0.5, 3.0, 2.0, 1.0];
    for r in [srcc(&a, &b).unwrap(), pcc(&a, &b).unwrap()] {
        assert!((-1.0..=1.0).contains(&r));
    }
    assert!(srcc(&[1.0], &[2.0]).is_err());
    assert!(pcc(&[1.0, 2.0], &[1.0]).is_err());
}

#[test]
fn speaker_means() {
    let ids: Vec<String> = ["u1", "u2", "u3"].iter().map(|s| s.to_string()).collect();
    let map: BTreeMap<String, String> =
        [("u1", "a"), ("u2", "a"), ("u3", "b")].iter().map(|(u, s)| (u.to_string(), s.to_string())).collect();
    let agg = speaker_aggregate(&ids, &[2.0, 4.0, 7.0], &map).unwrap();
    assert_eq!(agg["a"], 3.0);
    assert_eq!(agg["b"], 7.0);

    let mut partial = map.clone();
    partial.remove("u3");
    assert!(speaker_aggregate(&ids, &[2.0, 4.0, 7.0], &partial).is_err());
}
