use dsqa_wasm::{loss_vs_tau, pairing_matrix, synthetic_scatter};

#[test]
fn pairing_matrix_follows_dis_and_con_rules() {
    // views: 0..3 first copies, 3..6 second copies
    let dis = pairing_matrix("2.4, 2.6, 1.7", "dis", 0.5, 1.5).unwrap();
    assert_eq!(dis.labels, vec![2.4, 2.6, 1.7, 2.4, 2.6, 1.7]);
    assert!(!dis.mask[0][1]);
    assert!(dis.mask[0][2]);
    assert!(dis.mask[0][3]);

    let con = pairing_matrix("2.4 2.6 1.7", "con", 0.5, 1.5).unwrap();
    assert!(con.mask[0][1]);
    assert!(!con.mask[0][2]);
    for (i, row) in con.mask.iter().enumerate() {
        assert!(!row[i]);
        for (j, &p) in row.iter().enumerate() {
            assert_eq!(p, con.mask[j][i], "pairing must be symmetric");
        }
    }
    assert_eq!(con.positives_per_anchor, vec![3, 3, 1, 3, 3, 1]);
}

#[test]
fn simclr_mask_is_partner_only() {
    let v = pairing_matrix("3,3,3,3", "simclr", 0.5, 1.5).unwrap();
    for (i, row) in v.mask.iter().enumerate() {
        let on: Vec<usize> = (0..8).filter(|&j| row[j]).collect();
        assert_eq!(on, vec![(i + 4) % 8]);
    }
}

#[test]
fn pairing_rejects_bad_input() {
    assert!(pairing_matrix("1, x", "dis", 0.5, 1.5).unwrap_err().contains("`x`"));
    assert!(pairing_matrix("", "dis", 0.5, 1.5).is_err());
    assert!(pairing_matrix("1,2", "nope", 0.5, 1.5).unwrap_err().contains("nope"));
}

#[test]
fn loss_vs_tau_is_finite_and_deterministic() {
    let taus = [0.1, 1.0, 10.0, 50.0, 100.0];
    let a = loss_vs_tau("1,1,2,3,4,5,6,7", "coarse", &taus, 3).unwrap();
    let b = loss_vs_tau("1,1,2,3,4,5,6,7", "coarse", &taus, 3).unwrap();
    assert_eq!(a.len(), 5);
    for (p, q) in a.iter().zip(&b) {
        assert!(p.loss.is_finite() && p.loss >= 0.0);
        assert_eq!(p.loss.to_bits(), q.loss.to_bits());
    }
    // at very large τ every logit is ~0 and the loss approaches ln of the denominator size
    let z = loss_vs_tau("1,2,3,4", "simclr", &[1e6], 0).unwrap();
    assert!((z[0].loss - 7f64.ln()).abs() < 1e-4);
    assert!(loss_vs_tau("1,2", "coarse", &[0.0], 0).is_err());
}

#[test]
fn scatter_tracks_severity_and_shift() {
    let pts = synthetic_scatter(400, 0.0, 1).unwrap();
    assert_eq!(pts.len(), 400);
    let n = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.label).sum::<f64>() / n,
        pts.iter().map(|p| p.signal).sum::<f64>() / n,
    );
    let cov: f64 = pts.iter().map(|p| (p.label - mx) * (p.signal - my)).sum();
    assert!(cov > 0.0);

    let mean_abs_nuisance = |shift: f64| {
        let p = synthetic_scatter(200, shift, 1).unwrap();
        p.iter().map(|q| q.nuisance.abs()).sum::<f64>() / p.len() as f64
    };
    assert!(mean_abs_nuisance(3.0) > mean_abs_nuisance(0.0));
}
