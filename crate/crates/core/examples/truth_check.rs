use odtr_core::dgp::{oracle_truth, DgpParams};

fn main() {
    // Published rows as (v11, v12, v13, v2, prob, cate, cpe)
    let published: [([u8; 3], u8, f64, f64, f64); 16] = [
        ([0, 1, 1], 0, 0.052, -0.044, -0.029),
        ([1, 0, 1], 1, 0.133, 0.443, 0.257),
        ([1, 1, 0], 1, 0.040, 0.252, 0.103),
        ([1, 0, 0], 1, 0.086, 0.443, 0.224),
        ([1, 1, 0], 0, 0.057, -0.011, -0.006),
        ([0, 0, 1], 0, 0.078, 0.114, 0.064),
        ([1, 0, 0], 0, 0.084, 0.247, 0.122),
        ([1, 1, 1], 1, 0.063, 0.378, 0.183),
        ([0, 1, 0], 1, 0.016, 0.017, 0.005),
        ([0, 1, 0], 0, 0.042, -0.055, -0.040),
        ([0, 0, 1], 1, 0.060, 0.406, 0.176),
        ([1, 0, 1], 0, 0.096, 0.376, 0.158),
        ([0, 0, 0], 1, 0.037, 0.310, 0.112),
        ([0, 1, 1], 1, 0.027, 0.118, 0.040),
        ([1, 1, 1], 0, 0.067, 0.060, 0.031),
        ([0, 0, 0], 0, 0.065, 0.014, 0.009),
    ];
    let t = oracle_truth(&DgpParams::new(1, 1), 10_000_000).unwrap();
    let mut worst: f64 = 0.0;
    for (v1, v2, prob, cate, cpe) in published {
        let c = t.cell(v1, v2);
        let dp = (c.prob - prob).abs();
        let dc = (c.cate - cate).abs();
        let dt = (c.cpe - cpe).abs();
        worst = worst.max(dp.max(dc).max(dt));
        println!(
            "{:?} v2={} prob {:.4} (pub {:.3}) cate {:+.4} (pub {:+.3}) cpe {:+.4} (pub {:+.3})",
            v1, v2, c.prob, prob, c.cate, cate, c.cpe, cpe
        );
        assert!(dp < 0.005, "prob off by {dp}");
        assert!(dc < 0.01, "cate off by {dc}");
        assert!(dt < 0.01, "cpe off by {dt}");
    }
    println!("max |deviation| from published table: {worst:.5}");
}
