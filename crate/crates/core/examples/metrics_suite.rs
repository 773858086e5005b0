//! The six segmentation metrics on hand-made masks.

use samttt::metrics::{evaluate, MaskPair, MetricReport};

fn disc(n: usize, cx: f64, cy: f64, r: f64) -> Vec<bool> {
    (0..n * n).map(|i| ((i % n) as f64 - cx).hypot((i / n) as f64 - cy) <= r).collect()
}

fn main() -> samttt::Result<()> {
    let n = 32;
    let gt = disc(n, 16.0, 16.0, 7.0);
    let soft = |m: &[bool], on: f64, off: f64| m.iter().map(|&b| if b { on } else { off }).collect::<Vec<_>>();
    let cases = [
        ("perfect", soft(&gt, 1.0, 0.0)),
        ("soft", soft(&gt, 0.8, 0.1)),
        ("shifted", soft(&disc(n, 19.0, 15.0, 7.0), 1.0, 0.0)),
        ("too large", soft(&disc(n, 16.0, 16.0, 10.0), 1.0, 0.0)),
        ("empty", vec![0.0; n * n]),
        ("inverted", soft(&gt, 0.0, 1.0)),
    ];
    println!("{:>10} {}", "", MetricReport::COLUMNS.map(|c| format!("{c:>11}")).join(""));
    for (name, pred) in cases {
        let r = evaluate(&MaskPair::new(n, n, pred, gt.clone())?);
        println!("{name:>10} {}", r.values().map(|v| format!("{v:>11.4}")).join(""));
    }
    Ok(())
}
