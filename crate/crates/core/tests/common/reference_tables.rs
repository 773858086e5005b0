//! Reference rows for the gain and aggregation checks.

use samttt::harness::report::Table;

pub const RSAMPC_BASE: [f64; 5] = [-3.2, -0.9, -0.5, -0.3, -0.3];
pub const RSAMPC_VARIANT: [f64; 5] = [-3.9, -2.2, -1.8, -1.1, -1.1];
pub const RSAMPC_GAIN: [f64; 5] = [-0.7, -1.3, -1.3, -0.8, -0.8];
pub const RSAMPC_RELATIVE: [f64; 5] = [-21.87, -144.44, -260.00, -266.67, -266.67];

pub const TVM_BASE: [f64; 5] = [0.366, 0.048, 0.004, 0.032, 0.066];
pub const TVM_VARIANT: [f64; 5] = [0.465, 0.073, 0.027, 0.054, 0.070];
pub const TVM_GAIN: [f64; 5] = [0.099, 0.025, 0.023, 0.022, 0.004];
pub const TVM_RELATIVE: [f64; 5] = [27.05, 52.08, 575.00, 68.75, 6.06];

/// Module ablation: per setting, three datasets of `[f_beta, s_alpha, e_phi_mean, mae]`.
pub const MODULE_ROWS: [(&str, [[f64; 4]; 3]); 4] = [
    ("M1", [[0.819, 0.853, 0.919, 0.054], [0.779, 0.861, 0.933, 0.026], [0.840, 0.880, 0.935, 0.036]]),
    ("M2", [[0.836, 0.864, 0.929, 0.047], [0.799, 0.869, 0.937, 0.027], [0.833, 0.881, 0.939, 0.031]]),
    ("M3*", [[0.837, 0.866, 0.933, 0.047], [0.808, 0.873, 0.941, 0.026], [0.839, 0.885, 0.942, 0.030]]),
    ("M3", [[0.838, 0.868, 0.935, 0.045], [0.805, 0.874, 0.942, 0.027], [0.837, 0.884, 0.943, 0.031]]),
];

/// Printed `(P, N)` per module setting.
pub const MODULE_PN: [(&str, f64, f64); 4] =
    [("M1", 0.869, 0.0387), ("M2", 0.876, 0.0350), ("M3*", 0.880, 0.0343), ("M3", 0.881, 0.0343)];

/// Depth ablation: per setting, three datasets of
/// `[s_alpha, f_beta_w, e_phi_mean, f_mean, e_phi_max, mae]`.
pub const DEPTH_ROWS: [(&str, [[f64; 6]; 3]); 7] = [
    ("L0", [
        [0.853, 0.819, 0.919, 0.843, 0.931, 0.054],
        [0.861, 0.779, 0.933, 0.806, 0.945, 0.026],
        [0.880, 0.840, 0.935, 0.862, 0.946, 0.036],
    ]),
    ("L1", [
        [0.863, 0.834, 0.928, 0.855, 0.938, 0.048],
        [0.868, 0.797, 0.937, 0.823, 0.948, 0.027],
        [0.880, 0.831, 0.938, 0.853, 0.948, 0.031],
    ]),
    ("L2", [
        [0.861, 0.831, 0.927, 0.852, 0.937, 0.049],
        [0.868, 0.797, 0.937, 0.821, 0.948, 0.027],
        [0.881, 0.831, 0.939, 0.852, 0.948, 0.032],
    ]),
    ("L3", [
        [0.864, 0.834, 0.929, 0.855, 0.940, 0.048],
        [0.869, 0.799, 0.937, 0.824, 0.948, 0.027],
        [0.881, 0.833, 0.939, 0.854, 0.949, 0.031],
    ]),
    ("L4", [
        [0.864, 0.835, 0.930, 0.855, 0.940, 0.047],
        [0.869, 0.799, 0.938, 0.823, 0.948, 0.027],
        [0.881, 0.832, 0.939, 0.854, 0.949, 0.031],
    ]),
    ("L5", [
        [0.864, 0.834, 0.929, 0.854, 0.939, 0.048],
        [0.868, 0.797, 0.936, 0.821, 0.946, 0.027],
        [0.881, 0.832, 0.938, 0.852, 0.948, 0.031],
    ]),
    ("L4+eps", [
        [0.864, 0.836, 0.929, 0.857, 0.940, 0.047],
        [0.869, 0.799, 0.937, 0.824, 0.947, 0.027],
        [0.881, 0.833, 0.939, 0.855, 0.949, 0.031],
    ]),
];

/// Printed `(P, N)` per depth setting.
pub const DEPTH_PN: [(&str, f64, f64); 7] = [
    ("L0", 0.8768, 0.0387),
    ("L1", 0.8827, 0.0353),
    ("L2", 0.8820, 0.0360),
    ("L3", 0.8837, 0.0353),
    ("L4", 0.8837, 0.0350),
    ("L5", 0.8826, 0.0353),
    ("L4+eps", 0.8839, 0.0350),
];

pub const MODULE_HEADER: &str = "setting,dataset,f_beta,s_alpha,e_phi_mean,mae";
pub const DEPTH_HEADER: &str = "setting,dataset,s_alpha,f_beta_w,e_phi_mean,f_mean,e_phi_max,mae";

fn csv_line(setting: &str, dataset: usize, values: &[f64]) -> String {
    let cells: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    format!("{setting},d{dataset},{}", cells.join(","))
}

/// Data lines (no header) for the module rows.
pub fn module_lines() -> Vec<String> {
    MODULE_ROWS
        .iter()
        .flat_map(|(s, sets)| sets.iter().enumerate().map(move |(d, v)| csv_line(s, d, v)))
        .collect()
}

pub fn depth_lines() -> Vec<String> {
    DEPTH_ROWS
        .iter()
        .flat_map(|(s, sets)| sets.iter().enumerate().map(move |(d, v)| csv_line(s, d, v)))
        .collect()
}

pub fn table(header: &str, lines: &[String]) -> Table {
    Table::parse(&format!("{header}\n{}\n", lines.join("\n")), "reference").expect("reference rows parse")
}

/// Round half away from zero at `places` decimals, as printed tables do.
pub fn rounded(v: f64, places: i32) -> f64 {
    let k = 10f64.powi(places);
    (v * k).round() / k
}
