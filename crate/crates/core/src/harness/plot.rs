use std::fmt::Write;

/// Curves of one method: one inner vector per seed, indexed by epoch.
pub struct Series {
    pub label: String,
    pub runs: Vec<Vec<f64>>,
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;
const COLORS: [&str; 7] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"];

fn mean_std(runs: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let vals: Vec<f64> = runs.iter().map(|r| r[i]).filter(|v| v.is_finite()).collect();
            let n = vals.len().max(1) as f64;
            let m = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            (m, var.sqrt())
        })
        .collect()
}

/// Mean curve with a shaded ±1 std band per series.
pub fn band_plot_svg(title: &str, xlabel: &str, series: &[Series]) -> String {
    let stats: Vec<Vec<(f64, f64)>> = series.iter().map(|s| mean_std(&s.runs)).collect();
    let len = stats.iter().map(Vec::len).max().unwrap_or(0).max(2);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(m, s) in stats.iter().flatten() {
        lo = lo.min(m - s);
        hi = hi.max(m + s);
    }
    if !lo.is_finite() || !hi.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let x = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / (len - 1) as f64;
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        out,
        r#"<path d="M{PAD},{PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{hi:.3e}</text>"#, PAD - 4.0, PAD + 4.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{lo:.3e}</text>"#, PAD - 4.0, H - PAD);
    for (k, (s, st)) in series.iter().zip(&stats).enumerate() {
        if st.is_empty() {
            continue;
        }
        let color = COLORS[k % COLORS.len()];
        let upper: Vec<String> = st.iter().enumerate().map(|(i, (m, d))| format!("{:.2},{:.2}", x(i), y(m + d))).collect();
        let lower: Vec<String> = st.iter().enumerate().rev().map(|(i, (m, d))| format!("{:.2},{:.2}", x(i), y(m - d))).collect();
        let _ = writeln!(
            out,
            r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let mean: Vec<String> = st.iter().enumerate().map(|(i, (m, _))| format!("{:.2},{:.2}", x(i), y(*m))).collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, mean.join(" "));
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            W - PAD - 120.0,
            PAD + 16.0 * (k + 1) as f64,
            s.label
        );
    }
    out.push_str("</svg>\n");
    out
}
