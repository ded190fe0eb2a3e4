//! pass@k estimation, per-level accuracy, and report writers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::grpo::RolloutGroup;
use crate::model::DifficultyLevel;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("pass@k needs 1 <= k <= n and c <= n (n={n}, c={c}, k={k})")]
    InvalidInput { n: usize, c: usize, k: usize },
    #[error("pass@k curve over an empty problem set")]
    EmptySet,
    #[error("k={k} exceeds the smallest sample count {min_n}")]
    KTooLarge { k: usize, min_n: usize },
    #[error("cannot write {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Unbiased pass@k from `c` correct out of `n` samples:
/// `1 - C(n-c, k) / C(n, k)`, evaluated as `1 - Π_{i=n-c+1}^{n} (1 - k/i)`.
/// Every factor lies in [0, 1], so nothing overflows at large `n`.
pub fn pass_at_k(n: usize, c: usize, k: usize) -> Result<f64, EvalError> {
    if k == 0 || k > n || c > n {
        return Err(EvalError::InvalidInput { n, c, k });
    }
    if c == 0 {
        return Ok(0.0);
    }
    if n - c < k {
        return Ok(1.0);
    }
    let miss: f64 = ((n - c + 1)..=n).map(|i| 1.0 - k as f64 / i as f64).product();
    Ok(1.0 - miss)
}

/// Indicator form: 1 when any of the first `k` draws is correct.
pub fn pass_at_k_exact(draws: &[bool], k: usize) -> Result<f64, EvalError> {
    if k == 0 || k > draws.len() {
        return Err(EvalError::InvalidInput {
            n: draws.len(),
            c: draws.iter().filter(|&&d| d).count(),
            k,
        });
    }
    Ok(if draws[..k].iter().any(|&d| d) { 1.0 } else { 0.0 })
}

/// Mean pass@k across problems for each requested `k`.
pub fn pass_at_k_curve(samples: &[(usize, usize)], ks: &[usize]) -> Result<BTreeMap<usize, f64>, EvalError> {
    let min_n = samples.iter().map(|s| s.0).min().ok_or(EvalError::EmptySet)?;
    let mut curve = BTreeMap::new();
    for &k in ks {
        if k > min_n {
            return Err(EvalError::KTooLarge { k, min_n });
        }
        let mut total = 0.0;
        for &(n, c) in samples {
            total += pass_at_k(n, c, k)?;
        }
        curve.insert(k, total / samples.len() as f64);
    }
    Ok(curve)
}

/// Fraction of correct rollouts at each level that appears in `groups`.
pub fn format_accuracy_report(groups: &[RolloutGroup]) -> BTreeMap<DifficultyLevel, f64> {
    let mut tally: BTreeMap<DifficultyLevel, (usize, usize)> = BTreeMap::new();
    for g in groups {
        let entry = tally.entry(g.level).or_default();
        entry.0 += g.correct.iter().filter(|&&c| c).count();
        entry.1 += g.correct.len();
    }
    tally
        .into_iter()
        .filter(|(_, (_, total))| *total > 0)
        .map(|(level, (hits, total))| (level, hits as f64 / total as f64))
        .collect()
}

/// True when accuracy never rises from an easier level to a harder one.
pub fn is_difficulty_ordered(report: &BTreeMap<DifficultyLevel, f64>) -> bool {
    report.values().zip(report.values().skip(1)).all(|(a, b)| a >= b)
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> EvalError + '_ {
    move |source| EvalError::Csv {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_level_accuracy_csv(
    path: &Path,
    report: &BTreeMap<DifficultyLevel, f64>,
) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["level", "accuracy"]).map_err(csv_err(path))?;
    for (level, acc) in report {
        w.write_record([level.as_u8().to_string(), acc.to_string()])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_pass_at_k_csv(path: &Path, curve: &BTreeMap<usize, f64>) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["k", "pass_at_k"]).map_err(csv_err(path))?;
    for (k, v) in curve {
        w.write_record([k.to_string(), v.to_string()]).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Line plot of `series` (name, points) with a log2 x-axis when every x is
/// positive, for pass@k curves.
pub fn render_curve_svg(title: &str, x_label: &str, series: &[(&str, &[(f64, f64)])]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

    let points = series.iter().flat_map(|(_, p)| p.iter());
    let log_x = points.clone().all(|p| p.0 > 0.0);
    let tx = |x: f64| if log_x { x.log2() } else { x };
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y_max: f64 = 0.0;
    for &(x, y) in points {
        x_min = x_min.min(tx(x));
        x_max = x_max.max(tx(x));
        y_max = y_max.max(y);
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
    }
    if x_max == x_min {
        x_max = x_min + 1.0;
    }
    let y_max = if y_max > 0.0 { y_max.max(1.0) } else { 1.0 };
    let sx = |x: f64| PAD + (tx(x) - x_min) / (x_max - x_min) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - y / y_max * (H - 2.0 * PAD);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}{}</text>"#,
        W / 2.0,
        H - 12.0,
        escape(x_label),
        if log_x { " (log2)" } else { "" }
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            W - PAD - 120.0,
            PAD + 16.0 * i as f64,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimator_examples() {
        assert_eq!(pass_at_k(64, 0, 8).unwrap(), 0.0);
        assert_eq!(pass_at_k(10, 3, 10).unwrap(), 1.0);
        assert_eq!(pass_at_k(64, 1, 8).unwrap(), 0.125);
        assert!(pass_at_k(4, 1, 5).is_err());
        assert!(pass_at_k(4, 1, 0).is_err());
    }

    #[test]
    fn large_n_is_finite() {
        let v = pass_at_k(128, 3, 64).unwrap();
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn curve_examples() {
        let c = pass_at_k_curve(&[(2, 1)], &[1, 2]).unwrap();
        assert_eq!(c[&1], 0.5);
        assert_eq!(c[&2], 1.0);
        let flat = pass_at_k_curve(&[(8, 0), (8, 0)], &[1, 4, 8]).unwrap();
        assert!(flat.values().all(|&v| v == 0.0));
        assert!(matches!(pass_at_k_curve(&[], &[1]), Err(EvalError::EmptySet)));
        assert!(matches!(
            pass_at_k_curve(&[(4, 1), (2, 1)], &[3]),
            Err(EvalError::KTooLarge { k: 3, min_n: 2 })
        ));
    }

    #[test]
    fn exact_mode() {
        assert_eq!(pass_at_k_exact(&[false, true, false], 1).unwrap(), 0.0);
        assert_eq!(pass_at_k_exact(&[false, true, false], 2).unwrap(), 1.0);
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let a = [(1.0, 0.1), (2.0, 0.2), (4.0, 0.3)];
        let svg = render_curve_svg("pass@k", "k", &[("adaptive", &a), ("static", &a)]);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("(log2)"));
    }
}
