//! Characterization statistics: empirical CDF/CCDF curves, Spearman rank
//! correlation with average ranks for ties, and log-log tail slopes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{argument, Error, Result};
use crate::graph::{EdgeKind, HinGraph, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CurveMode {
    /// `P[X <= v]`
    Cdf,
    /// `P[X >= v]`
    Ccdf,
}

impl CurveMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveMode::Cdf => "cdf",
            CurveMode::Ccdf => "ccdf",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionCurve {
    pub mode: CurveMode,
    /// `(value, fraction)` with strictly increasing values.
    pub points: Vec<(f64, f64)>,
}

impl DistributionCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "value,fraction")?;
        for (v, f) in &self.points {
            writeln!(w, "{v},{f}")?;
        }
        Ok(())
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(argument(format!("{what} contains non-finite value {bad}")));
    }
    Ok(())
}

/// Empirical distribution over the distinct values of `values`.
pub fn distribution_curve(values: &[f64], mode: CurveMode) -> Result<DistributionCurve> {
    if values.is_empty() {
        return Err(argument("distribution of an empty sample"));
    }
    check_finite(values, "sample")?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut points = Vec::new();
    let mut start = 0;
    while start < n {
        let v = sorted[start];
        let mut end = start;
        while end < n && sorted[end] == v {
            end += 1;
        }
        let fraction = match mode {
            CurveMode::Cdf => end as f64 / n as f64,
            CurveMode::Ccdf => (n - start) as f64 / n as f64,
        };
        points.push((v, fraction));
        start = end;
    }
    Ok(DistributionCurve { mode, points })
}

/// 1-based ranks with tied values sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman_rcc(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(argument(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(argument("Spearman correlation needs at least 2 pairs"));
    }
    check_finite(x, "x")?;
    check_finite(y, "y")?;
    pearson(&average_ranks(x), &average_ranks(y))
        .ok_or_else(|| Error::UndefinedCorrelation("an input has zero rank variance".into()))
}

/// Least-squares slope of `log10(fraction)` against `log10(value)` over
/// CCDF points with `value >= xmin`.
pub fn tail_slope(curve: &DistributionCurve, xmin: f64) -> Result<f64> {
    if curve.mode != CurveMode::Ccdf {
        return Err(argument("tail slope is defined on a CCDF"));
    }
    let pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter(|&&(v, f)| v >= xmin && v > 0.0 && f > 0.0)
        .map(|&(v, f)| (v.log10(), f.log10()))
        .collect();
    if pts.len() < 3 {
        return Err(argument(format!(
            "tail above xmin={xmin} has {} usable points, need 3",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Video attributes the characterization reads.
pub const VIDEO_ATTRIBUTES: [&str; 6] = [
    "views",
    "subscriptions",
    "danmus",
    "donations_total",
    "donations_week",
    "age_days",
];
/// Columns of the SRCC table.
pub const SRCC_METRICS: [&str; 4] = ["views", "subscriptions", "danmus", "age_days"];
/// Rows of the SRCC table.
pub const SRCC_DONATIONS: [&str; 2] = ["donations_total", "donations_week"];

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationCell {
    pub donation: String,
    pub metric: String,
    /// `None` when one side has no rank variance.
    pub srcc: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationReport {
    pub cells: Vec<CorrelationCell>,
}

impl CorrelationReport {
    pub fn get(&self, donation: &str, metric: &str) -> Option<&CorrelationCell> {
        self.cells
            .iter()
            .find(|c| c.donation == donation && c.metric == metric)
    }

    /// Matrix with donation columns as rows and metrics as columns.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "srcc,{}", SRCC_METRICS.join(","))?;
        for d in SRCC_DONATIONS {
            let row: Vec<String> = SRCC_METRICS
                .iter()
                .map(|m| match self.get(d, m).and_then(|c| c.srcc) {
                    Some(v) => format!("{v:.4}"),
                    None => "NA".to_owned(),
                })
                .collect();
            writeln!(w, "{d},{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CharacterizationReport {
    /// `(name, curve)`, e.g. `("views_cdf", ..)`.
    pub curves: Vec<(String, DistributionCurve)>,
    pub srcc: CorrelationReport,
}

impl CharacterizationReport {
    /// Writes `curve_<name>.csv` per curve and `srcc.csv`.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let mut emit = |name: String, f: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>| {
            let path = dir.join(name);
            let mut buf = Vec::new();
            f(&mut buf)
                .and_then(|_| fs::write(&path, &buf))
                .map_err(|e| Error::io(&path, e))?;
            written.push(path);
            Ok::<_, Error>(())
        };
        for (name, curve) in &self.curves {
            emit(format!("curve_{name}.csv"), &|b| curve.write_csv(b))?;
        }
        emit("srcc.csv".into(), &|b| self.srcc.write_csv(b))?;
        Ok(written)
    }
}

/// Attribute column over all videos; missing values are a schema error.
pub fn video_column(g: &HinGraph, attr: &str) -> Result<Vec<f64>> {
    g.nodes_of_kind(NodeKind::Video)
        .iter()
        .map(|&v| {
            let node = g.node(v);
            node.attrs.get(attr).map(|&x| x as f64).ok_or_else(|| {
                Error::Schema(format!(
                    "video `{}` is missing attribute column `{attr}`",
                    node.external_id
                ))
            })
        })
        .collect()
}

/// Distribution curves for every video attribute and the user follow
/// degrees, plus the SRCC table between popularity/age and donations.
pub fn characterization_report(g: &HinGraph) -> Result<CharacterizationReport> {
    let columns: Vec<(&str, Vec<f64>)> = VIDEO_ATTRIBUTES
        .iter()
        .map(|&a| video_column(g, a).map(|c| (a, c)))
        .collect::<Result<_>>()?;
    if columns[0].1.is_empty() {
        return Err(Error::Schema("graph has no videos".into()));
    }

    let users = g.nodes_of_kind(NodeKind::User);
    let followers: Vec<f64> = users
        .iter()
        .map(|&u| g.in_degree(u, EdgeKind::Follow) as f64)
        .collect();
    let followees: Vec<f64> = users
        .iter()
        .map(|&u| g.out_degree(u, EdgeKind::Follow) as f64)
        .collect();

    let mut series: Vec<(&str, &[f64])> = columns.iter().map(|(n, c)| (*n, c.as_slice())).collect();
    if !users.is_empty() {
        series.push(("followers", &followers));
        series.push(("followees", &followees));
    }
    let mut curves = Vec::new();
    for (name, values) in series {
        for mode in [CurveMode::Cdf, CurveMode::Ccdf] {
            curves.push((
                format!("{name}_{}", mode.as_str()),
                distribution_curve(values, mode)?,
            ));
        }
    }

    let column = |name: &str| &columns.iter().find(|(n, _)| *n == name).unwrap().1;
    let mut cells = Vec::new();
    for d in SRCC_DONATIONS {
        for m in SRCC_METRICS {
            let (x, y) = (column(m), column(d));
            let srcc = match spearman_rcc(x, y) {
                Ok(r) => Some(r),
                Err(Error::UndefinedCorrelation(_)) => None,
                Err(Error::Argument(_)) if x.len() < 2 => None,
                Err(e) => return Err(e),
            };
            cells.push(CorrelationCell {
                donation: d.to_owned(),
                metric: m.to_owned(),
                srcc,
                n: x.len(),
            });
        }
    }
    Ok(CharacterizationReport {
        curves,
        srcc: CorrelationReport { cells },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeTable;
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeMap;

    #[test]
    fn cdf_of_small_sample() {
        let c = distribution_curve(&[1.0, 1.0, 2.0, 4.0], CurveMode::Cdf).unwrap();
        assert_eq!(c.points, vec![(1.0, 0.5), (2.0, 0.75), (4.0, 1.0)]);
        let s = distribution_curve(&[7.0], CurveMode::Cdf).unwrap();
        assert_eq!(s.points, vec![(7.0, 1.0)]);
    }

    #[test]
    fn ccdf_uses_at_least_convention() {
        let c = distribution_curve(&[1.0, 2.0, 3.0, 4.0], CurveMode::Ccdf).unwrap();
        let fr: Vec<f64> = c.points.iter().map(|p| p.1).collect();
        assert_eq!(fr, vec![1.0, 0.75, 0.5, 0.25]);
    }

    #[test]
    fn curve_rejects_bad_input() {
        assert!(distribution_curve(&[], CurveMode::Cdf).is_err());
        assert!(distribution_curve(&[1.0, f64::NAN], CurveMode::Cdf).is_err());
    }

    #[test]
    fn spearman_examples() {
        assert_abs_diff_eq!(
            spearman_rcc(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            spearman_rcc(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(),
            -1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            spearman_rcc(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap(),
            0.6,
            epsilon = 1e-12
        );
    }

    #[test]
    fn spearman_errors() {
        assert!(matches!(
            spearman_rcc(&[1.0, 2.0], &[1.0]),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            spearman_rcc(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(
            average_ranks(&[10.0, 20.0, 10.0, 30.0]),
            vec![1.5, 3.0, 1.5, 4.0]
        );
    }

    #[test]
    fn tail_slope_of_exact_power_law() {
        let points = (1..=100)
            .map(|v| (v as f64, (v as f64).powf(-2.0)))
            .collect();
        let curve = DistributionCurve {
            mode: CurveMode::Ccdf,
            points,
        };
        assert_abs_diff_eq!(tail_slope(&curve, 1.0).unwrap(), -2.0, epsilon = 1e-9);
    }

    #[test]
    fn tail_slope_of_flat_tail() {
        let curve = DistributionCurve {
            mode: CurveMode::Ccdf,
            points: (1..=10).map(|v| (v as f64, 0.3)).collect(),
        };
        assert_abs_diff_eq!(tail_slope(&curve, 1.0).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn tail_slope_needs_three_points() {
        let c = distribution_curve(&[1.0, 2.0, 3.0, 4.0], CurveMode::Ccdf).unwrap();
        assert!(tail_slope(&c, 3.0).is_err());
        let cdf = distribution_curve(&[1.0, 2.0, 3.0, 4.0], CurveMode::Cdf).unwrap();
        assert!(tail_slope(&cdf, 1.0).is_err());
    }

    fn video_graph(rows: &[[u64; 6]]) -> HinGraph {
        let mut t = NodeTable::new();
        for (i, row) in rows.iter().enumerate() {
            let attrs: BTreeMap<String, u64> = VIDEO_ATTRIBUTES
                .iter()
                .zip(row)
                .map(|(k, v)| (k.to_string(), *v))
                .collect();
            t.push(format!("v{i}"), NodeKind::Video, attrs).unwrap();
        }
        HinGraph::build(t, vec![]).unwrap()
    }

    #[test]
    fn report_has_eight_srcc_cells() {
        // views, subscriptions, danmus, donations_total, donations_week, age_days
        let g = video_graph(&[
            [100, 10, 5, 100, 1, 30],
            [300, 5, 9, 300, 4, 10],
            [200, 30, 1, 200, 2, 20],
        ]);
        let r = characterization_report(&g).unwrap();
        assert_eq!(r.srcc.cells.len(), 8);
        let c = r.srcc.get("donations_total", "views").unwrap();
        assert_abs_diff_eq!(c.srcc.unwrap(), 1.0, epsilon = 1e-12);
        let subs = [10.0, 5.0, 30.0];
        let week = [1.0, 4.0, 2.0];
        let expected = spearman_rcc(&subs, &week).unwrap();
        let got = r
            .srcc
            .get("donations_week", "subscriptions")
            .unwrap()
            .srcc
            .unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-15);
        // 6 attributes x 2 modes; no users so no degree curves
        assert_eq!(r.curves.len(), 12);
    }

    #[test]
    fn report_names_missing_column() {
        let mut t = NodeTable::new();
        t.push("v0", NodeKind::Video, BTreeMap::from([("views".into(), 1)]))
            .unwrap();
        let g = HinGraph::build(t, vec![]).unwrap();
        match characterization_report(&g) {
            Err(Error::Schema(msg)) => assert!(msg.contains("subscriptions")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
