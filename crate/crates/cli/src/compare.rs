//! Column-wise comparison of two estimator tables.

use ddtwa::Column;
use serde::Serialize;

use crate::config::CompareConfig;
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ColumnReport {
    pub name: String,
    pub pass: bool,
    /// Largest `|a - b| / sqrt(se_a² + se_b²)`.
    pub max_z: f64,
    pub max_abs_dev: f64,
    /// Largest deviation in units of the combined tolerance; `<= 1` passes.
    pub max_ratio: f64,
    pub worst_time: Option<f64>,
    pub compared: usize,
    /// Times where exactly one table has an undefined value.
    pub undefined_mismatch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareReport {
    pub pass: bool,
    pub tolerance: CompareConfig,
    pub columns: Vec<ColumnReport>,
    /// Columns present in only one table.
    pub skipped: Vec<String>,
}

/// Compares `b` against `a` on a shared time grid.
pub fn compare_tables(
    a: &(Vec<f64>, Vec<Column>),
    b: &(Vec<f64>, Vec<Column>),
    tol: &CompareConfig,
) -> Result<CompareReport, CliError> {
    let (ta, ca) = a;
    let (tb, cb) = b;
    if ta.len() != tb.len() || ta.iter().zip(tb).any(|(x, y)| (x - y).abs() > 1e-9 * x.abs().max(1.0)) {
        return Err(CliError::Config(format!("time grids differ ({} vs {} rows)", ta.len(), tb.len())));
    }
    let find = |cols: &[Column], name: &str| cols.iter().position(|c| c.name == name);
    let names: Vec<String> = match &tol.columns {
        Some(list) => {
            let missing: Vec<&String> = list.iter().filter(|n| find(ca, n).is_none() || find(cb, n).is_none()).collect();
            if !missing.is_empty() {
                return Err(CliError::Config(format!("columns missing from a table: {missing:?}")));
            }
            list.clone()
        }
        None => ca.iter().filter(|c| find(cb, &c.name).is_some()).map(|c| c.name.clone()).collect(),
    };
    if names.is_empty() {
        return Err(CliError::Config("the tables share no columns".into()));
    }
    let skipped = ca.iter().chain(cb).map(|c| c.name.clone()).filter(|n| !names.contains(n)).collect::<Vec<_>>();
    let mut skipped_unique = Vec::new();
    for s in skipped {
        if !skipped_unique.contains(&s) {
            skipped_unique.push(s);
        }
    }

    let mut columns = Vec::new();
    for name in names {
        let (x, y) = (&ca[find(ca, &name).unwrap()], &cb[find(cb, &name).unwrap()]);
        let mut r = ColumnReport {
            name,
            pass: true,
            max_z: 0.0,
            max_abs_dev: 0.0,
            max_ratio: 0.0,
            worst_time: None,
            compared: 0,
            undefined_mismatch: 0,
        };
        for (k, &t) in ta.iter().enumerate() {
            if t < tol.t_from {
                continue;
            }
            let (va, vb) = match (x.mean[k], y.mean[k]) {
                (Some(va), Some(vb)) => (va, vb),
                (None, None) => continue,
                _ => {
                    r.undefined_mismatch += 1;
                    continue;
                }
            };
            let sa = x.stderr[k].unwrap_or(0.0);
            let sb = y.stderr[k].unwrap_or(0.0);
            let dev = (va - vb).abs();
            let sigma = (sa * sa + sb * sb).sqrt();
            let z = ratio(dev, sigma);
            let limit = tol.z_max * sigma + tol.abs_floor + tol.rel_floor * va.abs().max(vb.abs());
            let q = ratio(dev, limit);
            r.compared += 1;
            r.max_z = r.max_z.max(z);
            r.max_abs_dev = r.max_abs_dev.max(dev);
            if q > r.max_ratio || r.worst_time.is_none() {
                r.max_ratio = r.max_ratio.max(q);
                r.worst_time = Some(t);
            }
        }
        r.pass = r.max_ratio <= 1.0 && r.undefined_mismatch == 0;
        columns.push(r);
    }
    Ok(CompareReport { pass: columns.iter().all(|c| c.pass), tolerance: tol.clone(), columns, skipped: skipped_unique })
}

fn ratio(dev: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        dev / scale
    } else if dev == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(values: &[f64], se: f64) -> (Vec<f64>, Vec<Column>) {
        let times = (0..values.len()).map(|k| k as f64).collect();
        let col = Column {
            name: "Sz".into(),
            mean: values.iter().map(|&v| Some(v)).collect(),
            stderr: vec![Some(se); values.len()],
        };
        (times, vec![col])
    }

    #[test]
    fn identical_tables_have_zero_scores() {
        let a = table(&[1.0, 0.5, 0.25], 0.1);
        let r = compare_tables(&a, &a, &CompareConfig::default()).unwrap();
        assert!(r.pass);
        assert_eq!(r.columns[0].max_z, 0.0);
        assert_eq!(r.columns[0].max_abs_dev, 0.0);
    }

    #[test]
    fn floors_are_symmetric() {
        let a = table(&[1.0, 0.5], 0.0);
        let b = table(&[1.1, 0.4], 0.0);
        let tol = CompareConfig { abs_floor: 0.05, rel_floor: 0.02, ..Default::default() };
        let ab = compare_tables(&a, &b, &tol).unwrap();
        let ba = compare_tables(&b, &a, &tol).unwrap();
        assert_eq!(ab.columns[0].max_ratio, ba.columns[0].max_ratio);
        assert!(!ab.pass);
        assert!(ab.columns[0].max_z.is_infinite());
    }

    #[test]
    fn z_score_uses_both_errors() {
        let a = table(&[1.0], 0.3);
        let b = table(&[2.0], 0.4);
        let r = compare_tables(&a, &b, &CompareConfig::default()).unwrap();
        assert!((r.columns[0].max_z - 2.0).abs() < 1e-12);
        assert!(r.pass);
    }

    #[test]
    fn mismatched_grids_are_errors() {
        let a = table(&[1.0, 2.0], 0.1);
        let b = table(&[1.0], 0.1);
        assert!(compare_tables(&a, &b, &CompareConfig::default()).is_err());
    }

    #[test]
    fn one_sided_undefined_values_fail() {
        let a = table(&[1.0, 2.0], 0.1);
        let mut b = a.clone();
        b.1[0].mean[1] = None;
        let r = compare_tables(&a, &b, &CompareConfig::default()).unwrap();
        assert_eq!(r.columns[0].undefined_mismatch, 1);
        assert!(!r.pass);
    }
}
