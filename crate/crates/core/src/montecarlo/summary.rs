use std::io::{self, Write};

use serde::Serialize;

use super::normality::{ks_normality, NormalityTest, MIN_NORMALITY_SAMPLES};
use super::run::{Experiment, Replication};
use crate::error::{Error, Result};

/// Largest failed fraction of replications an experiment tolerates.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub weight: String,
    pub successes: usize,
    pub failures: usize,
    pub mean: Vec<f64>,
    /// Sample standard deviation; absent with fewer than two successes.
    pub std: Option<Vec<f64>>,
    /// `sqrt(mean ‖θ̂ - θ*‖²)`.
    pub param_rmse: f64,
    /// `mean ‖θ̂ - θ*‖²`.
    pub param_mse: f64,
    /// Mean of `∫ (x̂̇ᵢ - Fᵢ(x̂, θ̂))² w dt` per state dimension.
    pub criterion_minimum: Vec<f64>,
    pub mean_criterion_value: f64,
    /// Lilliefors test per free parameter; absent below
    /// [`MIN_NORMALITY_SAMPLES`] successes or for a constant component.
    pub normality: Vec<Option<NormalityTest>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryTable {
    pub n: usize,
    pub replications: usize,
    pub free_parameters: Vec<String>,
    pub theta_star: Vec<f64>,
    /// Mean over replications of the per-dimension curve RMSE.
    pub curve_rmse: Vec<f64>,
    pub variants: Vec<VariantSummary>,
}

impl SummaryTable {
    pub fn variant(&self, weight: &str) -> Option<&VariantSummary> {
        self.variants.iter().find(|v| v.weight == weight)
    }
}

fn mean_of(rows: &[Vec<f64>], width: usize) -> Vec<f64> {
    let mut m = vec![0.0; width];
    for r in rows {
        for (a, v) in m.iter_mut().zip(r) {
            *a += v;
        }
    }
    m.iter().map(|s| s / rows.len() as f64).collect()
}

/// Aggregates replications in index order.
pub fn summarize(exp: &Experiment, reps: &[Replication]) -> Result<SummaryTable> {
    let config = exp.config();
    let truth = config.theta_star_free()?;
    let p = truth.len();
    let d = exp.model().dim();
    let total = reps.len();

    let curves: Vec<Vec<f64>> = reps.iter().filter_map(|r| r.curve_rmse.clone()).collect();
    let curve_rmse = if curves.is_empty() { vec![f64::NAN; d] } else { mean_of(&curves, d) };

    let mut variants = Vec::with_capacity(config.weights.len());
    for (k, spec) in config.weights.iter().enumerate() {
        let ok: Vec<_> = reps
            .iter()
            .filter_map(|r| r.variants.get(k).and_then(|v| v.as_ref().ok()))
            .filter(|v| v.usable())
            .collect();
        let failures = total - ok.len();
        if failures as f64 > MAX_FAILURE_FRACTION * total as f64 {
            return Err(Error::ExcessiveFailures { failed: failures, total });
        }
        let thetas: Vec<Vec<f64>> = ok.iter().map(|v| v.theta_free.iter().copied().collect()).collect();
        let mean = mean_of(&thetas, p);
        let std = (ok.len() >= 2).then(|| {
            (0..p)
                .map(|i| {
                    let ss: f64 = thetas.iter().map(|t| (t[i] - mean[i]).powi(2)).sum();
                    (ss / (ok.len() - 1) as f64).sqrt()
                })
                .collect()
        });
        let param_mse = ok.iter().map(|v| (&v.theta_free - &truth).norm_squared()).sum::<f64>() / ok.len() as f64;
        let squares: Vec<Vec<f64>> =
            ok.iter().map(|v| v.estimate.criterion_components.iter().map(|c| c * c).collect()).collect();
        let normality = (0..p)
            .map(|i| {
                if ok.len() < MIN_NORMALITY_SAMPLES {
                    return None;
                }
                let xs: Vec<f64> = thetas.iter().map(|t| t[i]).collect();
                ks_normality(&xs, config.seed).ok()
            })
            .collect();
        variants.push(VariantSummary {
            weight: spec.label().to_string(),
            successes: ok.len(),
            failures,
            mean,
            std,
            param_rmse: param_mse.sqrt(),
            param_mse,
            criterion_minimum: mean_of(&squares, d),
            mean_criterion_value: ok.iter().map(|v| v.estimate.criterion_value).sum::<f64>() / ok.len() as f64,
            normality,
        });
    }
    Ok(SummaryTable {
        n: config.n,
        replications: total,
        free_parameters: exp.model().free_names(),
        theta_star: truth.iter().copied().collect(),
        curve_rmse,
        variants,
    })
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// One row per `(n, weight variant)`. Standard deviation columns appear
/// only if some row has them.
pub fn write_summary_csv<W: Write>(tables: &[SummaryTable], mut out: W) -> io::Result<()> {
    let Some(first) = tables.first() else { return Ok(()) };
    let names = &first.free_parameters;
    let d = first.curve_rmse.len();
    let with_std = tables.iter().flat_map(|t| &t.variants).any(|v| v.std.is_some());

    let mut header = vec!["n".to_string(), "weight".into(), "replications".into(), "failures".into()];
    header.extend(names.iter().map(|s| format!("mean_{s}")));
    if with_std {
        header.extend(names.iter().map(|s| format!("std_{s}")));
    }
    header.extend(["param_rmse".to_string(), "param_mse".into()]);
    header.extend((1..=d).map(|i| format!("curve_rmse_{i}")));
    header.extend((1..=d).map(|i| format!("criterion_min_{i}")));
    header.extend(names.iter().map(|s| format!("ks_stat_{s}")));
    header.extend(names.iter().map(|s| format!("ks_reject_{s}")));
    writeln!(out, "{}", header.join(","))?;

    for t in tables {
        for v in &t.variants {
            let mut row = vec![t.n.to_string(), v.weight.clone(), t.replications.to_string(), v.failures.to_string()];
            row.extend(v.mean.iter().map(|x| num(*x)));
            if with_std {
                match &v.std {
                    Some(s) => row.extend(s.iter().map(|x| num(*x))),
                    None => row.extend(names.iter().map(|_| String::new())),
                }
            }
            row.extend([num(v.param_rmse), num(v.param_mse)]);
            row.extend(t.curve_rmse.iter().map(|x| num(*x)));
            row.extend(v.criterion_minimum.iter().map(|x| num(*x)));
            row.extend(v.normality.iter().map(|k| k.map(|k| num(k.statistic)).unwrap_or_default()));
            row.extend(v.normality.iter().map(|k| k.map(|k| k.reject_at_5pct.to_string()).unwrap_or_default()));
            writeln!(out, "{}", row.join(","))?;
        }
    }
    Ok(())
}

fn tuple(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3}")).collect();
    format!("({})", parts.join(", "))
}

fn section<W: Write>(out: &mut W, title: &str, header: &[String], rows: &[Vec<String>]) -> io::Result<()> {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string()
    };
    writeln!(out, "{title}")?;
    writeln!(out, "{}", line(header))?;
    for r in rows {
        writeln!(out, "{}", line(r))?;
    }
    writeln!(out)
}

/// Aligned plain-text tables: means and standard deviations, parameter and
/// curve RMSE, criterion minima, and normality decisions, one row per `n`.
pub fn write_summary_text<W: Write>(tables: &[SummaryTable], mut out: W) -> io::Result<()> {
    let Some(first) = tables.first() else { return Ok(()) };
    let labels: Vec<&str> = first.variants.iter().map(|v| v.weight.as_str()).collect();
    writeln!(out, "parameters {} = {}", tuple_names(&first.free_parameters), tuple(&first.theta_star))?;
    writeln!(out)?;

    let with_std = tables.iter().flat_map(|t| &t.variants).any(|v| v.std.is_some());
    let mut header = vec!["n".to_string()];
    header.extend(labels.iter().map(|l| format!("mean({l})")));
    if with_std {
        header.extend(labels.iter().map(|l| format!("std({l})")));
    }
    let rows: Vec<Vec<String>> = tables
        .iter()
        .map(|t| {
            let mut r = vec![t.n.to_string()];
            r.extend(t.variants.iter().map(|v| tuple(&v.mean)));
            if with_std {
                r.extend(t.variants.iter().map(|v| v.std.as_deref().map(tuple).unwrap_or_else(|| "-".into())));
            }
            r
        })
        .collect();
    section(&mut out, "Mean and standard deviation", &header, &rows)?;

    let mut header = vec!["n".to_string()];
    header.extend(labels.iter().map(|l| format!("RMSE({l})")));
    header.extend(labels.iter().map(|l| format!("MSE({l})")));
    header.push("RMSE(curve)".into());
    let rows: Vec<Vec<String>> = tables
        .iter()
        .map(|t| {
            let mut r = vec![t.n.to_string()];
            r.extend(t.variants.iter().map(|v| format!("{:.3}", v.param_rmse)));
            r.extend(t.variants.iter().map(|v| format!("{:.3}", v.param_mse)));
            r.push(tuple(&t.curve_rmse));
            r
        })
        .collect();
    section(&mut out, "Parameter and curve errors", &header, &rows)?;

    let mut header = vec!["n".to_string()];
    header.extend(labels.iter().map(|l| format!("R2({l})")));
    let rows: Vec<Vec<String>> = tables
        .iter()
        .map(|t| {
            let mut r = vec![t.n.to_string()];
            r.extend(t.variants.iter().map(|v| tuple(&v.criterion_minimum)));
            r
        })
        .collect();
    section(&mut out, "Minima of the criteria", &header, &rows)?;

    let mut header = vec!["n".to_string()];
    header.extend(labels.iter().map(|l| format!("KS reject 5% ({l})")));
    header.push("failures".into());
    let rows: Vec<Vec<String>> = tables
        .iter()
        .map(|t| {
            let mut r = vec![t.n.to_string()];
            r.extend(t.variants.iter().map(|v| {
                let cells: Vec<&str> = v
                    .normality
                    .iter()
                    .map(|k| match k {
                        Some(k) if k.reject_at_5pct => "yes",
                        Some(_) => "no",
                        None => "-",
                    })
                    .collect();
                format!("({})", cells.join(", "))
            }));
            let fails: Vec<String> = t.variants.iter().map(|v| v.failures.to_string()).collect();
            r.push(fails.join("/"));
            r
        })
        .collect();
    section(&mut out, "Normality of the estimates", &header, &rows)
}

fn tuple_names(names: &[String]) -> String {
    format!("({})", names.join(", "))
}

/// Per-replication CSV: one row per `(replication, weight variant)`.
pub fn write_raw_csv<W: Write>(exp: &Experiment, reps: &[Replication], mut out: W) -> io::Result<()> {
    let names = exp.model().free_names();
    let d = exp.model().dim();
    let mut header = vec!["n".to_string(), "rep_index".into(), "weight".into(), "status".into()];
    header.extend(names.iter().cloned());
    header.extend((1..=d).map(|i| format!("curve_rmse_{i}")));
    header.push("criterion_value".into());
    writeln!(out, "{}", header.join(","))?;
    let n = exp.config().n;
    for r in reps {
        for (spec, v) in exp.config().weights.iter().zip(&r.variants) {
            let mut row = vec![n.to_string(), r.rep_index.to_string(), spec.label().to_string()];
            match v {
                Ok(v) => {
                    row.push(if v.usable() { "ok" } else { "not-converged" }.into());
                    row.extend(v.theta_free.iter().map(|x| num(*x)));
                }
                Err(_) => {
                    row.push("failed".into());
                    row.extend(names.iter().map(|_| String::new()));
                }
            }
            match &r.curve_rmse {
                Some(c) => row.extend(c.iter().map(|x| num(*x))),
                None => row.extend((0..d).map(|_| String::new())),
            }
            row.push(v.as_ref().map(|v| num(v.estimate.criterion_value)).unwrap_or_default());
            writeln!(out, "{}", row.join(","))?;
        }
    }
    Ok(())
}
