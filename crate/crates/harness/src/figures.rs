//! Figure-data CSVs: one file per plot, columns `x, series, y mean, y std`.
//!
//! These files are the whole interface to the plotting script; it reads
//! them and nothing else.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use cotrack::schemes::SchemeKind;

use crate::error::{Error, Result};
use crate::run::AggregateRow;
use crate::table::{sig6, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Figure {
    EnergyVsInterval,
    ErrorVsInterval,
    ErrorVsEnergyPeriodic,
    ErrorVsEnergyDynamic,
}

impl Figure {
    pub const ALL: [Figure; 4] = [
        Figure::EnergyVsInterval,
        Figure::ErrorVsInterval,
        Figure::ErrorVsEnergyPeriodic,
        Figure::ErrorVsEnergyDynamic,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Figure::EnergyVsInterval => "energy_vs_interval",
            Figure::ErrorVsInterval => "error_vs_interval",
            Figure::ErrorVsEnergyPeriodic => "error_vs_energy_periodic",
            Figure::ErrorVsEnergyDynamic => "error_vs_energy_dynamic",
        }
    }

    pub fn is_dynamic(self) -> bool {
        self == Figure::ErrorVsEnergyDynamic
    }

    pub fn header(self) -> &'static str {
        match self {
            Figure::EnergyVsInterval => "interval_s,scheme,mean_energy_j,std_energy_j",
            Figure::ErrorVsInterval => "interval_s,scheme,mean_error_m,std_error_m",
            Figure::ErrorVsEnergyPeriodic => "mean_energy_j,scheme,mean_error_m,std_error_m,interval_s",
            Figure::ErrorVsEnergyDynamic => "mean_energy_j,scheme,mean_error_m,std_error_m,limit_m",
        }
    }

    fn line(self, r: &AggregateRow) -> String {
        let s = r.scheme.name();
        match self {
            Figure::EnergyVsInterval => {
                format!(
                    "{},{s},{},{}",
                    sig6(r.sweep_value),
                    sig6(r.mean_energy_j),
                    sig6(r.std_energy_j)
                )
            }
            Figure::ErrorVsInterval => {
                format!(
                    "{},{s},{},{}",
                    sig6(r.sweep_value),
                    sig6(r.mean_error_m),
                    sig6(r.std_error_m)
                )
            }
            Figure::ErrorVsEnergyPeriodic | Figure::ErrorVsEnergyDynamic => format!(
                "{},{s},{},{},{}",
                sig6(r.mean_energy_j),
                sig6(r.mean_error_m),
                sig6(r.std_error_m),
                sig6(r.sweep_value)
            ),
        }
    }
}

/// CSV text for `figure`. Every scheme of the figure's category must have a
/// row at every sweep value any of them has.
pub fn figure_data(figure: Figure, aggregates: &[AggregateRow]) -> Result<String> {
    let mut rows: Vec<&AggregateRow> = aggregates
        .iter()
        .filter(|r| r.scheme.is_dynamic() == figure.is_dynamic())
        .collect();
    if rows.is_empty() {
        let category = if figure.is_dynamic() { "dynamic" } else { "periodic" };
        return Err(Error::MissingData {
            figure: figure.id(),
            missing: format!("all {category} aggregates"),
        });
    }
    rows.sort_by(|a, b| a.scheme.cmp(&b.scheme).then(a.sweep_value.total_cmp(&b.sweep_value)));
    let schemes: BTreeSet<SchemeKind> = rows.iter().map(|r| r.scheme).collect();
    let mut values: Vec<f64> = rows.iter().map(|r| r.sweep_value).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut missing = Vec::new();
    for s in &schemes {
        for v in &values {
            if !rows.iter().any(|r| r.scheme == *s && r.sweep_value == *v) {
                missing.push(format!("{s} at {}", sig6(*v)));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingData {
            figure: figure.id(),
            missing: missing.join(", "),
        });
    }
    let mut out = String::from(figure.header());
    out.push('\n');
    for r in rows {
        out.push_str(&figure.line(r));
        out.push('\n');
    }
    Ok(out)
}

/// Writes `<dir>/<figure id>.csv` for each requested figure.
pub fn emit_figure_data(aggregates: &[AggregateRow], figures: &[Figure], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for &f in figures {
        let text = figure_data(f, aggregates)?;
        let path = dir.join(format!("{}.csv", f.id()));
        write_atomic(&path, text.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(scheme: SchemeKind, v: f64) -> AggregateRow {
        AggregateRow {
            scheme,
            sweep_value: v,
            mean_energy_j: 100.0 / v,
            std_energy_j: 1.0,
            mean_error_m: v,
            std_error_m: 2.0,
            mean_fixes: 1.0,
            mean_clusters: 0.0,
            reps: 2,
        }
    }

    fn periodic_grid() -> Vec<AggregateRow> {
        let mut rows = Vec::new();
        for k in SchemeKind::PERIODIC {
            for i in 1..=10 {
                rows.push(row(k, 10.0 * i as f64));
            }
        }
        rows
    }

    #[test]
    fn periodic_figure_has_one_row_per_cell() {
        let text = figure_data(Figure::ErrorVsInterval, &periodic_grid()).unwrap();
        assert_eq!(text.lines().count(), 1 + 40);
        assert!(text.starts_with("interval_s,scheme,mean_error_m,std_error_m\n10,individual,10,2\n"));
    }

    #[test]
    fn missing_dynamic_category_is_named() {
        let err = figure_data(Figure::ErrorVsEnergyDynamic, &periodic_grid()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("dynamic"), "{msg}");
        assert!(msg.contains("error_vs_energy_dynamic"), "{msg}");
    }

    #[test]
    fn missing_cell_is_named() {
        let mut rows = periodic_grid();
        rows.retain(|r| !(r.scheme == SchemeKind::ClusterCkf && r.sweep_value == 30.0));
        let msg = figure_data(Figure::EnergyVsInterval, &rows).unwrap_err().to_string();
        assert!(msg.contains("cluster_ckf at 30"), "{msg}");
    }

    #[test]
    fn energy_error_pairs_share_a_row() {
        let text = figure_data(Figure::ErrorVsEnergyPeriodic, &periodic_grid()).unwrap();
        assert!(text.lines().any(|l| l == "2.5,cluster_standard,40,2,40"));
    }
}
