//! Weight-grid sweep harness: one training+evaluation pipeline invocation per
//! (beta_c, beta_s) cell, a tab-separated table, and trend verdicts computed
//! from the table alone.

use serde::{Deserialize, Serialize};

use super::{EvalReport, Representation};
use crate::data::Language;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub beta_c: f64,
    pub beta_s: f64,
    /// Failed cells carry the failure reason; the sweep continues.
    pub outcome: Result<EvalReport, String>,
}

/// Trend verdicts over the grid, each required to hold for every language:
/// (i) content EER non-decreasing in beta_c at every beta_s;
/// (ii) content EER non-increasing and speaker EER non-decreasing as beta_s
/// grows at every beta_c.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendVerdicts {
    pub content_eer_nondecreasing_in_beta_c: bool,
    pub beta_s_opposite_trends: bool,
    pub detail: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    /// One row per (beta_c, beta_s, representation, language):
    /// `beta_c beta_s repr language eer n_pos n_neg`, tab-separated. Failed
    /// cells emit a single row with `failed:<reason>` in the repr column.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("beta_c\tbeta_s\trepr\tlanguage\teer\tn_pos\tn_neg\n");
        for cell in &self.cells {
            match &cell.outcome {
                Ok(report) => out.push_str(&report.to_tsv()),
                Err(reason) => out.push_str(&format!(
                    "{}\t{}\tfailed:{}\t-\t-\t-\t-\n",
                    cell.beta_c,
                    cell.beta_s,
                    reason.replace(['\t', '\n'], " ")
                )),
            }
        }
        out
    }

    pub fn cell(&self, beta_c: f64, beta_s: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| {
            (c.beta_c - beta_c).abs() <= 1e-12 * beta_c.abs().max(1e-300)
                && (c.beta_s - beta_s).abs() <= 1e-12 * beta_s.abs().max(1e-300)
        })
    }
}

/// Parse the table back from its TSV form; verdicts recomputed from this
/// round-trip match the originals.
pub fn parse_sweep_tsv(text: &str) -> Result<SweepTable, String> {
    use std::collections::BTreeMap;
    let mut by_cell: BTreeMap<(u64, u64), SweepCell> = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(format!("line {}: expected 7 fields", i + 1));
        }
        let beta_c: f64 = fields[0].parse().map_err(|e| format!("line {}: {e}", i + 1))?;
        let beta_s: f64 = fields[1].parse().map_err(|e| format!("line {}: {e}", i + 1))?;
        let key = (beta_c.to_bits(), beta_s.to_bits());
        if let Some(reason) = fields[2].strip_prefix("failed:") {
            by_cell.insert(
                key,
                SweepCell {
                    beta_c,
                    beta_s,
                    outcome: Err(reason.to_string()),
                },
            );
            continue;
        }
        let repr = match fields[2] {
            "z_c" => Representation::Content,
            "z_s" => Representation::Speaker,
            other => return Err(format!("line {}: unknown representation {other}", i + 1)),
        };
        let language = Language::parse(fields[3])
            .ok_or_else(|| format!("line {}: unknown language {}", i + 1, fields[3]))?;
        let eer: f64 = fields[4].parse().map_err(|e| format!("line {}: {e}", i + 1))?;
        let n_pos: usize = fields[5].parse().map_err(|e| format!("line {}: {e}", i + 1))?;
        let n_neg: usize = fields[6].parse().map_err(|e| format!("line {}: {e}", i + 1))?;
        let entry = by_cell.entry(key).or_insert_with(|| SweepCell {
            beta_c,
            beta_s,
            outcome: Ok(EvalReport {
                beta_c,
                beta_s,
                cells: Vec::new(),
            }),
        });
        if let Ok(report) = &mut entry.outcome {
            report.cells.push(super::EerCell {
                representation: repr,
                language,
                eer,
                n_pos,
                n_neg,
            });
        }
    }
    Ok(SweepTable {
        cells: by_cell.into_values().collect(),
    })
}

/// Run the pipeline for every grid cell (beta_c outer, beta_s inner). A cell
/// failure is recorded and the sweep continues.
pub fn sweep<P>(grid_beta_c: &[f64], grid_beta_s: &[f64], mut pipeline: P) -> SweepTable
where
    P: FnMut(f64, f64) -> Result<EvalReport, String>,
{
    let mut cells = Vec::new();
    for &bc in grid_beta_c {
        for &bs in grid_beta_s {
            let outcome = pipeline(bc, bs);
            cells.push(SweepCell {
                beta_c: bc,
                beta_s: bs,
                outcome,
            });
        }
    }
    SweepTable { cells }
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    v
}

/// Compute the trend verdicts from the emitted table alone. Comparisons skip
/// failed cells; a verdict over zero comparisons is vacuously true.
pub fn trend_verdicts(table: &SweepTable) -> TrendVerdicts {
    let grid_c = sorted_unique(table.cells.iter().map(|c| c.beta_c).collect());
    let grid_s = sorted_unique(table.cells.iter().map(|c| c.beta_s).collect());
    let eer = |bc: f64, bs: f64, repr: Representation, lang: Language| -> Option<f64> {
        let cell = table.cell(bc, bs)?;
        let report = cell.outcome.as_ref().ok()?;
        report.cell(repr, lang).map(|c| c.eer)
    };

    let mut detail = Vec::new();
    let mut zc_in_bc = true;
    for lang in Language::both() {
        for &bs in &grid_s {
            for w in grid_c.windows(2) {
                if let (Some(lo), Some(hi)) = (
                    eer(w[0], bs, Representation::Content, lang),
                    eer(w[1], bs, Representation::Content, lang),
                ) {
                    let ok = hi >= lo - 1e-9;
                    if !ok {
                        detail.push(format!(
                            "z_c({lang}) at beta_s={bs}: eer fell from {lo:.4} to {hi:.4} as beta_c rose {} -> {}",
                            w[0], w[1]
                        ));
                    }
                    zc_in_bc &= ok;
                }
            }
        }
    }

    let mut opposite = true;
    for lang in Language::both() {
        for &bc in &grid_c {
            for w in grid_s.windows(2) {
                if let (Some(lo), Some(hi)) = (
                    eer(bc, w[0], Representation::Content, lang),
                    eer(bc, w[1], Representation::Content, lang),
                ) {
                    let ok = hi <= lo + 1e-9;
                    if !ok {
                        detail.push(format!(
                            "z_c({lang}) at beta_c={bc}: eer rose from {lo:.4} to {hi:.4} as beta_s rose {} -> {}",
                            w[0], w[1]
                        ));
                    }
                    opposite &= ok;
                }
                if let (Some(lo), Some(hi)) = (
                    eer(bc, w[0], Representation::Speaker, lang),
                    eer(bc, w[1], Representation::Speaker, lang),
                ) {
                    let ok = hi >= lo - 1e-9;
                    if !ok {
                        detail.push(format!(
                            "z_s({lang}) at beta_c={bc}: eer fell from {lo:.4} to {hi:.4} as beta_s rose {} -> {}",
                            w[0], w[1]
                        ));
                    }
                    opposite &= ok;
                }
            }
        }
    }

    TrendVerdicts {
        content_eer_nondecreasing_in_beta_c: zc_in_bc,
        beta_s_opposite_trends: opposite,
        detail,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::EerCell;

    fn fake_report(beta_c: f64, beta_s: f64, zc: f64, zs: f64) -> EvalReport {
        let mut cells = Vec::new();
        for lang in Language::both() {
            cells.push(EerCell {
                representation: Representation::Content,
                language: lang,
                eer: zc,
                n_pos: 96,
                n_neg: 480,
            });
            cells.push(EerCell {
                representation: Representation::Speaker,
                language: lang,
                eer: zs,
                n_pos: 96,
                n_neg: 480,
            });
        }
        EvalReport {
            beta_c,
            beta_s,
            cells,
        }
    }

    #[test]
    fn degenerate_single_cell_grid() {
        let table = sweep(&[1e-2], &[1e-4], |bc, bs| Ok(fake_report(bc, bs, 0.4, 0.1)));
        assert_eq!(table.cells.len(), 1);
        let v = trend_verdicts(&table);
        assert!(v.content_eer_nondecreasing_in_beta_c);
        assert!(v.beta_s_opposite_trends);
    }

    #[test]
    fn monotone_table_passes_violations_detected() {
        // zc grows with beta_c and falls with beta_s; zs grows with beta_s
        let good = sweep(&[1e-3, 1e-2], &[1e-5, 1e-4, 1e-3], |bc, bs| {
            let zc = 0.2 + 10.0 * bc - 20.0 * bs;
            let zs = 0.05 + 100.0 * bs;
            Ok(fake_report(bc, bs, zc, zs))
        });
        let v = trend_verdicts(&good);
        assert!(v.content_eer_nondecreasing_in_beta_c, "{:?}", v.detail);
        assert!(v.beta_s_opposite_trends, "{:?}", v.detail);

        // violate (i): zc falls with beta_c
        let bad = sweep(&[1e-3, 1e-2], &[1e-5, 1e-4], |bc, bs| {
            Ok(fake_report(bc, bs, 0.4 - 10.0 * bc, 0.1))
        });
        let v = trend_verdicts(&bad);
        assert!(!v.content_eer_nondecreasing_in_beta_c);
        assert!(!v.detail.is_empty());
    }

    #[test]
    fn failed_cells_skipped_not_fatal() {
        let table = sweep(&[1e-3, 1e-2], &[1e-4], |bc, bs| {
            if bc < 5e-3 {
                Err("training diverged".into())
            } else {
                Ok(fake_report(bc, bs, 0.4, 0.1))
            }
        });
        assert_eq!(table.cells.len(), 2);
        assert!(table.cells[0].outcome.is_err());
        let v = trend_verdicts(&table);
        // only one usable cell left: vacuously true
        assert!(v.content_eer_nondecreasing_in_beta_c);
    }

    #[test]
    fn verdicts_reproducible_from_emitted_tsv() {
        let table = sweep(&[1e-3, 1e-2], &[1e-5, 1e-4, 1e-3], |bc, bs| {
            if (bc, bs) == (1e-3, 1e-4) {
                return Err("cell failed".into());
            }
            let zc = 0.2 + 10.0 * bc - 20.0 * bs;
            let zs = 0.05 + 100.0 * bs;
            Ok(fake_report(bc, bs, zc, zs))
        });
        let tsv = table.to_tsv();
        let parsed = parse_sweep_tsv(&tsv).unwrap();
        let v1 = trend_verdicts(&table);
        let v2 = trend_verdicts(&parsed);
        assert_eq!(
            v1.content_eer_nondecreasing_in_beta_c,
            v2.content_eer_nondecreasing_in_beta_c
        );
        assert_eq!(v1.beta_s_opposite_trends, v2.beta_s_opposite_trends);
    }
}
