use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{score_fold, FoldReport, UerCounts};
use crate::corpus::Corpus;
use crate::data::{make_splits, Condition, DatasetManifest, Device, Scenario};
use crate::error::{Error, Result};
use crate::hierarchy::{train_bundle, HyperParams, Scheme};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportOptions {
    pub schemes: Vec<Scheme>,
    pub scenarios: Vec<Scenario>,
    pub conditions: Vec<Condition>,
    pub ratio: f64,
    pub seed: u64,
    pub hyper: HyperParams,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            schemes: Scheme::ALL.to_vec(),
            scenarios: Scenario::ALL.to_vec(),
            conditions: vec![Condition::Heard, Condition::Imagined],
            ratio: 0.7,
            seed: 0,
            hyper: HyperParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CellStatus {
    Ok,
    /// Split preconditions not met; the run continues.
    Absent(String),
    /// Training or scoring failed.
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub device: Device,
    pub condition: Condition,
    pub scenario: Scenario,
    pub scheme: Scheme,
    pub status: CellStatus,
    /// Pooled over folds.
    pub counts: Option<UerCounts>,
    pub folds: Vec<FoldReport>,
}

impl ReportCell {
    pub fn accuracy(&self) -> Option<f64> {
        self.counts.map(|c| c.accuracy())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub cells: Vec<ReportCell>,
    pub schemes: Vec<Scheme>,
}

/// Published heard-condition accuracies (percent), for side-by-side display.
pub fn published_reference(device: Device, scenario: Scenario, scheme: Scheme) -> Option<f64> {
    let row: [f64; 12] = match device {
        Device::Muse => [40.2, 43.4, 41.7, 50.3, 38.1, 39.8, 41.8, 49.2, 23.4, 26.2, 24.3, 28.2],
        Device::Egi => [43.8, 45.6, 45.8, 49.4, 42.6, 43.1, 42.4, 47.8, 27.3, 28.2, 30.8, 32.6],
        Device::EgiReduced => [37.9, 38.2, 40.1, 42.3, 37.3, 36.4, 40.8, 42.9, 24.3, 24.3, 25.7, 28.8],
    };
    let block = match scenario {
        Scenario::IntraSession => 0,
        Scenario::InterSession => 4,
        Scenario::InterSubject => 8,
    };
    let col = match scheme {
        Scheme::Bl => 0,
        Scheme::Dns => 1,
        Scheme::Dns3 => 2,
        Scheme::Hc => 3,
    };
    Some(row[block + col])
}

/// Trains and scores every device × condition × scenario × scheme cell.
/// Cells whose split cannot be formed are marked absent.
pub fn scenario_report(manifest: &DatasetManifest, corpus: &Corpus, opts: &ReportOptions) -> Result<ScenarioReport> {
    opts.hyper.validate()?;
    let mut cells = Vec::new();
    for device in manifest.devices() {
        for &condition in &opts.conditions {
            let sub = manifest.with_device(device).with_condition(condition);
            for &scenario in &opts.scenarios {
                let split = make_splits(&sub, scenario, opts.ratio, opts.seed);
                let split = match split {
                    Ok(s) => s,
                    Err(e @ Error::InsufficientData(_)) => {
                        for &scheme in &opts.schemes {
                            cells.push(ReportCell {
                                device,
                                condition,
                                scenario,
                                scheme,
                                status: CellStatus::Absent(e.to_string()),
                                counts: None,
                                folds: Vec::new(),
                            });
                        }
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let jobs: Vec<(Scheme, usize)> =
                    opts.schemes.iter().flat_map(|&s| (0..split.folds.len()).map(move |f| (s, f))).collect();
                let results: Vec<Result<FoldReport>> = jobs
                    .par_iter()
                    .map(|&(scheme, f)| {
                        let fold = &split.folds[f];
                        let bundle = train_bundle(corpus, &fold.train, scheme, &opts.hyper)?;
                        score_fold(&bundle, &fold.name, &fold.test, corpus)
                    })
                    .collect();
                let mut by_scheme: BTreeMap<Scheme, Vec<Result<FoldReport>>> = BTreeMap::new();
                for ((scheme, _), r) in jobs.iter().zip(results) {
                    by_scheme.entry(*scheme).or_default().push(r);
                }
                for &scheme in &opts.schemes {
                    let results = by_scheme.remove(&scheme).unwrap_or_default();
                    let mut folds = Vec::new();
                    let mut status = CellStatus::Ok;
                    for r in results {
                        match r {
                            Ok(f) => folds.push(f),
                            Err(e) => {
                                warn!("{device}/{condition:?}/{scenario}/{scheme}: {e}");
                                status = match e {
                                    Error::InsufficientData(_) => CellStatus::Absent(e.to_string()),
                                    _ => CellStatus::Failed(e.to_string()),
                                };
                                folds.clear();
                                break;
                            }
                        }
                    }
                    let counts = (status == CellStatus::Ok).then(|| folds.iter().map(|f| f.counts).sum());
                    cells.push(ReportCell { device, condition, scenario, scheme, status, counts, folds });
                }
            }
        }
    }
    Ok(ScenarioReport { cells, schemes: opts.schemes.clone() })
}

impl ScenarioReport {
    pub fn has_failures(&self) -> bool {
        self.cells.iter().any(|c| matches!(c.status, CellStatus::Failed(_)))
    }

    pub fn cell(&self, device: Device, condition: Condition, scenario: Scenario, scheme: Scheme) -> Option<&ReportCell> {
        self.cells
            .iter()
            .find(|c| c.device == device && c.condition == condition && c.scenario == scenario && c.scheme == scheme)
    }

    /// One row per fold plus one pooled row per cell.
    pub fn to_columnar(&self) -> String {
        let mut out = String::from(
            "device\tcondition\tscenario\tscheme\tfold\tstatus\tn_ref\tn_ins\tn_del\tn_sub\taccuracy\tad_frame_accuracy\n",
        );
        for c in &self.cells {
            let status = match &c.status {
                CellStatus::Ok => "ok".to_string(),
                CellStatus::Absent(m) => format!("absent: {m}"),
                CellStatus::Failed(m) => format!("failed: {m}"),
            };
            let prefix = format!("{}\t{:?}\t{}\t{}", c.device, c.condition, c.scenario, c.scheme);
            let row = |out: &mut String, fold: &str, counts: Option<UerCounts>, ad: Option<f64>| {
                let (r, i, d, s, a) = match counts {
                    Some(k) => (
                        k.n_ref.to_string(),
                        k.n_ins.to_string(),
                        k.n_del.to_string(),
                        k.n_sub.to_string(),
                        format!("{:.6}", k.accuracy()),
                    ),
                    None => Default::default(),
                };
                let ad = ad.map(|v| format!("{v:.6}")).unwrap_or_default();
                writeln!(out, "{prefix}\t{fold}\t{status}\t{r}\t{i}\t{d}\t{s}\t{a}\t{ad}").unwrap();
            };
            for f in &c.folds {
                row(&mut out, &f.fold, Some(f.counts), f.ad_frame_accuracy);
            }
            row(&mut out, "pooled", c.counts, None);
        }
        out
    }

    /// Accuracy table (percent) with one column per scheme. With
    /// `annotate`, published heard-condition numbers follow each matching row.
    pub fn to_table(&self, annotate: bool) -> String {
        let mut rows: Vec<(Device, Condition, Scenario)> = Vec::new();
        for c in &self.cells {
            let k = (c.device, c.condition, c.scenario);
            if !rows.contains(&k) {
                rows.push(k);
            }
        }
        let mut out = format!("{:<12}{:<10}{:<14}", "device", "condition", "scenario");
        for s in &self.schemes {
            write!(out, "{:>8}", s.name()).unwrap();
        }
        out.push('\n');
        for (device, condition, scenario) in rows {
            write!(out, "{:<12}{:<10}{:<14}", device.name(), format!("{condition:?}"), scenario.to_string()).unwrap();
            for &s in &self.schemes {
                let v = self
                    .cell(device, condition, scenario, s)
                    .and_then(|c| c.accuracy())
                    .map(|a| format!("{:.1}", 100.0 * a))
                    .unwrap_or_else(|| "-".into());
                write!(out, "{v:>8}").unwrap();
            }
            out.push('\n');
            if annotate && condition == Condition::Heard {
                write!(out, "{:<12}{:<10}{:<14}", "  published", "", "").unwrap();
                for &s in &self.schemes {
                    let v = published_reference(device, scenario, s).map(|v| format!("{v:.1}")).unwrap_or_default();
                    write!(out, "{v:>8}").unwrap();
                }
                out.push('\n');
            }
        }
        out
    }
}
