//! Parameter sweeps: the cartesian product of named axes over a base
//! scenario, repeated with derived seeds and executed in parallel.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::builtin::builtin_scenario_toml;
use super::scenario::{apply_overrides, set_path, ScenarioSpec};
use crate::cc::CeKind;
use crate::error::{LabError, Result};
use crate::metrics::{bandwidth_share, flow_metrics, harm_from_goodput, FlowMetrics, ShareReport};
use crate::netsim;

pub const DEFAULT_MAX_RUNS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    /// Column label; defaults to the path.
    #[serde(default)]
    pub name: Option<String>,
    /// Dotted scenario path the values are written to.
    pub path: String,
    pub values: Vec<toml::Value>,
}

impl Axis {
    pub fn label(&self) -> &str {
        self.name.as_deref().unwrap_or(&self.path)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    base: Option<toml::Value>,
    #[serde(default)]
    base_builtin: Option<String>,
    #[serde(default)]
    repetitions: Option<u32>,
    #[serde(default)]
    max_runs: Option<usize>,
    #[serde(default)]
    harm_group: Option<usize>,
    #[serde(default)]
    axes: Vec<Axis>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub name: String,
    /// Base scenario as a TOML table; axis values are written into it.
    pub base: toml::Value,
    pub axes: Vec<Axis>,
    pub repetitions: u32,
    pub max_runs: usize,
    /// Flow group whose throughput harm is measured against a run holding
    /// that group alone.
    pub harm_group: Option<usize>,
}

/// One (axis point, repetition) of a sweep, ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub index: usize,
    pub point: Vec<(String, toml::Value)>,
    pub repetition: u32,
    pub scenario: ScenarioSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub index: usize,
    pub point: Vec<(String, String)>,
    pub repetition: u32,
    pub seed: u64,
    pub share: ShareReport,
    /// Per-flow metrics with the sampled series dropped.
    pub flows: Vec<FlowMetrics>,
}

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: SweepFile = toml::from_str(text).map_err(|e| LabError::Config(e.message().to_string()))?;
        let base = match (file.base, file.base_builtin) {
            (Some(_), Some(_)) => {
                return Err(LabError::Validation(
                    "sweep: give either base or base_builtin, not both".into(),
                ))
            }
            (Some(v), None) => v,
            (None, Some(name)) => toml::from_str(builtin_scenario_toml(&name)?)
                .map_err(|e| LabError::Config(e.message().to_string()))?,
            (None, None) => return Err(LabError::Validation("sweep: missing base scenario".into())),
        };
        let base_spec = ScenarioSpec::from_value(base.clone())?;
        let spec = SweepSpec {
            name: file.name.unwrap_or_else(|| base_spec.name.clone()),
            base,
            axes: file.axes,
            repetitions: file.repetitions.unwrap_or(base_spec.repetitions),
            max_runs: file.max_runs.unwrap_or(DEFAULT_MAX_RUNS),
            harm_group: file.harm_group,
        };
        spec.check_shape()?;
        Ok(spec)
    }

    fn check_shape(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(LabError::Validation("sweep: repetitions must be at least 1".into()));
        }
        for a in &self.axes {
            if a.values.is_empty() {
                return Err(LabError::Validation(format!("sweep: axis '{}' has no values", a.label())));
            }
        }
        Ok(())
    }

    pub fn base_seed(&self) -> Result<u64> {
        Ok(ScenarioSpec::from_value(self.base.clone())?.seed)
    }

    /// Applies dotted-path overrides to the base scenario.
    pub fn override_base(&mut self, overrides: &[(String, String)]) -> Result<()> {
        apply_overrides(&mut self.base, overrides)?;
        ScenarioSpec::from_value(self.base.clone())?;
        Ok(())
    }

    /// Extends the buffer axis by doubling up to `max_bdp`.
    pub fn extend_buffer_axis(&mut self, max_bdp: f64) {
        for a in self.axes.iter_mut().filter(|a| a.path == "buffer_bdp") {
            let mut last = a.values.iter().filter_map(as_f64).fold(0.0, f64::max);
            while last > 0.0 && last * 2.0 <= max_bdp {
                last *= 2.0;
                a.values.push(toml::Value::Integer(last as i64));
            }
        }
    }

    pub fn run_count(&self) -> usize {
        self.axes
            .iter()
            .map(|a| a.values.len())
            .product::<usize>()
            .saturating_mul(self.repetitions as usize)
    }

    /// Expands and validates every cell. Fails before anything runs if the
    /// product exceeds the cap or any cell is invalid.
    pub fn cells(&self) -> Result<Vec<SweepCell>> {
        let size = self.run_count();
        if size > self.max_runs {
            return Err(LabError::SweepTooLarge {
                size,
                cap: self.max_runs,
            });
        }
        let base_seed = self.base_seed()?;
        let mut points: Vec<Vec<(String, toml::Value)>> = vec![Vec::new()];
        for axis in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((axis.path.clone(), v.clone()));
                        q
                    })
                })
                .collect();
        }
        let mut cells = Vec::with_capacity(size);
        for point in points {
            let mut value = self.base.clone();
            for (path, v) in &point {
                set_path(&mut value, path, v.clone())?;
            }
            let labelled: Vec<(String, toml::Value)> = self
                .axes
                .iter()
                .zip(&point)
                .map(|(a, (_, v))| (a.label().to_string(), v.clone()))
                .collect();
            let in_cell = |e: LabError| match e {
                LabError::Validation(m) => {
                    LabError::Validation(format!("sweep cell {}: {m}", render_point(&labelled)))
                }
                other => other,
            };
            for rep in 0..self.repetitions {
                let mut scenario = ScenarioSpec::from_value(value.clone()).map_err(in_cell)?;
                scenario.seed = derive_seed(base_seed, &labelled, rep);
                scenario.validate().map_err(in_cell)?;
                if let Some(g) = self.harm_group {
                    if g >= scenario.flows.len() {
                        return Err(LabError::Validation(format!(
                            "sweep: harm_group {g} but the scenario has {} flow groups",
                            scenario.flows.len()
                        )));
                    }
                }
                cells.push(SweepCell {
                    index: cells.len(),
                    point: labelled.clone(),
                    repetition: rep,
                    scenario,
                });
            }
        }
        Ok(cells)
    }
}

fn as_f64(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Integer(i) => Some(*i as f64),
        toml::Value::Float(f) => Some(*f),
        _ => None,
    }
}

fn render_point(point: &[(String, toml::Value)]) -> String {
    point
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// `base ⊕ first 8 bytes of sha256("k=v;…#rep")`.
pub fn derive_seed(base: u64, point: &[(String, toml::Value)], repetition: u32) -> u64 {
    let mut h = Sha256::new();
    for (k, v) in point {
        h.update(format!("{k}={v};").as_bytes());
    }
    h.update(format!("#{repetition}").as_bytes());
    let digest = h.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    base ^ u64::from_le_bytes(head)
}

fn group_ids(scenario: &ScenarioSpec, group: usize) -> std::ops::Range<u32> {
    let start: u32 = scenario.flows[..group].iter().map(|g| g.count).sum();
    start..start + scenario.flows[group].count
}

pub fn run_cell(cell: &SweepCell, harm_group: Option<usize>) -> Result<CellResult> {
    let trace = netsim::run(&cell.scenario)?;
    let mut share = bandwidth_share(&trace, None)?;
    let mut flows = flow_metrics(&trace);
    if let Some(g) = harm_group {
        let ids = group_ids(&cell.scenario, g);
        let competing: f64 = flows
            .iter()
            .filter(|f| ids.contains(&f.flow_id))
            .map(|f| f.total_goodput)
            .sum();
        let mut solo = cell.scenario.clone();
        solo.flows = vec![cell.scenario.flows[g].clone()];
        let solo_goodput: f64 = flow_metrics(&netsim::run(&solo)?)
            .iter()
            .map(|f| f.total_goodput)
            .sum();
        share.harm = Some(harm_from_goodput(solo_goodput, competing)?);
    }
    for f in &mut flows {
        f.goodput_series = Vec::new();
        f.srtt_series = Vec::new();
    }
    Ok(CellResult {
        index: cell.index,
        point: cell.point.iter().map(|(k, v)| (k.clone(), v.to_string())).collect(),
        repetition: cell.repetition,
        seed: cell.scenario.seed,
        share,
        flows,
    })
}

/// Runs every cell, in parallel, and returns results in cell order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<CellResult>> {
    let cells = spec.cells()?;
    cells
        .par_iter()
        .map(|c| run_cell(c, spec.harm_group))
        .collect()
}

/// Long-format table: one row per (cell, flow).
pub fn write_results_csv<W: Write>(spec: &SweepSpec, results: &[CellResult], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = vec!["cell".into(), "repetition".into(), "seed".into()];
    header.extend(spec.axes.iter().map(|a| a.label().to_string()));
    header.extend(
        [
            "flow_id",
            "algo",
            "bytes",
            "fraction",
            "goodput_mbps",
            "jain_index",
            "harm",
        ]
        .map(String::from),
    );
    header.extend(CeKind::ALL.iter().map(|k| k.as_str().to_string()));
    out.write_record(&header).map_err(csv_err)?;
    for r in results {
        let metrics: BTreeMap<u32, &FlowMetrics> = r.flows.iter().map(|f| (f.flow_id, f)).collect();
        for share in &r.share.per_flow {
            let mut row = vec![r.index.to_string(), r.repetition.to_string(), r.seed.to_string()];
            row.extend(r.point.iter().map(|(_, v)| v.clone()));
            let m = metrics[&share.flow_id];
            row.push(share.flow_id.to_string());
            row.push(share.algo.to_string());
            row.push(share.bytes.to_string());
            row.push(format!("{:.6}", share.fraction));
            row.push(format!("{:.6}", m.total_goodput));
            row.push(format!("{:.6}", r.share.jain_index));
            row.push(r.share.harm.map(|h| format!("{h:.6}")).unwrap_or_default());
            row.extend(CeKind::ALL.iter().map(|k| m.ce_counts[k].to_string()));
            out.write_record(&row).map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> LabError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => LabError::Io(io),
        other => LabError::Io(std::io::Error::other(format!("{other:?}"))),
    }
}
