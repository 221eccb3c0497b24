//! Plain-text file formats.
//!
//! * density: CSV with header `x,value` (or `x,y,value`, `x,y,z,value`),
//!   one row per grid node, nodes forming a full uniform tensor grid;
//! * plan: JSON `{"n": N, "dim": d, "atoms": [{"x": [[..], ..], "w": w}]}`;
//! * sweep: CSV `eta,eps_opt,e_ot,trial_total,gap,assembled_C`;
//! * reports: JSON objects wrapped in [`Report`].

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::grid::{Grid, GridDensity, MassConvention};
use crate::plan::{Atom, AtomicPlan};
use crate::semiclassics::Sweep;
use crate::{Error, Result};

/// Version stamped into every report.
pub const SCHEMA_VERSION: u32 = 1;

const SPACING_RTOL: f64 = 1e-9;

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line: line as usize,
        message: message.into(),
    }
}

/// Reads a density table and returns it under `convention`.
pub fn read_density_csv(reader: impl Read, convention: MassConvention) -> Result<GridDensity> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let dim = names.len().saturating_sub(1);
    let expected: &[&str] = match dim {
        1 => &["x", "value"],
        2 => &["x", "y", "value"],
        3 => &["x", "y", "z", "value"],
        _ => &[],
    };
    if names != expected {
        return Err(parse_err(
            1,
            format!("header must be `x,value` (or with y, z columns), found `{}`", names.join(",")),
        ));
    }

    let mut rows: Vec<(u64, Vec<f64>, f64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let mut nums = Vec::with_capacity(dim + 1);
        for (k, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("column `{}`: `{field}` is not a number", names[k])))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column `{}`: non-finite value", names[k])));
            }
            nums.push(v);
        }
        let value = nums.pop().unwrap_or(0.0);
        if value < 0.0 {
            return Err(parse_err(line, format!("negative density {value}")));
        }
        rows.push((line, nums, value));
    }
    if rows.is_empty() {
        return Err(Error::EmptyMeasure);
    }

    // per-axis coordinates, deduplicated by bit pattern after sorting
    let mut axes: Vec<Vec<f64>> = vec![Vec::new(); dim];
    for (_, x, _) in &rows {
        for (a, v) in x.iter().enumerate() {
            axes[a].push(*v);
        }
    }
    for ax in axes.iter_mut() {
        ax.sort_by(f64::total_cmp);
        ax.dedup();
    }
    let points = axes[0].len();
    if axes.iter().any(|a| a.len() != points) || points < 2 {
        return Err(Error::InvalidGrid("nodes do not form a square tensor grid with at least 2 points per axis".into()));
    }
    let spacing = (axes[0][points - 1] - axes[0][0]) / (points - 1) as f64;
    for ax in &axes {
        for (i, v) in ax.iter().enumerate() {
            let expected = ax[0] + i as f64 * spacing;
            if (v - expected).abs() > SPACING_RTOL * spacing * (1.0 + i as f64) {
                return Err(Error::InvalidGrid(format!("coordinate {v} breaks the uniform spacing {spacing}")));
            }
        }
    }
    let origin: Vec<f64> = axes.iter().map(|a| a[0]).collect();
    let grid = Grid::new(origin, spacing, points)?;
    let mut values = vec![f64::NAN; grid.len()];
    for (line, x, v) in rows {
        let node = grid.locate(&x).map_err(|_| parse_err(line, "coordinate is not a grid node"))?;
        if !values[node].is_nan() {
            return Err(parse_err(line, "duplicate node"));
        }
        values[node] = v;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidGrid(format!(
            "{} grid nodes have no row",
            values.iter().filter(|v| v.is_nan()).count()
        )));
    }
    GridDensity::with_convention(grid, values, convention)
}

/// Writes `x[,y,z],value` rows in node order.
pub fn write_density_csv(mut writer: impl Write, rho: &GridDensity) -> Result<()> {
    let grid = rho.grid();
    let names = ["x", "y", "z"];
    let mut header: Vec<&str> = names[..grid.dim().min(3)].to_vec();
    header.push("value");
    writeln!(writer, "{}", header.join(","))?;
    for (i, v) in rho.values().iter().enumerate() {
        let coords: Vec<String> = grid.node(i).iter().map(|c| c.to_string()).collect();
        writeln!(writer, "{},{}", coords.join(","), v)?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct PlanFile {
    n: usize,
    dim: usize,
    atoms: Vec<Atom>,
}

/// Parses and validates a plan file.
pub fn read_plan_json(reader: impl Read) -> Result<AtomicPlan> {
    let file: PlanFile = serde_json::from_reader(reader)?;
    AtomicPlan::new(file.n, file.dim, file.atoms)
}

pub fn plan_to_json(plan: &AtomicPlan) -> Result<String> {
    let file = PlanFile {
        n: plan.n,
        dim: plan.dim,
        atoms: plan.atoms.clone(),
    };
    Ok(serde_json::to_string_pretty(&file)? + "\n")
}

pub fn write_plan_json(mut writer: impl Write, plan: &AtomicPlan) -> Result<()> {
    writer.write_all(plan_to_json(plan)?.as_bytes())?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per η; failed rows leave the numeric fields empty.
pub fn write_sweep_csv(mut writer: impl Write, sweep: &Sweep) -> Result<()> {
    writeln!(writer, "eta,eps_opt,e_ot,trial_total,gap,assembled_C")?;
    for r in &sweep.records {
        writeln!(
            writer,
            "{},{},{},{},{},{}",
            r.eta,
            opt(r.eps_opt),
            sweep.e_ot,
            opt(r.trial_total),
            opt(r.gap),
            opt(r.assembled_constant)
        )?;
    }
    Ok(())
}

/// Envelope shared by every report.
#[derive(Clone, Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub schema_version: u32,
    pub command: String,
    /// Echo of the effective configuration.
    pub config: BTreeMap<String, serde_json::Value>,
    pub result: T,
    pub notes: Vec<String>,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: &str, config: BTreeMap<String, serde_json::Value>, result: T) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config,
            result,
            notes: Vec::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    /// Pretty JSON with a trailing newline; key order is fixed, so equal
    /// inputs give identical bytes.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn density_roundtrip() {
        let rho = fixtures::sixteen_site_density().unwrap();
        let mut buf = Vec::new();
        write_density_csv(&mut buf, &rho).unwrap();
        let back = read_density_csv(buf.as_slice(), MassConvention::Probability).unwrap();
        assert_eq!(back.grid().len(), 16);
        assert!(back.l1_distance(&rho) < 1e-14);
    }

    #[test]
    fn two_dimensional_density() {
        let text = "x,y,value\n0,0,0.25\n1,0,0.25\n0,1,0.25\n1,1,0.25\n";
        let rho = read_density_csv(text.as_bytes(), MassConvention::Probability).unwrap();
        assert_eq!(rho.grid().dim(), 2);
        assert!((rho.mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn particle_number_convention() {
        let text = "x,value\n0,1\n1,1\n";
        let rho = read_density_csv(text.as_bytes(), MassConvention::ParticleNumber(2)).unwrap();
        let p = rho.to_probability();
        assert!((p.mass() - 1.0).abs() < 1e-15);
        assert!(read_density_csv(text.as_bytes(), MassConvention::Probability).is_err());
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let bad_number = "x,value\n0,0.5\n1,abc\n";
        match read_density_csv(bad_number.as_bytes(), MassConvention::Probability) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let short = "x,value\n0,0.5\n1\n";
        match read_density_csv(short.as_bytes(), MassConvention::Probability) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let negative = "x,value\n0,0.5\n1,-1\n2,1.5\n";
        assert!(matches!(
            read_density_csv(negative.as_bytes(), MassConvention::Probability),
            Err(Error::Parse { line: 3, .. })
        ));
        let header = "pos,value\n0,1\n";
        assert!(matches!(
            read_density_csv(header.as_bytes(), MassConvention::Probability),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn nonuniform_grid_rejected() {
        let text = "x,value\n0,0.25\n1,0.25\n3,0.5\n";
        assert!(matches!(
            read_density_csv(text.as_bytes(), MassConvention::Probability),
            Err(Error::InvalidGrid(_))
        ));
    }

    #[test]
    fn plan_roundtrip() {
        let plan = fixtures::three_points().unwrap().plan;
        let text = plan_to_json(&plan).unwrap();
        assert!(text.contains("\"w\""));
        let back = read_plan_json(text.as_bytes()).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn plan_validation() {
        let text = r#"{"n": 2, "dim": 1, "atoms": [{"x": [[0.0], [1.0]], "w": 0.4}]}"#;
        assert!(read_plan_json(text.as_bytes()).is_err());
    }

    #[test]
    fn report_has_schema_version() {
        let r = Report::new("selftest", BTreeMap::new(), 1.5).with_note("d = 1");
        let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["result"], 1.5);
    }
}
