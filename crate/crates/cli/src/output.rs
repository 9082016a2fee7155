use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use heisenberg_minimal::{GridDomain, GridFunction};
use serde::Serialize;

use crate::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct GridInfo {
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub interior_nodes: usize,
    pub boundary_nodes: usize,
}

impl GridInfo {
    pub fn of(d: &GridDomain) -> Self {
        Self {
            h: d.h(),
            nx: d.nx(),
            ny: d.ny(),
            x0: d.x0(),
            y0: d.y0(),
            interior_nodes: d.interior_nodes().len(),
            boundary_nodes: d.boundary_nodes().len(),
        }
    }
}

/// Record of one invocation, written as `manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub grids: Vec<GridInfo>,
    pub outputs: Vec<PathBuf>,
    pub exit_code: i32,
    pub wall_clock_seconds: f64,
}

/// Output directory plus bookkeeping for the manifest.
pub struct Run {
    dir: PathBuf,
    command: String,
    pub config: serde_json::Value,
    grids: Vec<GridInfo>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl Run {
    pub fn new(dir: &Path, command: &str, config: serde_json::Value) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.into(),
            config,
            grids: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn grid(&mut self, d: &GridDomain) {
        self.grids.push(GridInfo::of(d));
    }

    /// Creates `name` in the output directory and records it.
    pub fn write(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut dyn Write) -> heisenberg_minimal::Result<()>,
    ) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        body(&mut w).map_err(|e| CliError::Input(e.to_string()))?;
        w.flush().map_err(|e| CliError::Input(e.to_string()))?;
        self.outputs.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
        self.write(name, |w| {
            writeln!(w, "{text}")?;
            Ok(())
        })
    }

    pub fn grid_function(&mut self, stem: &str, u: &GridFunction) -> Result<(), CliError> {
        self.write(&format!("{stem}.csv"), |w| u.write_csv(w))?;
        self.write(&format!("{stem}_mask.csv"), |w| u.domain().write_mask_csv(w))
    }

    pub fn finish(self, exit_code: i32) -> Result<(), CliError> {
        let path = self.dir.join("manifest.json");
        let mut outputs = self.outputs;
        outputs.push(path.clone());
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").into(),
            config: self.config,
            grids: self.grids,
            outputs,
            exit_code,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Input(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
    }
}

/// Long-format surface dump `x,y,u,branch` over the active nodes.
///
/// Angle-valued surfaces get one block per branch `u + 2 pi k a`.
pub fn write_branches(w: &mut dyn Write, u: &GridFunction, angle_coef: Option<f64>) -> heisenberg_minimal::Result<()> {
    writeln!(w, "x,y,u,branch")?;
    let branches: &[i32] = if angle_coef.is_some() { &[-1, 0, 1] } else { &[0] };
    let d = u.domain();
    for &k in branches {
        let shift = angle_coef.map_or(0.0, |a| 2.0 * std::f64::consts::PI * a * k as f64);
        for idx in 0..d.len() {
            if d.is_active(idx) {
                let (x, y) = d.coords(idx);
                writeln!(w, "{x:e},{y:e},{:e},{k}", u.value(idx) + shift)?;
            }
        }
    }
    Ok(())
}
