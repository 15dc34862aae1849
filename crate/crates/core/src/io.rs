//! Plain CSV / JSON artifacts.
//!
//! Floating-point CSV fields are written with 17 significant digits
//! (`{:.16e}`), which round-trips every `f64`; rows are in row-major order
//! of the underlying arrays so repeated runs produce identical bytes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bridge::BridgeSolution;
use crate::diffusion::{DriftField, LocalCharacteristics, PathEnsemble};
use crate::error::{FkError, Result};
use crate::kernels::{KernelMatrix, KernelMethod, KernelSpec};
use crate::numerics::{interp_linear, make_uniform_grid, Grid, GridSpec};

/// Version string of this build, `git describe` style.
pub const VERSION: &str = env!("FKBRIDGE_VERSION");

/// 17 significant digits.
#[inline]
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Side information for a kernel matrix CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelSidecar {
    pub grid: GridSpec,
    pub s: f64,
    pub t: f64,
    pub method: KernelMethod,
    pub options: KernelSpec,
    pub potential: String,
    pub has_stderr: bool,
    pub values_file: String,
}

/// Writes `<stem>.csv` (`y_index,x_index,s,t,value[,stderr]`) and
/// `<stem>.json`; returns both paths.
pub fn write_kernel(dir: &Path, stem: &str, k: &KernelMatrix) -> Result<Vec<PathBuf>> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    let mut w = create(&csv_path)?;
    let s = fmt_f64(k.s);
    let t = fmt_f64(k.t);
    match &k.stderr {
        Some(_) => writeln!(w, "y_index,x_index,s,t,value,stderr")?,
        None => writeln!(w, "y_index,x_index,s,t,value")?,
    }
    for ((i, j), v) in k.values.indexed_iter() {
        match &k.stderr {
            Some(e) => writeln!(w, "{i},{j},{s},{t},{},{}", fmt_f64(*v), fmt_f64(e[[i, j]]))?,
            None => writeln!(w, "{i},{j},{s},{t},{}", fmt_f64(*v))?,
        }
    }
    w.flush()?;
    let sidecar = KernelSidecar {
        grid: k.grid.spec(),
        s: k.s,
        t: k.t,
        method: k.method,
        options: k.spec,
        potential: k.potential.clone(),
        has_stderr: k.stderr.is_some(),
        values_file: format!("{stem}.csv"),
    };
    write_json(&json_path, &sidecar)?;
    Ok(vec![csv_path, json_path])
}

/// Reads a kernel written by [`write_kernel`].
pub fn read_kernel(dir: &Path, stem: &str) -> Result<KernelMatrix> {
    let sidecar: KernelSidecar =
        serde_json::from_reader(File::open(dir.join(format!("{stem}.json")))?)?;
    let grid = make_uniform_grid(sidecar.grid.lo, sidecar.grid.hi, sidecar.grid.n)?;
    let n = grid.n();
    let mut values = Array2::zeros((n, n));
    let mut stderr = sidecar.has_stderr.then(|| Array2::zeros((n, n)));
    let mut seen = 0usize;
    let mut reader = csv::Reader::from_path(dir.join(&sidecar.values_file))?;
    for record in reader.records() {
        let record = record?;
        let field = |k: usize| -> Result<&str> {
            record
                .get(k)
                .ok_or_else(|| FkError::Serde(format!("kernel CSV row has no column {k}")))
        };
        let parse_idx = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| FkError::Serde(format!("bad index `{s}` in kernel CSV")))
        };
        let parse_val = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| FkError::Serde(format!("bad value `{s}` in kernel CSV")))
        };
        let i = parse_idx(field(0)?)?;
        let j = parse_idx(field(1)?)?;
        if i >= n || j >= n {
            return Err(FkError::Serde(format!("index ({i}, {j}) outside a {n}-point grid")));
        }
        values[[i, j]] = parse_val(field(4)?)?;
        if let Some(e) = stderr.as_mut() {
            e[[i, j]] = parse_val(field(5)?)?;
        }
        seen += 1;
    }
    if seen != n * n {
        return Err(FkError::Serde(format!("kernel CSV has {seen} rows, expected {}", n * n)));
    }
    Ok(KernelMatrix {
        grid,
        s: sidecar.s,
        t: sidecar.t,
        values,
        method: sidecar.method,
        stderr,
        spec: sidecar.options,
        potential: sidecar.potential,
    })
}

/// Writes `<stem>.json` (metadata and residual history) and
/// `<stem>_fields.csv` (`t,x,f,g,rho` over the time mesh, then the grid).
pub fn write_bridge(
    dir: &Path,
    stem: &str,
    sol: &BridgeSolution,
    extra: serde_json::Value,
) -> Result<Vec<PathBuf>> {
    let json_path = dir.join(format!("{stem}.json"));
    let csv_path = dir.join(format!("{stem}_fields.csv"));
    let meta = json!({
        "grid": sol.grid.spec(),
        "horizon": sol.horizon,
        "time_mesh": sol.time_mesh,
        "iterations": sol.iterations,
        "final_residual": sol.final_residual,
        "residual_history": sol.residual_history,
        "fields_file": format!("{stem}_fields.csv"),
        "run": extra,
    });
    write_json(&json_path, &meta)?;
    let mut w = create(&csv_path)?;
    writeln!(w, "t,x,f,g,rho")?;
    for (k, &t) in sol.time_mesh.iter().enumerate() {
        let ts = fmt_f64(t);
        for (i, &x) in sol.grid.points().iter().enumerate() {
            let f = sol.f_field[k][i];
            let g = sol.g_field[k][i];
            writeln!(w, "{ts},{},{},{},{}", fmt_f64(x), fmt_f64(f), fmt_f64(g), fmt_f64(f * g))?;
        }
    }
    w.flush()?;
    Ok(vec![json_path, csv_path])
}

/// `t,x,b` table of a drift field.
pub fn write_drift(path: &Path, drift: &DriftField) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "t,x,b")?;
    for (k, &t) in drift.time_mesh.iter().enumerate() {
        let ts = fmt_f64(t);
        for (x, b) in drift.grid.points().iter().zip(&drift.values[k]) {
            writeln!(w, "{ts},{},{}", fmt_f64(*x), fmt_f64(*b))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `<stem>.csv` (`path_id,t,x`) and the manifest `<stem>.json`.
pub fn write_paths(dir: &Path, stem: &str, ens: &PathEnsemble) -> Result<Vec<PathBuf>> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    let mut w = create(&csv_path)?;
    writeln!(w, "path_id,t,x")?;
    let times: Vec<String> = ens.time_mesh.iter().map(|&t| fmt_f64(t)).collect();
    for (p, row) in ens.states.iter().enumerate() {
        for (t, x) in times.iter().zip(row) {
            writeln!(w, "{p},{t},{}", fmt_f64(*x))?;
        }
    }
    w.flush()?;
    let manifest = json!({
        "n_paths": ens.n_paths,
        "seed": ens.rng.seed,
        "stream_id": ens.rng.stream_id,
        "dt": ens.dt,
        "time_mesh": ens.time_mesh,
        "drift": ens.drift_provenance,
        "boundary_hits": ens.boundary_hits,
        "warnings": ens.warnings,
        "states_file": format!("{stem}.csv"),
    });
    write_json(&json_path, &manifest)?;
    Ok(vec![csv_path, json_path])
}

/// `dt,value` ladder.
pub fn write_ladder(path: &Path, dts: &[f64], values: &[f64]) -> Result<()> {
    if dts.len() != values.len() {
        return Err(FkError::domain("ladder and values differ in length"));
    }
    let mut w = create(path)?;
    writeln!(w, "dt,value")?;
    for (dt, v) in dts.iter().zip(values) {
        writeln!(w, "{},{}", fmt_f64(*dt), fmt_f64(*v))?;
    }
    w.flush()?;
    Ok(())
}

/// One `dt,value` file per estimator: `<stem>_b_hat.csv`, `_a_hat`, `_tail`.
pub fn write_local_characteristics(
    dir: &Path,
    stem: &str,
    lc: &LocalCharacteristics,
) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for (name, values) in [("b_hat", &lc.b_hat), ("a_hat", &lc.a_hat), ("tail", &lc.tail)] {
        let path = dir.join(format!("{stem}_{name}.csv"));
        write_ladder(&path, &lc.dt_ladder, values)?;
        out.push(path);
    }
    Ok(out)
}

/// Reads a density from a two-column `x,rho` CSV (with header) and
/// interpolates it linearly onto `grid`; the file must cover the grid.
pub fn read_density_csv(path: &Path, grid: &Grid) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() < 2 {
            return Err(FkError::Serde(format!("{}: rows need two columns", path.display())));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| FkError::Serde(format!("{}: bad number `{s}`", path.display())))
        };
        xs.push(parse(&record[0])?);
        ys.push(parse(&record[1])?);
    }
    if xs.len() < 2 || xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(FkError::Serde(format!(
            "{}: need at least two rows with increasing x",
            path.display()
        )));
    }
    let lo = xs[0];
    let hi = *xs.last().expect("two rows");
    if lo > grid.lo() || hi < grid.hi() {
        return Err(FkError::domain(format!(
            "{}: covers [{lo}, {hi}], grid needs [{}, {}]",
            path.display(),
            grid.lo(),
            grid.hi()
        )));
    }
    // the file need not be uniform, so interpolate by search
    let uniform = make_uniform_grid(lo, hi, xs.len()).ok();
    grid.points()
        .iter()
        .map(|&x| match &uniform {
            Some(u) if u.points().iter().zip(&xs).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs())) => {
                interp_linear(u, &ys, x)
            }
            _ => {
                let k = xs.partition_point(|&v| v < x).clamp(1, xs.len() - 1);
                let (x0, x1) = (xs[k - 1], xs[k]);
                let w = (x - x0) / (x1 - x0);
                Ok(ys[k - 1] + w * (ys[k] - ys[k - 1]))
            }
        })
        .collect()
}

/// Record of one run, sufficient to reproduce its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub artifacts: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            tool: "fkbridge".into(),
            version: VERSION.into(),
            command: command.into(),
            seed,
            config,
            artifacts: Vec::new(),
        }
    }

    /// Records artifact paths relative to `dir`, sorted.
    pub fn add(&mut self, dir: &Path, paths: &[PathBuf]) {
        for p in paths {
            let rel = p.strip_prefix(dir).unwrap_or(p);
            self.artifacts.push(rel.to_string_lossy().replace('\\', "/"));
        }
        self.artifacts.sort();
        self.artifacts.dedup();
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        write_json(&path, self)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{kernel_matrix, MonteCarloOptions, ZeroPotential, ConstantPotential};

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300, f64::MIN_POSITIVE] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn kernel_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = make_uniform_grid(-2.0, 2.0, 9).unwrap();
        let k = kernel_matrix(&ZeroPotential, &g, 0.0, 0.5, &KernelSpec::Heat).unwrap();
        let files = write_kernel(dir.path(), "k", &k).unwrap();
        assert_eq!(files.len(), 2);
        let back = read_kernel(dir.path(), "k").unwrap();
        assert_eq!(back.values, k.values);
        assert!(back.grid.same_as(&k.grid));
        let text = fs::read_to_string(&files[0]).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "y_index,x_index,s,t,value");
        assert!(lines.next().unwrap().starts_with("0,0,"));
        assert!(lines.next().unwrap().starts_with("0,1,"));
    }

    #[test]
    fn mc_kernel_has_stderr_column() {
        let dir = tempfile::tempdir().unwrap();
        let g = make_uniform_grid(-1.0, 1.0, 3).unwrap();
        let opts = MonteCarloOptions {
            n_paths: 100,
            n_steps: 4,
            seed: 1,
            stream_id: 0,
        };
        let k = kernel_matrix(&ConstantPotential { value: 0.5 }, &g, 0.0, 0.5, &KernelSpec::MonteCarlo(opts))
            .unwrap();
        write_kernel(dir.path(), "mc", &k).unwrap();
        let back = read_kernel(dir.path(), "mc").unwrap();
        assert_eq!(back.stderr, k.stderr);
        assert_eq!(back.spec, k.spec);
    }

    #[test]
    fn density_csv_is_interpolated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rho.csv");
        fs::write(&path, "x,rho\n-3,0\n0,3\n3,0\n").unwrap();
        let g = make_uniform_grid(-2.0, 2.0, 5).unwrap();
        let rho = read_density_csv(&path, &g).unwrap();
        assert_eq!(rho, vec![1.0, 2.0, 3.0, 2.0, 1.0]);
        let wide = make_uniform_grid(-4.0, 4.0, 5).unwrap();
        assert!(read_density_csv(&path, &wide).is_err());
    }

    #[test]
    fn ladder_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.csv");
        write_ladder(&path, &[0.1, 0.05], &[1.0, 0.5]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "dt,value\n1.0000000000000001e-1,1.0000000000000000e0\n5.0000000000000003e-2,5.0000000000000000e-1\n"
        );
        assert!(write_ladder(&path, &[0.1], &[]).is_err());
    }
}
