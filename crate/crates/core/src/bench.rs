//! Benchmark driver: configuration, timed runs, oracle checks, scaling
//! series and report formats.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compiler::{compile, CompileOptions, ExecPlan, Mode};
use crate::decomposition::{default_topology, Decomposition, Topology};
use crate::distfield::LocalField;
use crate::error::{ConfigError, Error};
use crate::kernels::{acoustic_kernel, build_kernel, AcousticSetup, KernelDef, KernelKind};
use crate::runtime::{run_plan, ExecOptions, RunOutput, SectionTimes, SpawnOptions, TransportKind};
use crate::symbolics::GridSpec;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub kernel: KernelKind,
    pub shape: Vec<usize>,
    pub so: usize,
    pub steps: usize,
    pub ranks: usize,
    /// Process grid; `None` picks the balanced default.
    pub topology: Option<Vec<usize>>,
    pub mode: Mode,
    pub transport: TransportKind,
    pub tile: usize,
    /// Run the single-rank oracle and report the difference.
    pub check: bool,
    pub seed: u64,
    pub optimize: bool,
    pub dt: Option<f64>,
    pub source: Option<Vec<f64>>,
    pub receivers: Option<Vec<Vec<f64>>>,
}

impl RunConfig {
    pub fn new(kernel: KernelKind, shape: &[usize]) -> Self {
        Self {
            kernel,
            shape: shape.to_vec(),
            so: 8,
            steps: 20,
            ranks: 1,
            topology: None,
            mode: Mode::Diagonal,
            transport: TransportKind::Inproc,
            tile: 32,
            check: false,
            seed: 1,
            optimize: true,
            dt: None,
            source: None,
            receivers: None,
        }
    }

    /// Default desk-scale shape for a kernel.
    pub fn default_shape(kernel: KernelKind) -> Vec<usize> {
        match kernel {
            KernelKind::Diffusion => vec![256, 256],
            _ => vec![64, 64, 64],
        }
    }

    pub fn topology(&self) -> Result<Topology, Error> {
        Ok(match &self.topology {
            Some(dims) => Topology::with_ranks(dims, self.ranks)?,
            None => default_topology(self.ranks, self.shape.len()),
        })
    }

    pub fn kernel_def(&self) -> Result<KernelDef, Error> {
        let grid = GridSpec::unit(&self.shape)?;
        let mut def = match self.kernel {
            KernelKind::Acoustic => {
                let setup = AcousticSetup {
                    dt: self.dt,
                    source: self.source.clone(),
                    receivers: self.receivers.clone(),
                    nsteps: self.steps,
                    ..Default::default()
                };
                acoustic_kernel(&grid, self.so, &setup)?
            }
            k => {
                if self.source.is_some() || self.receivers.is_some() {
                    return Err(ConfigError::Invalid(format!("kernel `{k}` has no sources or receivers")).into());
                }
                build_kernel(k, &grid, self.so)?
            }
        };
        if let (Some(dt), false) = (self.dt, self.kernel == KernelKind::Acoustic) {
            def.dt = dt;
        }
        Ok(def)
    }

    /// Validate everything downstream modules would reject, and build the plan.
    pub fn prepare(&self) -> Result<(KernelDef, ExecPlan), Error> {
        if self.steps == 0 {
            return Err(ConfigError::Invalid("at least one time step is required".into()).into());
        }
        if self.tile == 0 {
            return Err(ConfigError::Invalid("tile size must be positive".into()).into());
        }
        if self.topology.as_ref().is_some_and(|t| t.len() != self.shape.len()) {
            return Err(ConfigError::Invalid(format!(
                "topology has {} axes but the grid has {}",
                self.topology.as_ref().map_or(0, Vec::len),
                self.shape.len()
            ))
            .into());
        }
        let def = self.kernel_def()?;
        let decomp = Decomposition::new(&self.shape, self.topology()?)?;
        let mut opts = CompileOptions::new(self.mode, def.dt);
        opts.optimize = self.optimize;
        opts.tile = self.tile;
        let plan = compile(&def.program, &decomp, &opts)?;
        Ok((def, plan))
    }

    fn spawn_options(&self) -> SpawnOptions {
        SpawnOptions {
            transport: self.transport,
            ..Default::default()
        }
    }

    /// Same run on a single rank.
    pub fn single_rank(&self) -> RunConfig {
        RunConfig {
            ranks: 1,
            topology: None,
            transport: TransportKind::Inproc,
            check: false,
            ..self.clone()
        }
    }

    pub fn shape_label(&self) -> String {
        join(&self.shape, "x")
    }
}

fn join(v: &[usize], sep: &str) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(sep)
}

/// Result of one benchmark run.
#[derive(Clone, Debug, Serialize)]
pub struct MetricsRecord {
    pub config: RunConfig,
    pub topology: Vec<usize>,
    /// Slowest rank's wall time of the time loop.
    pub walltime_s: f64,
    /// Slowest rank's sections.
    pub sections: SectionTimes,
    /// Per-rank halo messages and bytes per step.
    pub msgs_per_rank_step: Vec<f64>,
    pub bytes_per_rank_step: Vec<f64>,
    pub points_updated: u64,
    pub gpts_per_s: f64,
    pub max_diff: Option<f64>,
    pub checksum: String,
    #[serde(skip)]
    pub output: RunOutput,
}

/// Flat CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRecord {
    pub kernel: String,
    pub shape: String,
    pub sdo: usize,
    pub ranks: usize,
    pub topology: String,
    pub mode: String,
    pub transport: String,
    pub steps: usize,
    pub walltime_s: f64,
    pub gpts_per_s: f64,
    pub msgs_per_rank_step: f64,
    pub bytes_per_rank_step: f64,
    pub max_diff: Option<f64>,
    pub checksum: String,
}

impl MetricsRecord {
    pub fn csv_record(&self) -> CsvRecord {
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        CsvRecord {
            kernel: self.config.kernel.to_string(),
            shape: self.config.shape_label(),
            sdo: self.config.so,
            ranks: self.config.ranks,
            topology: join(&self.topology, "x"),
            mode: self.config.mode.to_string(),
            transport: self.config.transport.to_string(),
            steps: self.config.steps,
            walltime_s: self.walltime_s,
            gpts_per_s: self.gpts_per_s,
            msgs_per_rank_step: mean(&self.msgs_per_rank_step),
            bytes_per_rank_step: mean(&self.bytes_per_rank_step),
            max_diff: self.max_diff,
            checksum: self.checksum.clone(),
        }
    }
}

/// SHA-256 over every gathered buffer and receiver trace.
pub fn checksum(out: &RunOutput) -> String {
    let mut h = Sha256::new();
    for (name, bufs) in &out.fields {
        h.update(name.as_bytes());
        for b in bufs {
            for v in b {
                h.update(v.to_le_bytes());
            }
        }
    }
    for (name, table) in &out.records {
        h.update(name.as_bytes());
        for row in table {
            for v in row {
                h.update(v.to_le_bytes());
            }
        }
    }
    format!("{:x}", h.finalize())
}

fn execute(cfg: &RunConfig) -> Result<(KernelDef, ExecPlan, RunOutput), Error> {
    let (def, plan) = cfg.prepare()?;
    let seed = cfg.seed;
    let init = |_: usize, f: &mut LocalField| def.init_field(f, Some(seed));
    let out = run_plan(&plan, cfg.steps, &init, &cfg.spawn_options(), &ExecOptions::default())?;
    Ok((def, plan, out))
}

/// Run, time and (optionally) verify one configuration.
pub fn run_benchmark(cfg: &RunConfig) -> Result<MetricsRecord, Error> {
    let (def, plan, out) = execute(cfg)?;
    let slowest = out
        .reports
        .iter()
        .max_by(|a, b| a.wall.total_cmp(&b.wall))
        .expect("at least one rank");
    let walltime_s = slowest.wall;
    let steps = cfg.steps as f64;
    let npoints: u64 = cfg.shape.iter().product::<usize>() as u64;
    let points_updated = npoints * def.evolving.len() as u64 * cfg.steps as u64;
    let max_diff = if cfg.check {
        let (_, _, base) = execute(&cfg.single_rank())?;
        Some(out.max_abs_diff(&base))
    } else {
        None
    };
    Ok(MetricsRecord {
        topology: plan.decomposition.topology().dims().to_vec(),
        walltime_s,
        sections: slowest.times,
        msgs_per_rank_step: out.reports.iter().map(|r| r.stats.halo_msgs as f64 / steps).collect(),
        bytes_per_rank_step: out.reports.iter().map(|r| r.stats.halo_bytes as f64 / steps).collect(),
        points_updated,
        gpts_per_s: points_updated as f64 / walltime_s / 1e9,
        max_diff,
        checksum: checksum(&out),
        config: cfg.clone(),
        output: out,
    })
}

/// Largest absolute difference between the distributed run and one rank.
pub fn verify_against_single_rank(cfg: &RunConfig) -> Result<f64, Error> {
    let (_, _, out) = execute(cfg)?;
    let (_, _, base) = execute(&cfg.single_rank())?;
    Ok(out.max_abs_diff(&base))
}

/// `100 * T(N) / (T(1) * N)` for `throughputs[k]` measured on `N = 2^k` nodes.
pub fn efficiency(throughputs: &[f64]) -> Vec<f64> {
    efficiency_at(throughputs, &(0..throughputs.len()).map(|k| 1usize << k).collect::<Vec<_>>())
}

/// Same formula with explicit node multipliers.
pub fn efficiency_at(throughputs: &[f64], nodes: &[usize]) -> Vec<f64> {
    let Some(&t1) = throughputs.first() else { return Vec::new() };
    throughputs
        .iter()
        .zip(nodes)
        .map(|(&t, &n)| 100.0 * t / (t1 * n as f64))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    Strong,
    Weak,
}

impl std::str::FromStr for Scaling {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strong" => Ok(Scaling::Strong),
            "weak" => Ok(Scaling::Weak),
            _ => Err(ConfigError::Invalid(format!("unknown scaling `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub ranks: usize,
    pub shape: String,
    pub topology: String,
    pub walltime_s: f64,
    pub gpts_per_s: f64,
    pub efficiency: f64,
    /// Halo bytes per step of the first rank with every neighbour.
    pub interior_bytes_per_step: Option<u64>,
    pub max_bytes_per_rank_step: u64,
}

/// Double one axis per doubling of `factor`, cycling from axis 0.
pub fn weak_shape(base: &[usize], factor: usize) -> Result<Vec<usize>, Error> {
    if factor == 0 || !factor.is_power_of_two() {
        return Err(ConfigError::Invalid(format!("weak scaling needs power-of-two rank multiples, got {factor}")).into());
    }
    let mut s = base.to_vec();
    for k in 0..factor.trailing_zeros() as usize {
        s[k % base.len()] *= 2;
    }
    Ok(s)
}

/// Configurations of a scaling series. Weak scaling grows the shape and the
/// process grid together so every rank keeps the base subdomain.
pub fn scaling_configs(scaling: Scaling, base: &RunConfig, ranks: &[usize]) -> Result<Vec<RunConfig>, Error> {
    let r0 = *ranks
        .first()
        .ok_or_else(|| ConfigError::Invalid("empty rank list".into()))?;
    let base_topo = base.topology.clone().unwrap_or_else(|| default_topology(r0, base.shape.len()).dims().to_vec());
    ranks
        .iter()
        .map(|&r| {
            let mut c = base.clone();
            c.ranks = r;
            match scaling {
                Scaling::Strong => {
                    c.topology = if r == r0 { base.topology.clone() } else { None };
                }
                Scaling::Weak => {
                    if r % r0 != 0 {
                        return Err(ConfigError::Invalid(format!("{r} ranks is not a multiple of {r0}")).into());
                    }
                    c.shape = weak_shape(&base.shape, r / r0)?;
                    c.topology = Some(weak_shape(&base_topo, r / r0)?);
                }
            }
            Ok(c)
        })
        .collect()
}

/// Run a scaling series and tabulate throughput against efficiency.
pub fn scaling_report(scaling: Scaling, base: &RunConfig, ranks: &[usize]) -> Result<Vec<ScalingRow>, Error> {
    let mut rows = Vec::new();
    let mut gpts = Vec::new();
    for cfg in scaling_configs(scaling, base, ranks)? {
        let m = run_benchmark(&cfg)?;
        let decomp = Decomposition::new(&cfg.shape, cfg.topology()?)?;
        let per_step = |r: usize| m.output.reports[r].halo_bytes_per_step.first().copied().unwrap_or(0);
        let interior = (0..cfg.ranks).find(|&r| decomp.neighbor_sides(r).iter().all(|s| s[0] && s[1]));
        gpts.push(m.gpts_per_s);
        rows.push(ScalingRow {
            ranks: cfg.ranks,
            shape: cfg.shape_label(),
            topology: join(&m.topology, "x"),
            walltime_s: m.walltime_s,
            gpts_per_s: m.gpts_per_s,
            efficiency: 0.0,
            interior_bytes_per_step: interior.map(per_step),
            max_bytes_per_rank_step: (0..cfg.ranks).map(per_step).max().unwrap_or(0),
        });
    }
    fill_efficiency(&mut rows);
    Ok(rows)
}

/// Set the efficiency column from throughput, with `N = ranks / ranks[0]`.
pub fn fill_efficiency(rows: &mut [ScalingRow]) {
    let Some(r0) = rows.first().map(|r| r.ranks) else { return };
    let t: Vec<f64> = rows.iter().map(|r| r.gpts_per_s).collect();
    let n: Vec<usize> = rows.iter().map(|r| r.ranks / r0).collect();
    for (row, e) in rows.iter_mut().zip(efficiency_at(&t, &n)) {
        row.efficiency = e;
    }
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>, R: Read>(input: R) -> Result<Vec<T>, Error> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e| Error::Io(e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn efficiency_examples() {
        assert_eq!(efficiency(&[1.0, 2.0, 4.0]), vec![100.0, 100.0, 100.0]);
        assert_eq!(efficiency(&[1.0, 1.0]), vec![100.0, 50.0]);
    }

    #[test]
    fn weak_shapes_cycle_axes() {
        assert_eq!(weak_shape(&[32, 32, 32], 1).unwrap(), vec![32, 32, 32]);
        assert_eq!(weak_shape(&[32, 32, 32], 2).unwrap(), vec![64, 32, 32]);
        assert_eq!(weak_shape(&[32, 32, 32], 4).unwrap(), vec![64, 64, 32]);
        assert!(weak_shape(&[32, 32], 3).is_err());
    }

    #[test]
    fn strong_series_keeps_shape() {
        let base = RunConfig::new(KernelKind::Diffusion, &[64, 64]);
        let cfgs = scaling_configs(Scaling::Strong, &base, &[1, 2, 4, 8]).unwrap();
        assert!(cfgs.iter().all(|c| c.shape == vec![64, 64]));
    }
}
