//! Closed-loop execution against a hidden plant.
//!
//! The controller only sees the data dictionary; the plant's matrices are used to
//! generate next states. In receding-horizon mode every executed step is appended to the
//! dictionary before the next decision, in static mode the training data is used
//! throughout. Both modes draw the same noise sequence for the same seed.

use std::fmt::Write as _;
use std::path::Path;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::consistency::{ConsistencySet, DataDictionary, Provenance, SystemPair, Triple};
use crate::controller::{fmt_vec, solve_dual, ControllerContext, NoiseModel};
use crate::polytope::HPolytope;
use crate::{Error, Result};

/// Tolerance on gauge values for the safety checks.
pub const SAFETY_TOL: f64 = 1e-6;
/// Fresh sub-seeds tried by [`gen_training_data`] before giving up.
pub const MAX_DATA_ATTEMPTS: u64 = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseMode {
    /// Independent uniform samples from the `ε`-ball.
    UniformIid,
    Constant { v: Vec<f64> },
    /// Replayed in order; running past the end is an error.
    Sequence { values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone)]
pub struct TruePlant {
    system: SystemPair,
    epsilon: f64,
    noise: NoiseMode,
}

impl TruePlant {
    pub fn new(system: SystemPair, epsilon: f64, noise: NoiseMode) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::Config(format!("noise bound must be nonnegative, got {epsilon}")));
        }
        let n = system.state_dim();
        let check = |v: &[f64]| -> Result<()> {
            if v.len() != n {
                return Err(Error::Dimension(format!("noise vector has length {}, expected {n}", v.len())));
            }
            if v.iter().any(|c| !(c.abs() <= epsilon)) {
                return Err(Error::Config(format!("noise vector {v:?} exceeds the bound {epsilon}")));
            }
            Ok(())
        };
        match &noise {
            NoiseMode::UniformIid => {}
            NoiseMode::Constant { v } => check(v)?,
            NoiseMode::Sequence { values } => values.iter().try_for_each(|v| check(v))?,
        }
        Ok(Self { system, epsilon, noise })
    }

    pub fn system(&self) -> &SystemPair {
        &self.system
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn noise_mode(&self) -> &NoiseMode {
        &self.noise
    }

    pub fn state_dim(&self) -> usize {
        self.system.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.system.input_dim()
    }

    fn noise_source(&self, seed: u64) -> NoiseSource<'_> {
        NoiseSource {
            plant: self,
            rng: ChaCha8Rng::seed_from_u64(seed),
            k: 0,
        }
    }
}

struct NoiseSource<'a> {
    plant: &'a TruePlant,
    rng: ChaCha8Rng,
    k: usize,
}

impl NoiseSource<'_> {
    fn next(&mut self) -> Result<DVector<f64>> {
        let n = self.plant.state_dim();
        let eps = self.plant.epsilon;
        let v = match &self.plant.noise {
            NoiseMode::UniformIid => uniform_ball(&mut self.rng, n, eps),
            NoiseMode::Constant { v } => DVector::from_column_slice(v),
            NoiseMode::Sequence { values } => match values.get(self.k) {
                Some(v) => DVector::from_column_slice(v),
                None => return Err(Error::Config(format!("noise sequence exhausted after {} steps", values.len()))),
            },
        };
        self.k += 1;
        Ok(v)
    }
}

fn uniform_ball(rng: &mut ChaCha8Rng, n: usize, eps: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| if eps > 0.0 { rng.gen_range(-eps..=eps) } else { 0.0 })
}

/// `N` triples with states uniform in `X`, inputs uniform in `U` and uniform noise in the
/// plant's `ε`-ball. A sample whose data matrix lacks full column rank is discarded and
/// redrawn from the next sub-seed.
pub fn gen_training_data(
    plant: &TruePlant,
    samples: usize,
    x_set: &HPolytope,
    u_set: &HPolytope,
    seed: u64,
) -> Result<DataDictionary> {
    let n = plant.state_dim();
    let m = plant.input_dim();
    if samples == 0 {
        return Err(Error::TrainingData("at least one training sample is required".into()));
    }
    if x_set.dim() != n || u_set.dim() != m {
        return Err(Error::Dimension("constraint sets do not match the plant".into()));
    }
    for attempt in 0..MAX_DATA_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt);
        let xs = x_set.sample(&mut rng, samples)?;
        let us = u_set.sample(&mut rng, samples)?;
        let mut data = DataDictionary::new(n, m);
        for (x, u) in xs.into_iter().zip(us) {
            let v = uniform_ball(&mut rng, n, plant.epsilon);
            let x_next = plant.system.step(&x, &u) + v;
            data.push(Triple {
                x,
                u,
                x_next,
                tag: Provenance::Training,
            })?;
        }
        // Rank does not depend on the (invertible) noise shape.
        if ConsistencySet::build(&data, &DMatrix::identity(n, n))?.check_rank() {
            return Ok(data);
        }
        debug!("training draw {attempt} is rank deficient");
    }
    Err(Error::TrainingData(format!(
        "no full-rank data set of {samples} samples in {MAX_DATA_ATTEMPTS} draws; at least {} samples are needed",
        n + m
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Rh,
    Static,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Rh => "rh",
            Mode::Static => "static",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub x0: DVector<f64>,
    /// Step budget.
    pub steps: usize,
    pub mode: Mode,
    /// Stop this many steps after the first `λ >= 1` decision.
    pub grace_after_uub: Option<usize>,
    /// Seed of the plant's noise source.
    pub seed: u64,
    /// Record wall-clock solve times; disable for byte-reproducible logs.
    pub timing: bool,
}

impl SimConfig {
    pub fn new(x0: DVector<f64>, steps: usize, mode: Mode, seed: u64) -> Self {
        Self {
            x0,
            steps,
            mode,
            grace_after_uub: None,
            seed,
            timing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub lambda: f64,
    pub psi: f64,
    pub cs_rows: usize,
    pub solve_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub mode: Mode,
    pub seed: u64,
    pub config_hash: String,
    pub n: usize,
    pub m: usize,
    pub steps: Vec<StepRecord>,
    /// State after the last executed step.
    pub final_state: DVector<f64>,
    /// Steps `k` whose successor state left the invariant set.
    pub violations: Vec<usize>,
}

#[derive(Serialize)]
struct Metadata<'a> {
    mode: &'a str,
    seed: u64,
    config_hash: &'a str,
    steps: usize,
    final_state: Vec<f64>,
    violations: &'a [usize],
    first_uub_step: Option<usize>,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// First step whose optimal `λ` is at least one.
    pub fn first_uub_step(&self) -> Option<usize> {
        self.steps.iter().find(|s| s.lambda >= 1.0).map(|s| s.k)
    }

    /// Every state (including the final one) inside `x_i` and every input inside `u_set`,
    /// both up to [`SAFETY_TOL`] in gauge.
    pub fn safety_ok(&self, x_i: &HPolytope, u_set: &HPolytope) -> Result<bool> {
        for s in &self.steps {
            if x_i.gauge(&s.x)? > 1.0 + SAFETY_TOL || u_set.gauge(&s.u)? > 1.0 + SAFETY_TOL {
                return Ok(false);
            }
        }
        Ok(x_i.gauge(&self.final_state)? <= 1.0 + SAFETY_TOL)
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["k".to_string()];
        cols.extend((1..=self.n).map(|i| format!("x_{i}")));
        cols.extend((1..=self.m).map(|i| format!("u_{i}")));
        cols.extend((1..=self.n).map(|i| format!("v_{i}")));
        cols.extend(["lambda", "psi", "cs_rows", "solve_ms"].map(String::from));
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for s in &self.steps {
            let _ = write!(out, "{}", s.k);
            for v in s.x.iter().chain(s.u.iter()).chain(s.v.iter()) {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{},{},{},{}", s.lambda, s.psi, s.cs_rows, s.solve_ms);
        }
        out
    }

    pub fn metadata_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Metadata {
            mode: self.mode.as_str(),
            seed: self.seed,
            config_hash: &self.config_hash,
            steps: self.steps.len(),
            final_state: self.final_state.iter().copied().collect(),
            violations: &self.violations,
            first_uub_step: self.first_uub_step(),
        })?)
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        std::fs::write(dir.join(format!("{stem}.json")), self.metadata_json()?)?;
        Ok(())
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// SHA-256 over the canonical JSON of everything that determines a run.
pub fn config_hash(config: &SimConfig, plant: &TruePlant, x_i: &HPolytope, data: &DataDictionary) -> Result<String> {
    let canonical = json!({
        "a": matrix_rows(&plant.system.a),
        "b": matrix_rows(&plant.system.b),
        "epsilon": plant.epsilon,
        "noise": plant.noise,
        "x0": config.x0.iter().collect::<Vec<_>>(),
        "steps": config.steps,
        "mode": config.mode,
        "grace_after_uub": config.grace_after_uub,
        "seed": config.seed,
        "invariant_set": x_i.to_json()?,
        "data": data.to_json()?,
    });
    let digest = Sha256::digest(canonical.to_string().as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Runs the closed loop from `config.x0`.
///
/// `noise` is the controller's noise model; it also shapes the consistency set. The
/// plant's own noise bound may differ from it.
pub fn run(
    config: &SimConfig,
    plant: &TruePlant,
    x_i: &HPolytope,
    u_set: &HPolytope,
    noise: &NoiseModel,
    d_train: &DataDictionary,
) -> Result<TrajectoryLog> {
    let n = plant.state_dim();
    let m = plant.input_dim();
    if config.x0.len() != n || x_i.dim() != n || u_set.dim() != m {
        return Err(Error::Dimension("simulation inputs do not match the plant".into()));
    }
    if d_train.state_dim() != n || d_train.input_dim() != m {
        return Err(Error::Dimension("training data does not match the plant".into()));
    }
    let psi0 = x_i.gauge(&config.x0)?;
    if psi0 > 1.0 + SAFETY_TOL {
        return Err(Error::InitialStateOutside(format!(
            "{} (gauge {psi0})",
            fmt_vec(&config.x0)
        )));
    }

    let cs = ConsistencySet::build(d_train, noise.shape())?;
    let mut ctx = ControllerContext::new(x_i, u_set, Some(noise.clone()), cs)?;
    let mut source = plant.noise_source(config.seed);
    let mut x = config.x0.clone();
    let mut steps = Vec::with_capacity(config.steps);
    let mut violations = Vec::new();
    let mut stop_at = config.steps;

    let mut k = 0;
    while k < stop_at {
        let decision = solve_dual(&ctx, &x).map_err(|e| match e {
            Error::ControllerInfeasible(msg) => Error::ControllerInfeasible(format!("step {k}: {msg}")),
            other => other,
        })?;
        let v = source.next()?;
        let x_next = plant.system.step(&x, &decision.u) + &v;
        let solve_ms = if config.timing {
            decision.solve_time.as_secs_f64() * 1e3
        } else {
            0.0
        };
        steps.push(StepRecord {
            k,
            x: x.clone(),
            u: decision.u.clone(),
            v,
            lambda: decision.lambda,
            psi: decision.psi,
            cs_rows: ctx.consistency().num_rows(),
            solve_ms,
        });
        if x_i.gauge(&x_next)? > 1.0 + SAFETY_TOL {
            warn!("step {k}: state {} left the invariant set", fmt_vec(&x_next));
            violations.push(k);
        }
        if config.mode == Mode::Rh {
            let triple = Triple {
                x: x.clone(),
                u: decision.u,
                x_next: x_next.clone(),
                tag: Provenance::Execution,
            };
            let updated = ctx.consistency().update(&triple)?;
            ctx.set_consistency(updated)?;
        }
        if decision.lambda >= 1.0 {
            if let Some(grace) = config.grace_after_uub {
                stop_at = stop_at.min(k + 1 + grace);
            }
        }
        debug!("step {k}: λ = {}, ψ = {}", decision.lambda, decision.psi);
        x = x_next;
        k += 1;
    }

    Ok(TrajectoryLog {
        mode: config.mode,
        seed: config.seed,
        config_hash: config_hash(config, plant, x_i, d_train)?,
        n,
        m,
        steps,
        final_state: x,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn rotation_plant(eps: f64, noise: NoiseMode) -> TruePlant {
        let sys = SystemPair::new(dmatrix![0.0, -0.99; 0.99, 0.0], dmatrix![0.0; 1.0]).unwrap();
        TruePlant::new(sys, eps, noise).unwrap()
    }

    #[test]
    fn noise_respects_bound() {
        let plant = rotation_plant(0.04, NoiseMode::UniformIid);
        let mut src = plant.noise_source(3);
        for _ in 0..1000 {
            assert!(src.next().unwrap().amax() <= 0.04);
        }
    }

    #[test]
    fn out_of_bound_noise_rejected() {
        let sys = SystemPair::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 1)).unwrap();
        assert!(TruePlant::new(sys.clone(), 0.1, NoiseMode::Constant { v: vec![0.2, 0.0] }).is_err());
        assert!(TruePlant::new(sys, -1.0, NoiseMode::UniformIid).is_err());
    }

    #[test]
    fn sequence_runs_out() {
        let plant = rotation_plant(0.1, NoiseMode::Sequence { values: vec![vec![0.1, 0.0]] });
        let mut src = plant.noise_source(0);
        assert!(src.next().is_ok());
        assert!(src.next().is_err());
    }

    #[test]
    fn training_data_is_full_rank_and_in_bounds() {
        let plant = rotation_plant(0.04, NoiseMode::UniformIid);
        let x = HPolytope::unit_box(2);
        let u = HPolytope::unit_box(1);
        let data = gen_training_data(&plant, 10, &x, &u, 11).unwrap();
        assert_eq!(data.len(), 10);
        let shape = crate::consistency::noise_shape_for_bound(2, 0.04).unwrap();
        let cs = ConsistencySet::build(&data, &shape).unwrap();
        assert!(cs.check_rank());
        assert!(cs.membership(plant.system()).unwrap());
        for t in data.triples() {
            assert!(x.contains_point(&t.x, 0.0) && u.contains_point(&t.u, 0.0));
        }
    }

    #[test]
    fn single_sample_cannot_reach_full_rank() {
        let plant = rotation_plant(0.04, NoiseMode::UniformIid);
        let r = gen_training_data(&plant, 1, &HPolytope::unit_box(2), &HPolytope::unit_box(1), 0);
        assert!(matches!(r, Err(Error::TrainingData(_))));
    }

    #[test]
    fn initial_state_outside_rejected() {
        let plant = rotation_plant(0.04, NoiseMode::UniformIid);
        let x = HPolytope::unit_box(2);
        let u = HPolytope::unit_box(1);
        let data = gen_training_data(&plant, 10, &x, &u, 1).unwrap();
        let noise = NoiseModel::from_bound(2, 0.04).unwrap();
        let cfg = SimConfig::new(dvector![1.5, 0.0], 5, Mode::Rh, 0);
        assert!(matches!(run(&cfg, &plant, &x, &u, &noise, &data), Err(Error::InitialStateOutside(_))));
    }

    #[test]
    fn csv_layout() {
        let log = TrajectoryLog {
            mode: Mode::Static,
            seed: 0,
            config_hash: String::new(),
            n: 2,
            m: 1,
            steps: vec![StepRecord {
                k: 0,
                x: dvector![1.0, 0.5],
                u: dvector![-0.25],
                v: dvector![0.0, 0.01],
                lambda: 0.75,
                psi: 1.0,
                cs_rows: 40,
                solve_ms: 0.0,
            }],
            final_state: dvector![0.0, 0.0],
            violations: vec![],
        };
        let csv = log.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "k,x_1,x_2,u_1,v_1,v_2,lambda,psi,cs_rows,solve_ms");
        assert_eq!(lines.next().unwrap(), "0,1,0.5,-0.25,0,0.01,0.75,1,40,0");
    }
}
