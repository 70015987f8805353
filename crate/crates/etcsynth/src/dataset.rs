//! Experiment data: acquisition, validation, and serialization.
//!
//! A design starts from a finite experiment on the open-loop plant: apply a
//! persistently exciting input, record the state, and stack the samples into
//! the three data matrices that every downstream design consumes. Samples
//! come in two flavors: `Derivative` mode records instantaneous state
//! derivatives, `Integral` mode records interval integrals of input and
//! state plus state increments, which avoids differentiating measurements.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Continuous-time linear plant `xdot = A x + B u + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl PlantModel {
    /// Validates shapes: `A` square, `B` with matching row count, all
    /// entries finite.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self, DatasetError> {
        if a.nrows() == 0 || a.nrows() != a.ncols() {
            return Err(DatasetError::BadPlant("state matrix must be square and nonempty"));
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(DatasetError::BadPlant("input matrix shape does not match state dimension"));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(DatasetError::BadPlant("plant matrices must be finite"));
        }
        Ok(Self { a, b })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }
}

/// How a sample row is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    /// Rows carry `(u(kTs), x(kTs), xdot(kTs))`.
    Derivative,
    /// Rows carry per-interval integrals `(v(k), r(k))` and increments
    /// `xi(k) = x((k+1)Ts) - x(kTs)`.
    Integral,
}

/// Open-loop experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Sample period, strictly positive.
    pub ts: f64,
    /// Number of samples `T`.
    pub samples: usize,
    /// Input amplitude: each input channel is sampled i.i.d. uniform in
    /// `[-a, a]` and held over the sample interval.
    pub input_amplitude: f64,
    /// Initial state amplitude: each component uniform in `[-a, a]`.
    pub x0_amplitude: f64,
    pub mode: SampleMode,
    /// Trapezoid nodes per sample interval in integral mode.
    pub quad_substeps: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            ts: 0.1,
            samples: 10,
            input_amplitude: 1.0,
            x0_amplitude: 1.0,
            mode: SampleMode::Derivative,
            quad_substeps: 64,
        }
    }
}

/// Exogenous disturbance applied during an experiment or simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbanceKind {
    Zero,
    /// Redrawn uniformly from the closed Euclidean ball of the given radius
    /// on every hold interval.
    UniformBounded,
    /// Smooth per-component sinusoid with seeded frequency and phase, scaled
    /// so the Euclidean norm never exceeds the amplitude.
    Sinusoidal,
}

/// Disturbance signal description: kind plus amplitude bound.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DisturbanceSignal {
    pub kind: DisturbanceKind,
    pub amplitude: f64,
}

impl DisturbanceSignal {
    pub fn zero() -> Self {
        Self { kind: DisturbanceKind::Zero, amplitude: 0.0 }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if !self.amplitude.is_finite() || self.amplitude < 0.0 {
            return Err(DatasetError::InvalidAmplitude);
        }
        Ok(())
    }

    /// Draws a concrete realization. For `UniformBounded` the values are
    /// held per interval of length `hold`; `count` intervals are drawn.
    pub fn realize(
        &self,
        n: usize,
        hold: f64,
        count: usize,
        rng: &mut impl Rng,
    ) -> Result<DisturbanceTrace, DatasetError> {
        self.validate()?;
        Ok(match self.kind {
            DisturbanceKind::Zero => DisturbanceTrace::Zero(n),
            DisturbanceKind::UniformBounded => {
                let values = (0..count)
                    .map(|_| sample_ball(rng, n, self.amplitude))
                    .collect();
                DisturbanceTrace::Held { values, hold }
            }
            DisturbanceKind::Sinusoidal => {
                let omega = (0..n).map(|_| rng.gen_range(0.5..5.0)).collect();
                let phase = (0..n)
                    .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
                    .collect();
                DisturbanceTrace::Sinusoid {
                    omega,
                    phase,
                    scale: self.amplitude / (n as f64).sqrt(),
                }
            }
        })
    }
}

/// Concrete disturbance realization, evaluable at any time.
#[derive(Debug, Clone)]
pub enum DisturbanceTrace {
    Zero(usize),
    Held { values: Vec<DVector<f64>>, hold: f64 },
    Sinusoid { omega: Vec<f64>, phase: Vec<f64>, scale: f64 },
}

impl DisturbanceTrace {
    pub fn value(&self, t: f64) -> DVector<f64> {
        match self {
            DisturbanceTrace::Zero(n) => DVector::zeros(*n),
            DisturbanceTrace::Held { values, hold } => {
                let k = ((t / hold).floor() as usize).min(values.len() - 1);
                values[k].clone()
            }
            DisturbanceTrace::Sinusoid { omega, phase, scale } => DVector::from_iterator(
                omega.len(),
                omega
                    .iter()
                    .zip(phase)
                    .map(|(&w, &p)| scale * (w * t + p).sin()),
            ),
        }
    }
}

/// Uniform draw from the closed Euclidean ball of the given radius.
pub fn sample_ball(rng: &mut impl Rng, n: usize, radius: f64) -> DVector<f64> {
    if radius == 0.0 {
        return DVector::zeros(n);
    }
    let mut dir = DVector::zeros(n);
    loop {
        for i in 0..n {
            dir[i] = standard_normal(rng);
        }
        let norm = dir.norm();
        if norm > 1e-300 {
            let r = radius * rng.gen_range(0.0..=1.0_f64).powf(1.0 / n as f64);
            return dir * (r / norm);
        }
    }
}

/// One standard normal draw via Box-Muller. Always consumes exactly two
/// uniforms, which keeps seeded replay byte-stable.
fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Stacked experiment data. In derivative mode the columns of `x1` are state
/// derivatives at the sample instants; in integral mode `u0`, `x0` hold
/// per-interval integrals and `x1` holds state increments. Both modes obey
/// the same algebraic relation to the plant, so downstream designs never
/// branch on the mode.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrices {
    pub u0: DMatrix<f64>,
    pub x0: DMatrix<f64>,
    pub x1: DMatrix<f64>,
    pub ts: f64,
    pub mode: SampleMode,
}

impl DataMatrices {
    pub fn m(&self) -> usize {
        self.u0.nrows()
    }

    pub fn n(&self) -> usize {
        self.x0.nrows()
    }

    pub fn t_count(&self) -> usize {
        self.u0.ncols()
    }

    /// Stacked `[U0; X0]`, the matrix whose row rank decides richness.
    pub fn stacked(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.m() + self.n(), self.t_count());
        s.rows_mut(0, self.m()).copy_from(&self.u0);
        s.rows_mut(self.m(), self.n()).copy_from(&self.x0);
        s
    }
}

/// Everything an experiment produces. `d0` stacks the disturbance samples
/// that actually acted on the plant (unknown in a real experiment; kept for
/// validation), `x_samples` the state at every sample instant.
#[derive(Debug, Clone)]
pub struct ExperimentRecord {
    pub data: DataMatrices,
    pub d0: DMatrix<f64>,
    pub x_samples: Vec<DVector<f64>>,
}

/// Rank diagnosis of `[U0; X0]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RichnessReport {
    pub rank: usize,
    pub required_rank: usize,
    pub smallest_singular_value: f64,
    pub pass: bool,
}

/// Disturbance energy bound: the set of admissible disturbance matrices is
/// `{D : D D' <= Delta Delta'}` with `Delta = delta * sqrt(T) * I`.
#[derive(Debug, Clone)]
pub struct DisturbanceModel {
    pub delta: f64,
    pub t_count: usize,
    pub delta_mat: DMatrix<f64>,
}

impl DisturbanceModel {
    pub fn norm(&self) -> f64 {
        self.delta * (self.t_count as f64).sqrt()
    }

    /// Membership test `D D' <= Delta Delta'`, up to a small eigenvalue
    /// tolerance.
    pub fn contains(&self, d: &DMatrix<f64>) -> bool {
        let n = self.delta_mat.nrows();
        if d.nrows() != n || d.ncols() != self.t_count {
            return false;
        }
        let gap = &self.delta_mat * self.delta_mat.transpose() - d * d.transpose();
        let sym = (&gap + gap.transpose()) * 0.5;
        let eigs = sym.symmetric_eigenvalues();
        eigs.iter().all(|&l| l >= -1e-9 * (1.0 + self.norm().powi(2)))
    }
}

/// Builds the energy bound `Delta = delta * sqrt(T) * I_n` from a pointwise
/// amplitude bound `|d(t)| <= delta`.
pub fn disturbance_bound_from_amplitude(
    delta: f64,
    t_count: usize,
    n: usize,
) -> Result<DisturbanceModel, DatasetError> {
    if !delta.is_finite() || delta < 0.0 {
        return Err(DatasetError::InvalidAmplitude);
    }
    if t_count == 0 || n == 0 {
        return Err(DatasetError::InsufficientSamples);
    }
    let scale = delta * (t_count as f64).sqrt();
    Ok(DisturbanceModel {
        delta,
        t_count,
        delta_mat: DMatrix::identity(n, n) * scale,
    })
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid amplitude")]
    InvalidAmplitude,
    #[error("insufficient samples")]
    InsufficientSamples,
    #[error("inconsistent sample shapes")]
    InconsistentShapes,
    #[error("experiment diverged")]
    ExperimentDiverged,
    #[error("invalid plant: {0}")]
    BadPlant(&'static str),
    #[error("invalid experiment config: {0}")]
    BadConfig(&'static str),
    #[error("malformed dataset csv: {0}")]
    Csv(String),
}

/// Runs an open-loop experiment and assembles the data matrices.
///
/// Draw order from `rng` is fixed (initial state, then per-interval input,
/// then the disturbance realization), so a given seed reproduces the exact
/// same dataset.
pub fn run_experiment(
    plant: &PlantModel,
    cfg: &ExperimentConfig,
    disturbance: &DisturbanceSignal,
    rng: &mut impl Rng,
) -> Result<ExperimentRecord, DatasetError> {
    if !cfg.ts.is_finite() || cfg.ts <= 0.0 {
        return Err(DatasetError::BadConfig("sample period must be positive"));
    }
    if !cfg.input_amplitude.is_finite() || cfg.input_amplitude <= 0.0 {
        return Err(DatasetError::InvalidAmplitude);
    }
    if !cfg.x0_amplitude.is_finite() || cfg.x0_amplitude < 0.0 {
        return Err(DatasetError::InvalidAmplitude);
    }
    if cfg.quad_substeps == 0 {
        return Err(DatasetError::BadConfig("quad_substeps must be positive"));
    }
    let (n, m) = (plant.n(), plant.m());
    if cfg.samples < n + m {
        return Err(DatasetError::InsufficientSamples);
    }

    let t_count = cfg.samples;
    let x0 = DVector::from_iterator(
        n,
        (0..n).map(|_| rng.gen_range(-1.0..=1.0) * cfg.x0_amplitude),
    );
    let inputs: Vec<DVector<f64>> = (0..t_count)
        .map(|_| {
            DVector::from_iterator(
                m,
                (0..m).map(|_| rng.gen_range(-1.0..=1.0) * cfg.input_amplitude),
            )
        })
        .collect();
    let dist = disturbance.realize(n, cfg.ts, t_count, rng)?;

    // Integrate each hold interval on a fine fixed grid; quadrature nodes in
    // integral mode are a subset of the grid, so trapezoid sums see exact
    // grid states.
    let substeps = cfg.quad_substeps * 16;
    let h = cfg.ts / substeps as f64;
    let mut x = x0.clone();
    let mut x_samples = vec![x.clone()];
    let mut u0 = DMatrix::zeros(m, t_count);
    let mut x0m = DMatrix::zeros(n, t_count);
    let mut x1m = DMatrix::zeros(n, t_count);
    let mut d0 = DMatrix::zeros(n, t_count);

    for k in 0..t_count {
        let t_k = k as f64 * cfg.ts;
        let u = &inputs[k];
        if cfg.mode == SampleMode::Derivative {
            let d_now = dist.value(t_k);
            let xdot = &plant.a * &x + &plant.b * u + &d_now;
            u0.set_column(k, u);
            x0m.set_column(k, &x);
            x1m.set_column(k, &xdot);
            d0.set_column(k, &d_now);
        }

        // States on the quadrature grid, plus running trapezoid sums.
        let stride = 16;
        let mut quad_x = x.clone() * 0.5;
        let mut quad_d = dist.value(t_k) * 0.5;
        let deriv = |t: f64, y: &DVector<f64>| &plant.a * y + &plant.b * u + dist.value(t);
        for i in 0..substeps {
            let t = t_k + i as f64 * h;
            x = rk4_step(&deriv, t, &x, h);
            if !x.iter().all(|v| v.is_finite()) {
                return Err(DatasetError::ExperimentDiverged);
            }
            if (i + 1) % stride == 0 {
                let w = if i + 1 == substeps { 0.5 } else { 1.0 };
                let t_node = t_k + (i + 1) as f64 * h;
                quad_x += &x * w;
                quad_d += dist.value(t_node) * w;
            }
        }

        if cfg.mode == SampleMode::Integral {
            let g = cfg.ts / cfg.quad_substeps as f64;
            let prev = &x_samples[k];
            u0.set_column(k, &(u * cfg.ts));
            x0m.set_column(k, &(quad_x * g));
            x1m.set_column(k, &(&x - prev));
            d0.set_column(k, &(quad_d * g));
        }
        x_samples.push(x.clone());
    }

    Ok(ExperimentRecord {
        data: DataMatrices {
            u0,
            x0: x0m,
            x1: x1m,
            ts: cfg.ts,
            mode: cfg.mode,
        },
        d0,
        x_samples,
    })
}

/// One classical fourth-order Runge-Kutta step.
fn rk4_step<F>(f: &F, t: f64, y: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &(y + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(y + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(y + &k3 * h));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Stacks raw sample triples `(u, x, x1)` into data matrices. `x1` is the
/// derivative or increment column depending on mode.
pub fn assemble_matrices(
    samples: &[(DVector<f64>, DVector<f64>, DVector<f64>)],
    ts: f64,
    mode: SampleMode,
) -> Result<DataMatrices, DatasetError> {
    if samples.is_empty() {
        return Err(DatasetError::InsufficientSamples);
    }
    let m = samples[0].0.len();
    let n = samples[0].1.len();
    if n == 0 || m == 0 {
        return Err(DatasetError::InconsistentShapes);
    }
    for (u, x, x1) in samples {
        if u.len() != m || x.len() != n || x1.len() != n {
            return Err(DatasetError::InconsistentShapes);
        }
    }
    let t_count = samples.len();
    let mut u0 = DMatrix::zeros(m, t_count);
    let mut x0 = DMatrix::zeros(n, t_count);
    let mut x1 = DMatrix::zeros(n, t_count);
    for (k, (u, x, xd)) in samples.iter().enumerate() {
        u0.set_column(k, u);
        x0.set_column(k, x);
        x1.set_column(k, xd);
    }
    Ok(DataMatrices { u0, x0, x1, ts, mode })
}

/// Rank check of `[U0; X0]`: the designs need full row rank `n + m`.
///
/// Rank counts singular values above `1e-10` times the largest; the report
/// also carries the `(n+m)`-th singular value as a conditioning measure.
pub fn check_richness(data: &DataMatrices) -> RichnessReport {
    let required = data.n() + data.m();
    let svd = data.stacked().svd(false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let top = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > 1e-10 * top).count();
    let smallest = sv.get(required - 1).copied().unwrap_or(0.0);
    RichnessReport {
        rank,
        required_rank: required,
        smallest_singular_value: smallest,
        pass: rank == required,
    }
}

fn fmt_float(v: f64) -> String {
    format!("{v:e}")
}

/// Renders the dataset as CSV. Derivative mode:
/// `t,u_1..u_m,x_1..x_n,xdot_1..xdot_n`; integral mode:
/// `k,v_1..v_m,r_1..r_n,xi_1..xi_n`. Floats use shortest round-trip
/// scientific notation, so write/read/write is byte-stable.
pub fn write_csv(data: &DataMatrices) -> String {
    let (m, n) = (data.m(), data.n());
    let mut head = Vec::new();
    match data.mode {
        SampleMode::Derivative => {
            head.push("t".to_string());
            head.extend((1..=m).map(|i| format!("u_{i}")));
            head.extend((1..=n).map(|i| format!("x_{i}")));
            head.extend((1..=n).map(|i| format!("xdot_{i}")));
        }
        SampleMode::Integral => {
            head.push("k".to_string());
            head.extend((1..=m).map(|i| format!("v_{i}")));
            head.extend((1..=n).map(|i| format!("r_{i}")));
            head.extend((1..=n).map(|i| format!("xi_{i}")));
        }
    }
    let mut out = head.join(",");
    out.push('\n');
    for k in 0..data.t_count() {
        let mut row = Vec::with_capacity(1 + m + 2 * n);
        match data.mode {
            SampleMode::Derivative => row.push(fmt_float(k as f64 * data.ts)),
            SampleMode::Integral => row.push(k.to_string()),
        }
        row.extend(data.u0.column(k).iter().map(|&v| fmt_float(v)));
        row.extend(data.x0.column(k).iter().map(|&v| fmt_float(v)));
        row.extend(data.x1.column(k).iter().map(|&v| fmt_float(v)));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parses a dataset CSV produced by [`write_csv`]. The header decides the
/// mode and the dimensions. Integral-mode files carry no timestamps; the
/// parsed `ts` is zero there.
pub fn read_csv(text: &str) -> Result<DataMatrices, DatasetError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| DatasetError::Csv("empty file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let mode = match cols.first() {
        Some(&"t") => SampleMode::Derivative,
        Some(&"k") => SampleMode::Integral,
        _ => return Err(DatasetError::Csv("header must start with t or k".into())),
    };
    let u_tag = if mode == SampleMode::Derivative { "u_" } else { "v_" };
    let x_tag = if mode == SampleMode::Derivative { "x_" } else { "r_" };
    let m = cols.iter().filter(|c| c.starts_with(u_tag)).count();
    let n = cols
        .iter()
        .filter(|c| c.starts_with(x_tag) && !c.starts_with("xi_") && !c.starts_with("xdot_"))
        .count();
    if m == 0 || n == 0 || cols.len() != 1 + m + 2 * n {
        return Err(DatasetError::Csv(format!("unrecognized header: {header}")));
    }

    let mut times = Vec::new();
    let mut samples = Vec::new();
    for (idx, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(DatasetError::Csv(format!("row {} has {} fields, expected {}", idx + 1, fields.len(), cols.len())));
        }
        let parse = |s: &str| -> Result<f64, DatasetError> {
            s.parse::<f64>()
                .map_err(|_| DatasetError::Csv(format!("bad number {s:?} in row {}", idx + 1)))
        };
        times.push(parse(fields[0])?);
        let u = DVector::from_iterator(m, fields[1..1 + m].iter().map(|s| parse(s)).collect::<Result<Vec<_>, _>>()?);
        let x = DVector::from_iterator(n, fields[1 + m..1 + m + n].iter().map(|s| parse(s)).collect::<Result<Vec<_>, _>>()?);
        let x1 = DVector::from_iterator(n, fields[1 + m + n..].iter().map(|s| parse(s)).collect::<Result<Vec<_>, _>>()?);
        samples.push((u, x, x1));
    }
    let ts = match mode {
        SampleMode::Derivative if times.len() >= 2 => times[1] - times[0],
        SampleMode::Derivative => 1.0,
        SampleMode::Integral => 0.0,
    };
    assemble_matrices(&samples, ts, mode)
}
