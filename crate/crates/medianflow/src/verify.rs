//! `verify`: invariant checks at pinned seeds, each reported with its value,
//! bound and margin.

use std::fmt;
use std::sync::Arc;

use medianflow_core::chaos::{
    first_chaos_variance, geometric_sum, lns_norm_equivalence_check, lower_bound_ratio, norm_equivalence_check, ChaosSpec,
};
use medianflow_core::diagnostics::linear_fit;
use medianflow_core::flow::FlowState;
use medianflow_core::initial::annulus;
use medianflow_core::noise::{forcing_velocity_increment, sample_stationary_ou, NoiseModel, NoiseSource, RefinedNoise, RngNoise};
use medianflow_core::ops::{biot_savart, curl, div, inv_grad, leray_project};
use medianflow_core::scalar::{apply_l, apply_l_direct, OperatorKind, ScalarScheme, ScalarState};
use medianflow_core::simulation::{run, Coupled, InitialScalar, InitialVelocity, RunSpec};
use medianflow_core::transform::dealiased_product;
use medianflow_core::{DealiasFraction, SpectralField, VectorField, WaveGrid, Wavenumber};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::chaos::parallel_monte_carlo;
use crate::output::SampleRow;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bound {
    AtMost(f64),
    Above(f64),
    Equals(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub note: String,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, bound: Bound) -> Self {
        Self { name: name.into(), value, bound, note: String::new() }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    pub fn passed(&self) -> bool {
        match self.bound {
            Bound::AtMost(l) => self.value <= l,
            Bound::Above(l) => self.value > l,
            Bound::Equals(l) => self.value == l,
        }
    }

    /// Distance to the bound on the passing side; negative when failing.
    pub fn margin(&self) -> f64 {
        match self.bound {
            Bound::AtMost(l) => l - self.value,
            Bound::Above(l) => self.value - l,
            Bound::Equals(l) => 0.0 - (self.value - l).abs(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let bound = match self.bound {
            Bound::AtMost(l) => format!("<= {l:.3e}"),
            Bound::Above(l) => format!(">  {l:.3e}"),
            Bound::Equals(l) => format!("== {l}"),
        };
        write!(f, "{status}  {:<34} value={:<11.4e} {bound:<13} margin={:.3e}", self.name, self.value, self.margin())?;
        if !self.note.is_empty() {
            write!(f, "  ({})", self.note)?;
        }
        Ok(())
    }
}

fn grid(n: usize) -> Arc<WaveGrid> {
    WaveGrid::new(n, DealiasFraction::TWO_THIRDS).expect("valid grid")
}

fn random_field(g: &Arc<WaveGrid>, rng: &mut ChaCha8Rng) -> SpectralField {
    SpectralField::random(g, rng, |k| 1.0 / (1.0 + k))
}

fn rel(a: &SpectralField, b: &SpectralField) -> f64 {
    let scale = b.norm().max(f64::MIN_POSITIVE);
    (a - b).norm() / scale
}

/// Divergence left by `project` on random vector fields.
pub fn projection_divergence(project: impl Fn(&VectorField) -> VectorField, n: usize, samples: usize, seed: u64) -> f64 {
    let g = grid(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let v = VectorField::new(random_field(&g, &mut rng), random_field(&g, &mut rng)).expect("same grid");
            project(&v).divergence_defect()
        })
        .fold(0.0, f64::max)
}

/// Truncated convolution `Σ_{j+k=ℓ} f̂(j) ĝ(k)` by direct double sum.
pub fn brute_convolution(f: &SpectralField, h: &SpectralField) -> SpectralField {
    let g = f.grid();
    let fm: Vec<(Wavenumber, Complex64)> = f.modes().collect();
    let hm: Vec<(Wavenumber, Complex64)> = h.modes().collect();
    let mut acc = vec![Complex64::new(0.0, 0.0); g.len()];
    for &(j, a) in &fm {
        for &(k, b) in &hm {
            if let Some(i) = g.index_of(j + k).filter(|_| g.is_active(j + k)) {
                acc[i] += a * b;
            }
        }
    }
    f.map(|i, _| acc[i])
}

pub fn operator_identities(n: usize, samples: usize, seed: u64) -> Vec<Check> {
    let g = grid(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut bs_div, mut curl_bs, mut div_ig, mut product) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..samples {
        let w = random_field(&g, &mut rng);
        let u = biot_savart(&w);
        bs_div = bs_div.max(u.divergence_defect());
        curl_bs = curl_bs.max(rel(&curl(&u), &w));
        // The multiplier ιk/|k|² composes with div to -Id.
        div_ig = div_ig.max(rel(&div(&inv_grad(&w)).scaled(-1.0), &w));
        let h = random_field(&g, &mut rng);
        product = product.max(rel(&dealiased_product(&w, &h).expect("same grid"), &brute_convolution(&w, &h)));
    }
    vec![
        Check::new("leray divergence", projection_divergence(leray_project, n, samples, seed), Bound::AtMost(1e-12)),
        Check::new("biot_savart divergence", bs_div, Bound::AtMost(1e-12)),
        Check::new("curl o biot_savart = id", curl_bs, Bound::AtMost(1e-12)),
        Check::new("div o inv_grad = -id", div_ig, Bound::AtMost(1e-12)),
        Check::new(format!("dealiased product, n={n}"), product, Bound::AtMost(1e-10)),
    ]
}

/// Largest relative gap between the pseudo-spectral and the direct LNS operator.
pub fn lns_equivalence(n: usize, samples: usize, seed: u64) -> Check {
    let g = grid(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let w = random_field(&g, &mut rng);
        let rho = random_field(&g, &mut rng);
        let fast = apply_l(&biot_savart(&w), &rho, OperatorKind::Lns).expect("same grid");
        let direct = apply_l_direct(&w, &rho).expect("small grid");
        worst = worst.max(rel(&fast, &direct));
    }
    Check::new(format!("LNS vs direct sum, {samples} inputs"), worst, Bound::AtMost(1e-10))
}

/// z-score of the sample mean of `xs` against `expected`.
fn z_score(xs: &[f64], expected: f64) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean - expected) / (var / n).sqrt()
}

/// Per-test |z| threshold keeping the family-wise level of a single 3 SE test
/// over `tests` independent estimates.
pub fn sidak_threshold(tests: usize) -> f64 {
    let normal = Normal::standard();
    let level = 2.0 * normal.cdf(-3.0);
    let per_test = 1.0 - (1.0 - level).powf(1.0 / tests as f64);
    -normal.inverse_cdf(per_test / 2.0)
}

/// One family of covariance estimates: each sample row holds the statistic
/// of every estimate, already centred on its prediction and scaled by the
/// predicted variance.
struct Family {
    name: &'static str,
    rows: Vec<Vec<f64>>,
}

impl Family {
    fn checks(&self) -> [Check; 2] {
        let m = self.rows[0].len();
        let column = |e: usize| self.rows.iter().map(|r| r[e]).collect::<Vec<f64>>();
        let worst = (0..m).map(|e| z_score(&column(e), 0.0).abs()).fold(0.0, f64::max);
        let pooled: Vec<f64> = self.rows.iter().map(|r| r.iter().sum::<f64>() / m as f64).collect();
        [
            Check::new(format!("noise {} pooled |z|", self.name), z_score(&pooled, 0.0).abs(), Bound::AtMost(3.0))
                .with_note(format!("{m} estimates, {} samples", self.rows.len())),
            Check::new(format!("noise {} max |z|", self.name), worst, Bound::AtMost(sidak_threshold(m))),
        ]
    }
}

/// Forcing-increment covariance against `σ²h|k|^{-a} k^⊥k^⊥ᵀ/|k|²` per mode
/// and zero between distinct modes.
pub fn noise_law(n: usize, samples: usize, h: f64, seed: u64) -> Vec<Check> {
    let g = grid(n);
    let (alpha, sigma) = (12.0, 1.3);
    let model = NoiseModel::new(&g, alpha, sigma, seed).expect("valid model");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reps: Vec<usize> = g.pair_representatives().iter().copied().filter(|&i| g.conj_index(i) != i).collect();
    let var: Vec<f64> = reps.iter().map(|&i| sigma * sigma * h * g.ksq(i).powf(-alpha / 2.0)).collect();
    let low: Vec<usize> = (0..reps.len()).filter(|&a| g.ksq(reps[a]) <= 5.0).collect();
    let pairs: Vec<(usize, usize)> =
        low.iter().enumerate().flat_map(|(p, &a)| low[p + 1..].iter().map(move |&b| (a, b))).collect();

    let mut fams = [
        Family { name: "variance", rows: Vec::new() },
        Family { name: "cross-component", rows: Vec::new() },
        Family { name: "pseudo-covariance", rows: Vec::new() },
        Family { name: "cross-mode", rows: Vec::new() },
    ];
    for _ in 0..samples {
        let d = forcing_velocity_increment(&model, h, &mut rng);
        let u: Vec<(Complex64, Complex64)> = reps.iter().map(|&i| (d.c1.coeffs()[i], d.c2.coeffs()[i])).collect();
        let (mut v, mut cc, mut ps, mut cm) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (e, &i) in reps.iter().enumerate() {
            let k = g.wavenumber(i);
            let (a, b) = u[e];
            v.push((a.norm_sqr() + b.norm_sqr()) / var[e] - 1.0);
            // k^⊥ = (k2, -k1): E[û₁ conj(û₂)] = -var k1 k2 / |k|².
            cc.push((a * b.conj()).re / var[e] + (k.k1 * k.k2) as f64 / g.ksq(i));
            // Circular symmetry: E[û₁²] = 0 wherever û₁ is not identically zero.
            if k.k2 != 0 {
                ps.push((a * a).re / var[e]);
            }
        }
        for &(x, y) in &pairs {
            let c = u[x].0 * u[y].0.conj() + u[x].1 * u[y].1.conj();
            let s = (var[x] * var[y]).sqrt();
            cm.push(c.re / s);
            cm.push(c.im / s);
        }
        for (f, row) in fams.iter_mut().zip([v, cc, ps, cm]) {
            f.rows.push(row);
        }
    }
    fams.iter().flat_map(Family::checks).collect()
}

fn heat_spec(n: usize, kappa: f64, m: i64, t_total: f64, dt: f64) -> RunSpec {
    let g = grid(n);
    RunSpec {
        flow_grid: Arc::clone(&g),
        scalar_grid: g,
        alpha: 12.0,
        sigma: 0.0,
        kappa,
        kind: OperatorKind::Adv,
        scheme: ScalarScheme::Euler,
        dt,
        t_burn: 0.0,
        t_total,
        c_cfl: 0.5,
        u0: InitialVelocity::Zero,
        rho0: InitialScalar::SingleMode(m),
        record_every: 1,
    }
}

/// `u ≡ 0`, `σ = 0`, `ϱ₀` a single pair at `|k| = m`: `λ̂ = -κm²` exactly.
pub fn pure_heat(kappas: &[f64], m: i64) -> Vec<Check> {
    let (mut lam_err, mut fk_err) = (0.0_f64, 0.0_f64);
    let mut neg = Vec::new();
    for &kappa in kappas {
        let s = run(&heat_spec(16, kappa, m, 2.0, 0.01), 0, |_| Ok(())).expect("heat run");
        let l = s.lambda.expect("enough samples").lambda;
        lam_err = lam_err.max((l + kappa * (m * m) as f64).abs());
        fk_err = fk_err.max(s.fk.residual().abs());
        neg.push(-l);
    }
    let lx: Vec<f64> = kappas.iter().map(|k| k.ln()).collect();
    let ly: Vec<f64> = neg.iter().map(|v| v.ln()).collect();
    let slope = linear_fit(&lx, &ly).map(|f| f.0).unwrap_or(f64::NAN);
    vec![
        Check::new("pure heat |lambda + kappa m^2|", lam_err, Bound::AtMost(1e-10)),
        Check::new("pure heat FK residual", fk_err, Bound::AtMost(1e-10)),
        Check::new("pure heat slope |s - 1|", (slope - 1.0).abs(), Bound::AtMost(1e-6)),
    ]
}

/// FK residual and time-average growth rate of one run driven by `noise`.
pub fn fk_run<S: NoiseSource>(noise: S, g: &Arc<WaveGrid>, kind: OperatorKind, kappa: f64, h: f64, t: f64, seed: u64) -> (f64, f64) {
    let model = noise.model().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let flow = FlowState::new(model.vorticity_from(&sample_stationary_ou(&model, &mut rng)), 0.0);
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(1);
    let rho = annulus(g, 4, &mut r).expect("resolvable");
    let sc = ScalarState::new(&rho, kind, kappa).expect("valid scalar");
    let mut c = Coupled::new(flow, noise, sc, ScalarScheme::Euler, 0.5).expect("valid run");
    let steps = (t / h).round() as usize;
    for _ in 0..steps {
        c.step(h).expect("step");
    }
    (c.fk().residual(), c.fk().log_growth / t)
}

/// FK identity at step `h` and its refinement at `h/2` on the same Brownian path.
pub fn fk_identity(n: usize, kind: OperatorKind, kappa: f64, h: f64, t: f64, seed: u64) -> Vec<Check> {
    let g = grid(n);
    let model = NoiseModel::new(&g, 12.0, 1.0, seed).expect("valid model");
    let coarse = fk_run(RefinedNoise::new(RngNoise::new(model.clone()), 2), &g, kind, kappa, h, t, seed);
    let fine = fk_run(RngNoise::new(model), &g, kind, kappa, h / 2.0, t, seed);
    let rel_res = (coarse.0 / t).abs() / coarse.1.abs();
    let ratio = coarse.0 / fine.0;
    let q = 2.5;
    vec![
        Check::new(format!("FK {kind} |res|/T / |lambda|"), rel_res, Bound::AtMost(0.02))
            .with_note(format!("lambda={:.4}, C_emp={:.3e}", coarse.1, (-coarse.1).max(0.0) * kappa.powf(q))),
        Check::new(format!("FK {kind} halving |ratio/2 - 1|"), (ratio / 2.0 - 1.0).abs(), Bound::AtMost(0.2))
            .with_note(format!("ratio={ratio:.4}")),
    ]
}

/// Monte Carlo against the closed form for the total first-chaos variance,
/// as a multiple of the allowed gap `max(5%, 3 SE)`.
pub fn chaos_oracle(n: usize, kind: OperatorKind, k_max: i64, kappa: f64, m: u64, paths: u64, seed: u64) -> Check {
    let g = grid(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho0 = annulus(&g, m, &mut rng).expect("resolvable");
    let mut spec = ChaosSpec::at_t_star(&rho0, kappa, m as f64, kind, 12.0).expect("valid spec");
    spec.k_max = k_max;
    let closed = first_chaos_variance(&spec).expect("closed form").total;
    let mc = parallel_monte_carlo(&spec, seed, paths, medianflow_core::chaos::DEFAULT_MC_STEP).expect("monte carlo");
    let allowed = (0.05 * closed).max(3.0 * mc.total_stderr);
    Check::new(format!("chaos {kind} |mc - closed| / allowed"), (mc.total - closed).abs() / allowed, Bound::AtMost(1.0))
        .with_note(format!("closed={closed:.4e} mc={:.4e} se={:.2e} paths={paths}", mc.total, mc.total_stderr))
}

/// `lower_bound_ratio` over a (κ, M) grid with every resolved noise mode:
/// positive, with a bounded spread.
pub fn lower_bound_structure(kind: OperatorKind, kappas: &[f64], ms: &[u64], seed: u64) -> Vec<Check> {
    let m_top = *ms.iter().max().expect("levels");
    let n = (((3 * m_top + 2) / 2 + 1) as usize * 2).max(16);
    let g = grid(n);
    let mut ratios = Vec::new();
    for &m in ms {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho0 = annulus(&g, m, &mut rng).expect("resolvable");
        for &kappa in kappas {
            let spec = ChaosSpec::at_t_star(&rho0, kappa, m as f64, kind, 12.0).expect("valid spec");
            ratios.push(lower_bound_ratio(&spec, m as f64).expect("ratio"));
        }
    }
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().copied().fold(0.0, f64::max);
    vec![
        Check::new(format!("lower bound {kind} min ratio"), min, Bound::Above(0.0)).with_note(format!("n={n}")),
        Check::new(format!("lower bound {kind} max/min"), max / min, Bound::AtMost(50.0)),
    ]
}

/// `geometric_sum((1,0))` and `min geometric_sum(k)/|k|⁴` over `1 ≤ |k| ≤ radius`.
pub fn geometric(radius: i64) -> Vec<Check> {
    let mut c = f64::INFINITY;
    for k1 in -radius..=radius {
        for k2 in -radius..=radius {
            let k = Wavenumber::new(k1, k2);
            let r2 = k.norm_sq();
            if r2 == 0 || r2 > radius * radius {
                continue;
            }
            let s = geometric_sum(k).expect("nonzero k") as f64;
            c = c.min(s / (r2 * r2) as f64);
        }
    }
    vec![
        Check::new("geometric_sum((1,0))", geometric_sum(Wavenumber::new(1, 0)).expect("nonzero") as f64, Bound::Equals(34.0)),
        Check::new("geometric c = min sum/|k|^4", c, Bound::Above(0.0)).with_note(format!("1 <= |k| <= {radius}")),
    ]
}

/// Spread `max/min` of the equivalence ratios over random fields with equal
/// expected energy per mode in the norm on the right-hand side.
pub fn norm_equivalence(n: usize, samples: usize, alphas: &[f64], seed: u64) -> Vec<Check> {
    let g = grid(n);
    let mut out = Vec::new();
    for &alpha in alphas {
        for (label, lns) in [("adv", false), ("lns", true)] {
            let s = if lns { alpha + 1.0 } else { alpha };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ratios: Vec<f64> = (0..samples)
                .map(|_| {
                    let f = SpectralField::random(&g, &mut rng, |k| k.powf(s));
                    let (lhs, rhs) = if lns { lns_norm_equivalence_check(&f, alpha) } else { norm_equivalence_check(&f, alpha) };
                    lhs / rhs
                })
                .collect();
            let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
            let max = ratios.iter().copied().fold(0.0, f64::max);
            out.push(
                Check::new(format!("norm equivalence {label} a={alpha} band"), max / min, Bound::AtMost(5.0))
                    .with_note(format!("ratios in [{min:.3e}, {max:.3e}]")),
            );
        }
    }
    out
}

/// Time-series CSV bytes of one short run.
pub fn timeseries_bytes(spec: &RunSpec, seed: u64) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    run(spec, seed, |s| {
        w.serialize(SampleRow::from(s)).expect("in-memory csv");
        Ok(())
    })
    .expect("run");
    w.into_inner().expect("in-memory csv")
}

/// Two runs of the same seeded configuration must write identical bytes.
pub fn determinism(seed: u64) -> Check {
    let g = grid(32);
    let spec = RunSpec {
        flow_grid: Arc::clone(&g),
        scalar_grid: g,
        alpha: 12.0,
        sigma: 1.0,
        kappa: 0.05,
        kind: OperatorKind::Lns,
        scheme: ScalarScheme::Rk3,
        dt: 0.01,
        t_burn: 0.5,
        t_total: 2.0,
        c_cfl: 0.5,
        u0: InitialVelocity::Stationary,
        rho0: InitialScalar::Annulus(4),
        record_every: 5,
    };
    let a = timeseries_bytes(&spec, seed);
    let b = timeseries_bytes(&spec, seed);
    let differing = a.iter().zip(&b).filter(|(x, y)| x != y).count() + a.len().abs_diff(b.len());
    Check::new("determinism: differing CSV bytes", differing as f64, Bound::Equals(0.0)).with_note(format!("{} bytes", a.len()))
}

/// Suite sizes: `full` uses the acceptance sizes (minus the median ensemble).
pub fn suite(full: bool) -> Vec<Check> {
    let seed = 20_240_601;
    let mut out = operator_identities(16, if full { 20 } else { 5 }, seed);
    out.push(lns_equivalence(16, if full { 100 } else { 20 }, seed));
    out.extend(noise_law(16, 10_000, 0.01, seed));
    out.extend(pure_heat(&[0.05, 0.1, 0.2, 0.4], 3));
    let (n, t) = if full { (64, 20.0) } else { (32, 4.0) };
    for kind in [OperatorKind::Adv, OperatorKind::Lns] {
        out.extend(fk_identity(n, kind, 0.05, 1e-3, t, 7));
    }
    let paths = if full { 2000 } else { 400 };
    for kind in [OperatorKind::Adv, OperatorKind::Lns] {
        out.push(chaos_oracle(32, kind, 8, 0.1, 8, paths, seed));
    }
    for kind in [OperatorKind::Adv, OperatorKind::Lns] {
        out.extend(lower_bound_structure(kind, &[0.05, 0.1, 0.2], &[8, 12, 16, 24], seed));
    }
    out.extend(geometric(100));
    out.extend(norm_equivalence(32, if full { 100 } else { 10 }, &[2.0, 2.5, 6.0], seed));
    out.push(determinism(seed));
    out
}
