//! Chebyshev collocation for the survival-function recursion.
//!
//! On each piece of the continuation region the survival function is expanded
//! in shifted Chebyshev polynomials and matched at the Chebyshev nodes. The
//! kernel matrix `K[r][s] = ∫ T_s(z) δ(z_r, z) dz` does not depend on the run
//! length, so it is assembled once and the recursion becomes a matrix power.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::chart::{ChartConfig, Limits, Sided};
use crate::error::{Error, Result};
use crate::numerics::{chebyshev_all, chebyshev_nodes, legendre_reference, ChiSquare};

use super::RunLengthModel;

/// Upper-tail probabilities of the χ² variable at which kernel integrals are split.
const SPLIT_TAILS: [f64; 3] = [0.5, 1e-4, 1e-12];

/// Integrates functions of the next EWMA value against the one-step density.
///
/// Works in the χ² variable `x = scale · (z − (1−λ) z0)` with
/// `scale = (n−1) / (λ σ²)`, where the density is a plain χ²_{n−1} density.
#[derive(Debug, Clone)]
pub(crate) struct TransitionIntegrator {
    retain: f64,
    scale: f64,
    chi: ChiSquare,
    half_df: f64,
    log_norm: f64,
    breaks: [f64; 3],
    rule: Arc<(Vec<f64>, Vec<f64>)>,
}

impl TransitionIntegrator {
    pub(crate) fn new(config: &ChartConfig, sigma2: f64, nodes: usize) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::domain(format!(
                "variance must be positive, got {sigma2}"
            )));
        }
        let df = config.df() as f64;
        let chi = ChiSquare::new(df)?;
        let mut breaks = [0.0; 3];
        for (b, &q) in breaks.iter_mut().zip(&SPLIT_TAILS) {
            *b = chi.quantile_upper(q)?;
        }
        let half_df = 0.5 * df;
        Ok(Self {
            retain: 1.0 - config.lambda,
            scale: df / (config.lambda * sigma2),
            chi,
            half_df,
            log_norm: half_df * 2.0_f64.ln() + crate::numerics::ln_gamma(half_df),
            breaks,
            rule: legendre_reference(nodes),
        })
    }

    pub(crate) fn scale(&self) -> f64 {
        self.scale
    }

    pub(crate) fn chi(&self) -> &ChiSquare {
        &self.chi
    }

    #[inline]
    fn pdf(&self, x: f64) -> f64 {
        ((self.half_df - 1.0) * x.ln() - 0.5 * x - self.log_norm).exp()
    }

    /// Probability of moving from `z0` into `(a, b]`.
    pub(crate) fn mass(&self, z0: f64, a: f64, b: f64) -> f64 {
        let start = self.retain * z0;
        let xa = (self.scale * (a - start)).max(0.0);
        let xb = (self.scale * (b - start)).max(0.0);
        self.chi.interval(xa, xb)
    }

    /// Visit quadrature points `(z, weight · density)` covering `[a, b] ∩ support(z0)`.
    pub(crate) fn for_each_point<F: FnMut(f64, f64)>(&self, z0: f64, a: f64, b: f64, mut f: F) {
        let start = self.retain * z0;
        let a = a.max(start);
        if a >= b {
            return;
        }
        let xa = self.scale * (a - start);
        let xb = self.scale * (b - start);
        let mut cuts = Vec::with_capacity(5);
        cuts.push(xa);
        cuts.extend(self.breaks.iter().copied().filter(|&x| x > xa && x < xb));
        cuts.push(xb);
        let (ref_nodes, ref_weights) = (&self.rule.0, &self.rule.1);
        for (k, seg) in cuts.windows(2).enumerate() {
            let (u, v) = (seg[0], seg[1]);
            if k == 0 {
                // x = t², removes the x^{(n−3)/2} behaviour at the support edge
                let (tu, tv) = (u.sqrt(), v.sqrt());
                let (mid, half) = (0.5 * (tu + tv), 0.5 * (tv - tu));
                for (t, w) in ref_nodes.iter().zip(ref_weights) {
                    let t = mid + half * t;
                    let x = t * t;
                    f(start + x / self.scale, half * w * 2.0 * t * self.pdf(x));
                }
            } else {
                let (mid, half) = (0.5 * (u + v), 0.5 * (v - u));
                for (t, w) in ref_nodes.iter().zip(ref_weights) {
                    let x = mid + half * t;
                    f(start + x / self.scale, half * w * self.pdf(x));
                }
            }
        }
    }

    /// Lower end of the support of the next value.
    pub(crate) fn support_start(&self, z0: f64) -> f64 {
        self.retain * z0
    }
}

/// Piecewise shifted-Chebyshev basis with its precomputed kernel matrix.
#[derive(Debug, Clone)]
pub struct CollocationBasis {
    size: usize,
    pieces: Vec<(f64, f64)>,
    nodes: Vec<f64>,
    kernel: Vec<f64>,
    integrator: TransitionIntegrator,
    limits: Limits,
}

impl CollocationBasis {
    /// Assemble the basis for a chart, in-control-relative variance `sigma2` and limits.
    ///
    /// `size` is the number of Chebyshev polynomials per piece. Two-sided charts
    /// split the continuation region at `c_l / (1 − λ)`, where the lower limit
    /// starts to cut into the one-step support.
    pub fn build(config: &ChartConfig, sigma2: f64, limits: &Limits, size: usize) -> Result<Self> {
        config.validate()?;
        limits.validate_for(config)?;
        if size < 2 {
            return Err(Error::domain(format!(
                "collocation needs at least 2 basis functions, got {size}"
            )));
        }
        let integrator = TransitionIntegrator::new(config, sigma2, 3 * size)?;
        let pieces = pieces(config, limits);
        let mut nodes = Vec::with_capacity(pieces.len() * size);
        for &(lo, hi) in &pieces {
            nodes.extend(chebyshev_nodes(size, lo, hi)?);
        }
        let dim = nodes.len();
        let mut basis = Self {
            size,
            pieces,
            nodes,
            kernel: vec![0.0; dim * dim],
            integrator,
            limits: *limits,
        };
        let mut kernel = vec![0.0; dim * dim];
        for (r, row) in kernel.chunks_mut(dim).enumerate() {
            basis.kernel_row_into(basis.nodes[r], row);
        }
        basis.kernel = kernel;
        Ok(basis)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pieces(&self) -> &[(f64, f64)] {
        &self.pieces
    }

    /// Collocation nodes, piece by piece.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    /// Row-major `dim × dim` matrix of `∫ T_s(z) δ(z_r, z) dz`.
    pub fn kernel_matrix(&self) -> &[f64] {
        &self.kernel
    }

    /// Integrals `∫ T_s(z) δ(z0, z) dz` over the continuation region for all basis functions.
    pub fn kernel_row(&self, z0: f64) -> Vec<f64> {
        let mut row = vec![0.0; self.dim()];
        self.kernel_row_into(z0, &mut row);
        row
    }

    fn kernel_row_into(&self, z0: f64, row: &mut [f64]) {
        let n = self.size;
        let mut cheb = vec![0.0; n];
        row.iter_mut().for_each(|v| *v = 0.0);
        for (j, &(lo, hi)) in self.pieces.iter().enumerate() {
            let out = &mut row[j * n..(j + 1) * n];
            let (mid, half) = (0.5 * (hi + lo), 0.5 * (hi - lo));
            self.integrator.for_each_point(z0, lo, hi, |z, w| {
                chebyshev_all(((z - mid) / half).clamp(-1.0, 1.0), &mut cheb);
                for (o, t) in out.iter_mut().zip(&cheb) {
                    *o += w * t;
                }
            });
            // constant column in closed form
            out[0] = self.integrator.mass(z0, lo, hi);
        }
    }

    /// Turn the basis into the survival recursion started from `z0`.
    pub fn into_model(self, z0: f64) -> RunLengthModel {
        let n = self.size;
        let dim = self.dim();
        // node values -> coefficients, identical for every piece
        let mut to_coef = vec![0.0; n * n];
        let mut cheb = vec![0.0; n];
        for r in 0..n {
            let x = ((2 * r + 1) as f64 * PI / (2 * n) as f64).cos();
            chebyshev_all(x, &mut cheb);
            for s in 0..n {
                let scale = if s == 0 { 1.0 } else { 2.0 };
                to_coef[s * n + r] = scale / n as f64 * cheb[s];
            }
        }
        let to_values = |krow: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; dim];
            for j in 0..self.pieces.len() {
                let kk = &krow[j * n..(j + 1) * n];
                for r in 0..n {
                    out[j * n + r] = (0..n).map(|s| kk[s] * to_coef[s * n + r]).sum();
                }
            }
            out
        };
        let mut transition = Vec::with_capacity(dim * dim);
        for row in self.kernel.chunks(dim) {
            transition.extend(to_values(row));
        }
        let start_krow = self.kernel_row(z0);
        let start = to_values(&start_krow);

        let p1_nodes: Vec<f64> = self
            .kernel
            .chunks(dim)
            .map(|row| (0..self.pieces.len()).map(|j| row[j * n]).sum())
            .collect();
        let q1_nodes: Vec<f64> = self.nodes.iter().map(|&z| self.exit_prob(z)).collect();
        let p1_start: f64 = (0..self.pieces.len()).map(|j| start_krow[j * n]).sum();
        RunLengthModel {
            dim,
            transition,
            start,
            p1_nodes,
            q1_nodes,
            p1_start,
            q1_start: self.exit_prob(z0),
            rescue: None,
        }
    }

    /// One-step alarm probability from `z0`, without cancellation.
    fn exit_prob(&self, z0: f64) -> f64 {
        exit_probability(&self.integrator, &self.limits, z0)
    }
}

pub(crate) fn exit_probability(integ: &TransitionIntegrator, limits: &Limits, z0: f64) -> f64 {
    let start = integ.support_start(z0);
    let scale = integ.scale();
    let above = integ.chi().sf((scale * (limits.upper - start)).max(0.0));
    let below = match limits.lower {
        Some(c_l) if c_l > start => integ.chi().cdf(scale * (c_l - start)),
        _ => 0.0,
    };
    (above + below).min(1.0)
}

fn pieces(config: &ChartConfig, limits: &Limits) -> Vec<(f64, f64)> {
    match (config.sided, limits.lower) {
        (Sided::TwoSided, Some(c_l)) if c_l > 0.0 && config.lambda < 1.0 => {
            let kink = c_l / (1.0 - config.lambda);
            if kink < limits.upper {
                vec![(c_l, kink), (kink, limits.upper)]
            } else {
                vec![(c_l, limits.upper)]
            }
        }
        _ => vec![(limits.lower_or_zero(), limits.upper)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_constant_column_matches_quadrature() {
        let cfg = ChartConfig::upper(0.1, 5).unwrap();
        let basis = CollocationBasis::build(&cfg, 1.0, &Limits::upper(1.6453), 20).unwrap();
        let integ = TransitionIntegrator::new(&cfg, 1.0, 60).unwrap();
        for &z in basis.nodes() {
            let mut total = 0.0;
            integ.for_each_point(z, 0.0, 1.6453, |_, w| total += w);
            let exact = basis.kernel_row(z)[0];
            assert!((total - exact).abs() < 1e-13, "{total} vs {exact}");
        }
    }

    #[test]
    fn two_sided_split_point() {
        let cfg = ChartConfig::two_sided(0.1, 5).unwrap();
        let basis =
            CollocationBasis::build(&cfg, 1.0, &Limits::two_sided(0.6259, 1.5496), 10).unwrap();
        assert_eq!(basis.pieces().len(), 2);
        assert!((basis.pieces()[0].1 - 0.6259 / 0.9).abs() < 1e-15);
        assert_eq!(basis.dim(), 20);
        let shewhart = ChartConfig::two_sided(1.0, 5).unwrap();
        let b = CollocationBasis::build(&shewhart, 1.0, &Limits::two_sided(0.01, 6.0), 10).unwrap();
        assert_eq!(b.pieces().len(), 1);
    }

    #[test]
    fn rejects_small_basis() {
        let cfg = ChartConfig::upper(0.1, 5).unwrap();
        assert!(CollocationBasis::build(&cfg, 1.0, &Limits::upper(1.5), 1).is_err());
        assert!(CollocationBasis::build(&cfg, -1.0, &Limits::upper(1.5), 10).is_err());
    }
}
