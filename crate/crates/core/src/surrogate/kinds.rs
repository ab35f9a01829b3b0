use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{
    check_tau, complement, gather, scatter, QuadraticHessian, QuadraticModel, Surrogate,
    SurrogateError,
};
use crate::problem::LocalCost;

fn prox_term(x: &DVector<f64>, a: &DVector<f64>, tau: f64) -> f64 {
    0.5 * tau * (x - a).norm_squared()
}

fn validate_split(dim: usize, idx: &[usize]) -> Result<(), SurrogateError> {
    if idx.is_empty() || idx.len() >= dim {
        return Err(SurrogateError::InvalidBlocks(format!(
            "a split needs between 1 and {} coordinates, got {}",
            dim.saturating_sub(1),
            idx.len()
        )));
    }
    let mut seen = vec![false; dim];
    for &k in idx {
        if k >= dim {
            return Err(SurrogateError::InvalidBlocks(format!("index {k} out of range 0..{dim}")));
        }
        if std::mem::replace(&mut seen[k], true) {
            return Err(SurrogateError::InvalidBlocks(format!("index {k} repeated")));
        }
    }
    Ok(())
}

/// `f(a) + ∇f(a)ᵀ(x − a) + τ/2 ‖x − a‖²`.
#[derive(Clone)]
pub struct Linearize {
    cost: Arc<dyn LocalCost>,
    tau: f64,
}

impl Linearize {
    pub fn new(cost: Arc<dyn LocalCost>, tau: f64) -> Result<Self, SurrogateError> {
        check_tau("linearize", tau, false)?;
        Ok(Self { cost, tau })
    }
}

impl Surrogate for Linearize {
    fn name(&self) -> &'static str {
        "linearize"
    }
    fn dim(&self) -> usize {
        self.cost.dim()
    }
    fn tau(&self) -> f64 {
        self.tau
    }
    fn value(&self, x: &DVector<f64>, a: &DVector<f64>) -> f64 {
        self.cost.value(a) + self.cost.gradient(a).dot(&(x - a)) + prox_term(x, a, self.tau)
    }
    fn gradient(&self, x: &DVector<f64>, a: &DVector<f64>) -> DVector<f64> {
        self.cost.gradient(a) + (x - a) * self.tau
    }
    fn quadratic(&self, a: &DVector<f64>) -> Option<QuadraticModel> {
        Some(QuadraticModel {
            hessian: QuadraticHessian::ScaledIdentity(self.tau),
            gradient: self.cost.gradient(a),
        })
    }
    fn smoothness(&self, _a: &DVector<f64>) -> Option<f64> {
        Some(self.tau)
    }
}

/// `f(x) + τ/2 ‖x − a‖²` for convex `f`; `τ = 0` is allowed when `f` is
/// strongly convex.
#[derive(Clone)]
pub struct KeepConvex {
    cost: Arc<dyn LocalCost>,
    tau: f64,
}

impl KeepConvex {
    pub fn new(cost: Arc<dyn LocalCost>, tau: f64) -> Result<Self, SurrogateError> {
        let curv = cost.curvature();
        if !curv.is_convex() {
            return Err(SurrogateError::NotConvex { kind: "keep-convex" });
        }
        check_tau("keep-convex", tau, curv.modulus() > 0.0)?;
        Ok(Self { cost, tau })
    }
}

impl Surrogate for KeepConvex {
    fn name(&self) -> &'static str {
        "keep-convex"
    }
    fn dim(&self) -> usize {
        self.cost.dim()
    }
    fn tau(&self) -> f64 {
        self.tau
    }
    fn modulus(&self) -> f64 {
        self.tau + self.cost.curvature().modulus()
    }
    fn value(&self, x: &DVector<f64>, a: &DVector<f64>) -> f64 {
        self.cost.value(x) + prox_term(x, a, self.tau)
    }
    fn gradient(&self, x: &DVector<f64>, a: &DVector<f64>) -> DVector<f64> {
        self.cost.gradient(x) + (x - a) * self.tau
    }
    fn quadratic(&self, a: &DVector<f64>) -> Option<QuadraticModel> {
        if !self.cost.is_quadratic() {
            return None;
        }
        let mut h = self.cost.hessian(a)?;
        for k in 0..h.nrows() {
            h[(k, k)] += self.tau;
        }
        Some(QuadraticModel {
            hessian: QuadraticHessian::Dense(h),
            gradient: self.cost.gradient(a),
        })
    }
    fn smoothness(&self, _a: &DVector<f64>) -> Option<f64> {
        self.cost.lipschitz_hint().map(|l| l + self.tau)
    }
}

/// `f(a) + ∇f(a)ᵀ(x − a) + ½ (x − a)ᵀ(∇²f(a) + τI)(x − a)` for convex `f`.
#[derive(Clone)]
pub struct Newton {
    cost: Arc<dyn LocalCost>,
    tau: f64,
}

impl Newton {
    pub fn new(cost: Arc<dyn LocalCost>, tau: f64) -> Result<Self, SurrogateError> {
        check_tau("newton", tau, false)?;
        if !cost.curvature().is_convex() {
            return Err(SurrogateError::NotConvex { kind: "newton" });
        }
        if cost.hessian(&DVector::zeros(cost.dim())).is_none() {
            return Err(SurrogateError::MissingHessian);
        }
        Ok(Self { cost, tau })
    }

    fn hessian(&self, a: &DVector<f64>) -> DMatrix<f64> {
        let h = self.cost.hessian(a).expect("checked at construction");
        (&h + h.transpose()) * 0.5
    }
}

impl Surrogate for Newton {
    fn name(&self) -> &'static str {
        "newton"
    }
    fn dim(&self) -> usize {
        self.cost.dim()
    }
    fn tau(&self) -> f64 {
        self.tau
    }
    fn value(&self, x: &DVector<f64>, a: &DVector<f64>) -> f64 {
        let d = x - a;
        self.cost.value(a)
            + self.cost.gradient(a).dot(&d)
            + 0.5 * d.dot(&(self.hessian(a) * &d))
            + prox_term(x, a, self.tau)
    }
    fn gradient(&self, x: &DVector<f64>, a: &DVector<f64>) -> DVector<f64> {
        let d = x - a;
        self.cost.gradient(a) + self.hessian(a) * &d + d * self.tau
    }
    fn quadratic(&self, a: &DVector<f64>) -> Option<QuadraticModel> {
        let mut h = self.hessian(a);
        for k in 0..h.nrows() {
            h[(k, k)] += self.tau;
        }
        Some(QuadraticModel {
            hessian: QuadraticHessian::Dense(h),
            gradient: self.cost.gradient(a),
        })
    }
    fn validate_anchor(&self, a: &DVector<f64>) -> Result<(), SurrogateError> {
        let eig = self.hessian(a).symmetric_eigenvalues();
        let min = eig.min();
        let scale = eig.amax().max(1.0);
        if !min.is_finite() {
            return Err(SurrogateError::NonFinite);
        }
        if min < -1e-10 * scale {
            return Err(SurrogateError::IndefiniteHessian { min_eig: min });
        }
        Ok(())
    }
}

/// Keeps `f` in the coordinates where it is convex (others frozen at the
/// anchor) and linearizes it in the rest:
/// `f(x₁, a₂) + ∇₂f(a)ᵀ(x₂ − a₂) + τ/2 ‖x − a‖²`.
#[derive(Clone)]
pub struct PartialLinearize {
    cost: Arc<dyn LocalCost>,
    convex: Vec<usize>,
    rest: Vec<usize>,
    tau: f64,
}

impl PartialLinearize {
    pub fn new(cost: Arc<dyn LocalCost>, convex: Vec<usize>, tau: f64) -> Result<Self, SurrogateError> {
        check_tau("partial-linearize", tau, false)?;
        validate_split(cost.dim(), &convex)?;
        let rest = complement(cost.dim(), &convex);
        Ok(Self {
            cost,
            convex,
            rest,
            tau,
        })
    }

    fn frozen(&self, x: &DVector<f64>, a: &DVector<f64>) -> DVector<f64> {
        scatter(a, &self.convex, &gather(x, &self.convex))
    }
}

impl Surrogate for PartialLinearize {
    fn name(&self) -> &'static str {
        "partial-linearize"
    }
    fn dim(&self) -> usize {
        self.cost.dim()
    }
    fn tau(&self) -> f64 {
        self.tau
    }
    fn value(&self, x: &DVector<f64>, a: &DVector<f64>) -> f64 {
        let ga = self.cost.gradient(a);
        let lin: f64 = self.rest.iter().map(|&k| ga[k] * (x[k] - a[k])).sum();
        self.cost.value(&self.frozen(x, a)) + lin + prox_term(x, a, self.tau)
    }
    fn gradient(&self, x: &DVector<f64>, a: &DVector<f64>) -> DVector<f64> {
        let ga = self.cost.gradient(a);
        let gk = self.cost.gradient(&self.frozen(x, a));
        let mut g = (x - a) * self.tau;
        for &k in &self.convex {
            g[k] += gk[k];
        }
        for &k in &self.rest {
            g[k] += ga[k];
        }
        g
    }
}

/// For `f` convex in each of two blocks separately:
/// `f(x₁, a₂) + f(a₁, x₂) + τ/2 ‖x − a‖²`.
#[derive(Clone)]
pub struct BlockConvex {
    cost: Arc<dyn LocalCost>,
    first: Vec<usize>,
    second: Vec<usize>,
    tau: f64,
}

impl BlockConvex {
    pub fn new(cost: Arc<dyn LocalCost>, first: Vec<usize>, tau: f64) -> Result<Self, SurrogateError> {
        check_tau("block-convex", tau, false)?;
        validate_split(cost.dim(), &first)?;
        let second = complement(cost.dim(), &first);
        Ok(Self {
            cost,
            first,
            second,
            tau,
        })
    }
}

impl Surrogate for BlockConvex {
    fn name(&self) -> &'static str {
        "block-convex"
    }
    fn dim(&self) -> usize {
        self.cost.dim()
    }
    fn tau(&self) -> f64 {
        self.tau
    }
    fn value(&self, x: &DVector<f64>, a: &DVector<f64>) -> f64 {
        let p1 = scatter(a, &self.first, &gather(x, &self.first));
        let p2 = scatter(a, &self.second, &gather(x, &self.second));
        self.cost.value(&p1) + self.cost.value(&p2) + prox_term(x, a, self.tau)
    }
    fn gradient(&self, x: &DVector<f64>, a: &DVector<f64>) -> DVector<f64> {
        let p1 = scatter(a, &self.first, &gather(x, &self.first));
        let p2 = scatter(a, &self.second, &gather(x, &self.second));
        let g1 = self.cost.gradient(&p1);
        let g2 = self.cost.gradient(&p2);
        let mut g = (x - a) * self.tau;
        for &k in &self.first {
            g[k] += g1[k];
        }
        for &k in &self.second {
            g[k] += g2[k];
        }
        g
    }
}

type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Convex scalar function with its derivative.
#[derive(Clone)]
pub struct ScalarConvex {
    value: Arc<ScalarFn>,
    derivative: Arc<ScalarFn>,
    curvature_bound: Option<f64>,
}

impl ScalarConvex {
    pub fn new(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            derivative: Arc::new(derivative),
            curvature_bound: None,
        }
    }

    /// Global bound on the second derivative.
    pub fn with_curvature_bound(mut self, bound: f64) -> Self {
        self.curvature_bound = Some(bound);
        self
    }

    pub fn value(&self, t: f64) -> f64 {
        (self.value)(t)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        (self.derivative)(t)
    }
}

/// For `f = g ∘ h` with convex scalar `g`:
/// `g(h(a) + ∇h(a)ᵀ(x − a)) + τ/2 ‖x − a‖²`.
#[derive(Clone)]
pub struct Composition {
    outer: ScalarConvex,
    inner: Arc<dyn LocalCost>,
    tau: f64,
}

impl Composition {
    pub fn new(outer: ScalarConvex, inner: Arc<dyn LocalCost>, tau: f64) -> Result<Self, SurrogateError> {
        check_tau("composition", tau, false)?;
        Ok(Self { outer, inner, tau })
    }

    fn linear_inner(&self, x: &DVector<f64>, a: &DVector<f64>) -> (f64, DVector<f64>) {
        let dh = self.inner.gradient(a);
        (self.inner.value(a) + dh.dot(&(x - a)), dh)
    }
}

impl Surrogate for Composition {
    fn name(&self) -> &'static str {
        "composition"
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn tau(&self) -> f64 {
        self.tau
    }
    fn value(&self, x: &DVector<f64>, a: &DVector<f64>) -> f64 {
        let (t, _) = self.linear_inner(x, a);
        self.outer.value(t) + prox_term(x, a, self.tau)
    }
    fn gradient(&self, x: &DVector<f64>, a: &DVector<f64>) -> DVector<f64> {
        let (t, dh) = self.linear_inner(x, a);
        dh * self.outer.derivative(t) + (x - a) * self.tau
    }
    fn smoothness(&self, a: &DVector<f64>) -> Option<f64> {
        let c = self.outer.curvature_bound?;
        Some(c * self.inner.gradient(a).norm_squared() + self.tau)
    }
}

/// Additively separable over disjoint coordinate blocks that cover all
/// coordinates. Block `c` either keeps `f(x_c, a_{−c})` or linearizes it, plus
/// `τ/2 ‖x_c − a_c‖²`.
#[derive(Clone)]
pub struct BlockSeparable {
    cost: Arc<dyn LocalCost>,
    blocks: Vec<Vec<usize>>,
    keep_convex: bool,
    tau: f64,
}

impl BlockSeparable {
    pub fn new(
        cost: Arc<dyn LocalCost>,
        blocks: Vec<Vec<usize>>,
        keep_convex: bool,
        tau: f64,
    ) -> Result<Self, SurrogateError> {
        check_tau("block-separable", tau, false)?;
        let dim = cost.dim();
        let mut seen = vec![false; dim];
        for b in &blocks {
            if b.is_empty() {
                return Err(SurrogateError::InvalidBlocks("empty block".into()));
            }
            for &k in b {
                if k >= dim || std::mem::replace(&mut seen[k], true) {
                    return Err(SurrogateError::InvalidBlocks(format!(
                        "index {k} out of range or repeated"
                    )));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(SurrogateError::InvalidBlocks("blocks do not cover every coordinate".into()));
        }
        Ok(Self {
            cost,
            blocks,
            keep_convex,
            tau,
        })
    }

    fn block_value(&self, c: usize, x: &DVector<f64>, a: &DVector<f64>, ga: &DVector<f64>) -> f64 {
        let idx = &self.blocks[c];
        let xc = gather(x, idx);
        let ac = gather(a, idx);
        let main = if self.keep_convex {
            self.cost.value(&scatter(a, idx, &xc))
        } else {
            gather(ga, idx).dot(&(&xc - &ac))
        };
        main + prox_term(&xc, &ac, self.tau)
    }

    fn block_gradient(&self, c: usize, x: &DVector<f64>, a: &DVector<f64>, ga: &DVector<f64>) -> DVector<f64> {
        let idx = &self.blocks[c];
        let xc = gather(x, idx);
        let ac = gather(a, idx);
        let main = if self.keep_convex {
            gather(&self.cost.gradient(&scatter(a, idx, &xc)), idx)
        } else {
            gather(ga, idx)
        };
        main + (xc - ac) * self.tau
    }
}

impl Surrogate for BlockSeparable {
    fn name(&self) -> &'static str {
        "block-separable"
    }
    fn dim(&self) -> usize {
        self.cost.dim()
    }
    fn tau(&self) -> f64 {
        self.tau
    }
    fn value(&self, x: &DVector<f64>, a: &DVector<f64>) -> f64 {
        let ga = self.cost.gradient(a);
        (0..self.blocks.len()).map(|c| self.block_value(c, x, a, &ga)).sum()
    }
    fn gradient(&self, x: &DVector<f64>, a: &DVector<f64>) -> DVector<f64> {
        let ga = self.cost.gradient(a);
        let mut g = DVector::zeros(x.len());
        for (c, idx) in self.blocks.iter().enumerate() {
            let gc = self.block_gradient(c, x, a, &ga);
            for (j, &k) in idx.iter().enumerate() {
                g[k] = gc[j];
            }
        }
        g
    }
    fn quadratic(&self, a: &DVector<f64>) -> Option<QuadraticModel> {
        let gradient = self.cost.gradient(a);
        if !self.keep_convex {
            return Some(QuadraticModel {
                hessian: QuadraticHessian::ScaledIdentity(self.tau),
                gradient,
            });
        }
        if !self.cost.is_quadratic() {
            return None;
        }
        let full = self.cost.hessian(a)?;
        let mut h = DMatrix::zeros(full.nrows(), full.ncols());
        for idx in &self.blocks {
            for &r in idx {
                for &c in idx {
                    h[(r, c)] = full[(r, c)];
                }
            }
        }
        for k in 0..h.nrows() {
            h[(k, k)] += self.tau;
        }
        Some(QuadraticModel {
            hessian: QuadraticHessian::Dense(h),
            gradient,
        })
    }
    fn blocks(&self) -> Option<&[Vec<usize>]> {
        Some(&self.blocks)
    }
    fn block_view(&self, block: usize, anchor: &DVector<f64>) -> Option<Box<dyn Surrogate + '_>> {
        (block < self.blocks.len()).then(|| {
            Box::new(BlockTerm {
                parent: self,
                block,
                anchor: anchor.clone(),
                anchor_gradient: self.cost.gradient(anchor),
            }) as Box<dyn Surrogate + '_>
        })
    }
}

/// One block of a [`BlockSeparable`] surrogate with the other blocks frozen.
struct BlockTerm<'a> {
    parent: &'a BlockSeparable,
    block: usize,
    anchor: DVector<f64>,
    anchor_gradient: DVector<f64>,
}

impl Surrogate for BlockTerm<'_> {
    fn name(&self) -> &'static str {
        "block-separable"
    }
    fn dim(&self) -> usize {
        self.parent.blocks[self.block].len()
    }
    fn tau(&self) -> f64 {
        self.parent.tau
    }
    fn value(&self, xc: &DVector<f64>, _ac: &DVector<f64>) -> f64 {
        let x = scatter(&self.anchor, &self.parent.blocks[self.block], xc);
        self.parent.block_value(self.block, &x, &self.anchor, &self.anchor_gradient)
    }
    fn gradient(&self, xc: &DVector<f64>, _ac: &DVector<f64>) -> DVector<f64> {
        let x = scatter(&self.anchor, &self.parent.blocks[self.block], xc);
        self.parent.block_gradient(self.block, &x, &self.anchor, &self.anchor_gradient)
    }
    fn quadratic(&self, _ac: &DVector<f64>) -> Option<QuadraticModel> {
        let idx = &self.parent.blocks[self.block];
        let q = self.parent.quadratic(&self.anchor)?;
        let hessian = match q.hessian {
            QuadraticHessian::ScaledIdentity(c) => QuadraticHessian::ScaledIdentity(c),
            QuadraticHessian::Dense(h) => {
                QuadraticHessian::Dense(DMatrix::from_fn(idx.len(), idx.len(), |r, c| h[(idx[r], idx[c])]))
            }
        };
        Some(QuadraticModel {
            hessian,
            gradient: gather(&q.gradient, idx),
        })
    }
}
