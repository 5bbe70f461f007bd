//! The correlation kernel of the normalized dictionary and its Riemannian
//! geometry.
//!
//! With `φ_T(θ) = φ(θ)/‖φ(θ)‖_T`, the kernel is
//! `𝒦(θ,θ′) = ⟨φ_T(θ), φ_T(θ′)⟩_T` and its covariant derivatives are
//! `𝒦^{[i,j]}(θ,θ′) = ⟨ψ_i(θ), ψ_j(θ′)⟩_T` where `ψ_i = g^{-i/2} D_i[φ_T]`
//! and `D_{i+1}[f] = ∂D_i[f] − (i/2)(g′/g) D_i[f]`. The metric tensor is
//! `g(θ) = ‖∂θ φ_T(θ)‖²_T` and the intrinsic distance is `|G(θ) − G(θ′)|`
//! for `G` a primitive of `√g`.
//!
//! On the diagonal: `𝒦 = 1`, `𝒦^{[1,0]} = 0`, `𝒦^{[2,0]} = −1`,
//! `𝒦^{[2,1]} = 0`, `𝒦^{[1,1]} = 1`.
//!
//! A context is either a grid measure (everything computed by weighted
//! sums) or the continuum limit, available in closed form for the gaussian
//! and exponential-scale families.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;

use crate::dictionary::{check_regularity, gaussian_profile_deriv, DictionarySpec, Family};
use crate::error::{Error, Result};
use crate::measure::{GridMeasure, HilbertVector};

const CACHE_CAP: usize = 4096;
const QUAD_TOL: f64 = 1e-9;

/// Per-θ data: covariant-derivative coefficients in the basis
/// `{∂^a φ(θ)}_{a=0..3}`, the metric tensor, and (discrete mode) the
/// √weight-scaled raw derivative samples.
struct Bundle {
    coef: [[f64; 4]; 4],
    g: f64,
    g_prime: f64,
    wd: Option<[Vec<f64>; 4]>,
}

enum Space {
    Discrete(GridMeasure),
    Limit,
}

/// Closed forms / lookup for the G-coordinate (primitive of √g).
enum GeoCoord {
    /// G(θ) = a·θ
    Affine(f64),
    /// G(θ) = ln(θ)/2
    Log,
    /// Node values of G and √g = G′; queries interpolate by a monotone
    /// cubic Hermite between nodes.
    Table {
        nodes: Vec<f64>,
        gvals: Vec<f64>,
        dvals: Vec<f64>,
    },
}

impl GeoCoord {
    fn hermite(nodes: &[f64], gvals: &[f64], dvals: &[f64], theta: f64) -> f64 {
        let k = match nodes.binary_search_by(|x| x.total_cmp(&theta)) {
            Ok(k) => return gvals[k],
            Err(k) => k.clamp(1, nodes.len() - 1) - 1,
        };
        let h = nodes[k + 1] - nodes[k];
        let s = (theta - nodes[k]) / h;
        let (s2, s3) = (s * s, s * s * s);
        (2.0 * s3 - 3.0 * s2 + 1.0) * gvals[k]
            + (s3 - 2.0 * s2 + s) * h * dvals[k]
            + (-2.0 * s3 + 3.0 * s2) * gvals[k + 1]
            + (s3 - s2) * h * dvals[k + 1]
    }
}

pub struct KernelContext {
    dict: DictionarySpec,
    space: Space,
    window: (f64, f64),
    g_floor: f64,
    geo: GeoCoord,
    cache: Mutex<HashMap<u64, Arc<Bundle>>>,
}

impl KernelContext {
    /// Kernel machinery over a grid measure, on the compact window
    /// `[window.0, window.1] ⊂ Θ`.
    pub fn discrete(dict: DictionarySpec, m: GridMeasure, window: (f64, f64)) -> Result<Self> {
        check_window(&dict, window)?;
        let probes = linspace(window.0, window.1, 9)
            .into_iter()
            .map(|t| clamp_interior(t, window))
            .collect::<Vec<_>>();
        let rep = check_regularity(&dict, &m, &probes)?;
        if !rep.pass {
            return Err(Error::Degenerate(format!(
                "dictionary {} fails the regularity probe on this grid",
                dict.family.name()
            )));
        }
        let mut ctx = Self {
            dict,
            space: Space::Discrete(m),
            window,
            g_floor: 0.0,
            geo: GeoCoord::Affine(1.0), // placeholder until the table is built
            cache: Mutex::new(HashMap::new()),
        };
        ctx.g_floor = ctx.compute_g_floor()?;
        ctx.geo = ctx.build_g_table(512)?;
        Ok(ctx)
    }

    /// Continuum (Lebesgue) limit; closed forms exist for the gaussian and
    /// exponential-scale families only.
    pub fn limit(dict: DictionarySpec, window: (f64, f64)) -> Result<Self> {
        check_window(&dict, window)?;
        let geo = match dict.family {
            Family::GaussianTranslate => {
                GeoCoord::Affine(1.0 / (std::f64::consts::SQRT_2 * dict.scale))
            }
            Family::ExpScale => {
                if window.0 <= 0.0 {
                    return Err(Error::Domain("exp_scale limit needs window in (0,∞)".into()));
                }
                GeoCoord::Log
            }
            other => {
                return Err(Error::Unsupported(format!(
                    "no closed-form limit kernel for {}",
                    other.name()
                )))
            }
        };
        let mut ctx = Self {
            dict,
            space: Space::Limit,
            window,
            g_floor: 0.0,
            geo,
            cache: Mutex::new(HashMap::new()),
        };
        ctx.g_floor = ctx.compute_g_floor()?;
        Ok(ctx)
    }

    pub fn dict(&self) -> &DictionarySpec {
        &self.dict
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn is_limit(&self) -> bool {
        matches!(self.space, Space::Limit)
    }

    pub fn measure(&self) -> Option<&GridMeasure> {
        match &self.space {
            Space::Discrete(m) => Some(m),
            Space::Limit => None,
        }
    }

    fn check_in_window(&self, theta: f64) -> Result<()> {
        if theta < self.window.0 - 1e-12 || theta > self.window.1 + 1e-12 {
            return Err(Error::Domain(format!(
                "θ = {theta} outside window [{}, {}]",
                self.window.0, self.window.1
            )));
        }
        Ok(())
    }

    /// `⟨∂^a φ(θ), ∂^b φ(θ′)⟩` in the limit space (closed form).
    fn limit_raw_inner(&self, a: usize, b: usize, theta: f64, theta_p: f64) -> f64 {
        match self.dict.family {
            Family::GaussianTranslate => {
                let s = self.dict.scale;
                let c = (theta - theta_p) / s;
                let sign = if b % 2 == 0 { 1.0 } else { -1.0 };
                sign * std::f64::consts::PI.sqrt()
                    * s.powi(1 - (a + b) as i32)
                    * 2f64.powf(-((a + b) as f64) / 2.0)
                    * gaussian_profile_deriv(c / std::f64::consts::SQRT_2, a + b)
            }
            Family::ExpScale => {
                let n = a + b;
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                sign * factorial(n) / (theta + theta_p).powi(n as i32 + 1)
            }
            _ => unreachable!("limit context only built for gaussian/exp_scale"),
        }
    }

    fn bundle_uncached(&self, theta: f64) -> Result<Arc<Bundle>> {
        let (q, wd) = match &self.space {
            Space::Discrete(m) => {
                let sqw: Vec<f64> = m.weights().iter().map(|w| w.sqrt()).collect();
                let mut wd: [Vec<f64>; 4] = Default::default();
                for (a, row) in wd.iter_mut().enumerate() {
                    *row = m
                        .points()
                        .iter()
                        .zip(&sqw)
                        .map(|(&t, &s)| s * self.dict.point_deriv(theta, t, a))
                        .collect();
                }
                let mut q = [[0.0; 4]; 4];
                for a in 0..4 {
                    for b in a..4 {
                        let v = dot(&wd[a], &wd[b]);
                        q[a][b] = v;
                        q[b][a] = v;
                    }
                }
                (q, Some(wd))
            }
            Space::Limit => {
                let mut q = [[0.0; 4]; 4];
                for (a, row) in q.iter_mut().enumerate() {
                    for (b, v) in row.iter_mut().enumerate() {
                        *v = self.limit_raw_inner(a, b, theta, theta);
                    }
                }
                (q, None)
            }
        };
        let (coef, g, g_prime) = covariant_coefficients(&q)?;
        if self.g_floor > 0.0 && g < self.g_floor {
            return Err(Error::Degenerate(format!(
                "g({theta}) = {g} below floor {}",
                self.g_floor
            )));
        }
        Ok(Arc::new(Bundle {
            coef,
            g,
            g_prime,
            wd,
        }))
    }

    fn bundle(&self, theta: f64) -> Result<Arc<Bundle>> {
        let key = theta.to_bits();
        if let Some(b) = self.cache.lock().unwrap().get(&key) {
            return Ok(b.clone());
        }
        let b = self.bundle_uncached(theta)?;
        let mut cache = self.cache.lock().unwrap();
        if cache.len() < CACHE_CAP {
            cache.insert(key, b.clone());
        }
        Ok(b)
    }

    fn compute_g_floor(&self) -> Result<f64> {
        let probes: Vec<f64> = linspace(self.window.0, self.window.1, 33)
            .into_iter()
            .map(|t| clamp_interior(t, self.window))
            .collect();
        let mut gs = Vec::with_capacity(probes.len());
        for t in probes {
            gs.push(self.bundle_uncached(t)?.g);
        }
        gs.sort_by(|a, b| a.total_cmp(b));
        Ok(1e-10 * gs[gs.len() / 2])
    }

    /// Cross inner products `⟨∂^a φ(θ), ∂^b φ(θ′)⟩` for `a,b ≤ amax,bmax`.
    fn cross_q(
        &self,
        b1: &Bundle,
        b2: &Bundle,
        theta: f64,
        theta_p: f64,
        amax: usize,
        bmax: usize,
    ) -> [[f64; 4]; 4] {
        let mut q = [[0.0; 4]; 4];
        match (&b1.wd, &b2.wd) {
            (Some(w1), Some(w2)) => {
                for (a, row) in q.iter_mut().enumerate().take(amax + 1) {
                    for (b, v) in row.iter_mut().enumerate().take(bmax + 1) {
                        *v = dot(&w1[a], &w2[b]);
                    }
                }
            }
            _ => {
                for (a, row) in q.iter_mut().enumerate().take(amax + 1) {
                    for (b, v) in row.iter_mut().enumerate().take(bmax + 1) {
                        *v = self.limit_raw_inner(a, b, theta, theta_p);
                    }
                }
            }
        }
        q
    }

    /// `𝒦^{[i,j]}(θ, θ′)` for `i, j ≤ 3`.
    pub fn kernel_deriv(&self, theta: f64, theta_p: f64, i: usize, j: usize) -> Result<f64> {
        if i > 3 || j > 3 {
            return Err(Error::Invalid(format!("kernel derivative order ({i},{j})")));
        }
        self.check_in_window(theta)?;
        self.check_in_window(theta_p)?;
        let b1 = self.bundle(theta)?;
        let b2 = self.bundle(theta_p)?;
        let q = self.cross_q(&b1, &b2, theta, theta_p, i, j);
        let mut acc = 0.0;
        for a in 0..=i {
            for b in 0..=j {
                acc += b1.coef[i][a] * b2.coef[j][b] * q[a][b];
            }
        }
        Ok(acc)
    }

    /// Metric tensor `g(θ) = ‖∂θ φ_T(θ)‖²_T`.
    pub fn g(&self, theta: f64) -> Result<f64> {
        self.check_in_window(theta)?;
        Ok(self.bundle(theta)?.g)
    }

    pub fn g_prime(&self, theta: f64) -> Result<f64> {
        self.check_in_window(theta)?;
        Ok(self.bundle(theta)?.g_prime)
    }

    /// `h(θ) = 𝒦^{[3,3]}(θ,θ)`.
    pub fn h(&self, theta: f64) -> Result<f64> {
        self.kernel_deriv(theta, theta, 3, 3)
    }

    /// `ψ_i(θ) = g^{-i/2} D_i[φ_T](θ)` as grid samples (discrete mode only).
    pub fn covariant_feature(&self, theta: f64, i: usize) -> Result<HilbertVector> {
        if i > 3 {
            return Err(Error::Invalid(format!("covariant order {i}")));
        }
        self.check_in_window(theta)?;
        let m = self.measure().ok_or_else(|| {
            Error::Unsupported("covariant_feature needs a grid measure".into())
        })?;
        let b = self.bundle(theta)?;
        let values = m
            .points()
            .iter()
            .map(|&t| {
                (0..=i)
                    .map(|a| b.coef[i][a] * self.dict.point_deriv(theta, t, a))
                    .sum()
            })
            .collect();
        HilbertVector::new(values, m)
    }

    /// Row `k` holds `ψ_i(grid[k])` sampled on the measure (discrete only).
    pub fn covariant_feature_matrix(&self, grid: &[f64], i: usize) -> Result<DMatrix<f64>> {
        let m = self.measure().ok_or_else(|| {
            Error::Unsupported("feature matrices need a grid measure".into())
        })?;
        let mut out = DMatrix::zeros(grid.len(), m.len());
        for (k, &theta) in grid.iter().enumerate() {
            let f = self.covariant_feature(theta, i)?;
            for (c, &v) in f.values().iter().enumerate() {
                out[(k, c)] = v;
            }
        }
        Ok(out)
    }

    /// Dense table `𝒦^{[i,j]}(grid_a × grid_b)`.
    pub fn kernel_matrix(
        &self,
        grid_a: &[f64],
        grid_b: &[f64],
        i: usize,
        j: usize,
    ) -> Result<DMatrix<f64>> {
        match &self.space {
            Space::Discrete(m) => {
                // ψ rows scaled by √weights so the product is the L²(λ) Gram.
                let sqw: Vec<f64> = m.weights().iter().map(|w| w.sqrt()).collect();
                let build = |grid: &[f64], ord: usize| -> Result<DMatrix<f64>> {
                    let mut mat = self.covariant_feature_matrix(grid, ord)?;
                    for mut row in mat.row_iter_mut() {
                        for (c, v) in row.iter_mut().enumerate() {
                            *v *= sqw[c];
                        }
                    }
                    Ok(mat)
                };
                let a = build(grid_a, i)?;
                let b = build(grid_b, j)?;
                Ok(&a * b.transpose())
            }
            Space::Limit => {
                let mut out = DMatrix::zeros(grid_a.len(), grid_b.len());
                for (r, &ta) in grid_a.iter().enumerate() {
                    for (c, &tb) in grid_b.iter().enumerate() {
                        out[(r, c)] = self.kernel_deriv(ta, tb, i, j)?;
                    }
                }
                Ok(out)
            }
        }
    }

    /// `g(θ)` from first-order raw inner products only (cheap path for
    /// quadrature of √g; avoids third-order feature evaluation).
    fn g_only(&self, theta: f64) -> Result<f64> {
        let q = match &self.space {
            Space::Discrete(m) => {
                let mut q = [[0.0f64; 2]; 2];
                for (&t, &w) in m.points().iter().zip(m.weights()) {
                    let d0 = self.dict.point_deriv(theta, t, 0);
                    let d1 = self.dict.point_deriv(theta, t, 1);
                    q[0][0] += w * d0 * d0;
                    q[1][0] += w * d1 * d0;
                    q[1][1] += w * d1 * d1;
                }
                q
            }
            Space::Limit => {
                let mut q = [[0.0f64; 2]; 2];
                q[0][0] = self.limit_raw_inner(0, 0, theta, theta);
                q[1][0] = self.limit_raw_inner(1, 0, theta, theta);
                q[1][1] = self.limit_raw_inner(1, 1, theta, theta);
                q
            }
        };
        let q0 = q[0][0];
        if !(q0 > 0.0) {
            return Err(Error::Degenerate("zero-norm feature".into()));
        }
        // g = ‖j′φ + j ∂φ‖² with j = q^{-1/2}
        let j0 = q0.powf(-0.5);
        let j1 = -q[1][0] * q0.powf(-1.5);
        Ok(j1 * j1 * q0 + 2.0 * j1 * j0 * q[1][0] + j0 * j0 * q[1][1])
    }

    fn build_g_table(&self, n: usize) -> Result<GeoCoord> {
        let nodes = linspace(self.window.0, self.window.1, n + 1);
        let sqrt_g = |t: f64| -> Result<f64> {
            Ok(self.g_only(clamp_interior(t, self.window))?.max(0.0).sqrt())
        };
        let mut gvals = Vec::with_capacity(n + 1);
        let mut dvals = Vec::with_capacity(n + 1);
        gvals.push(0.0);
        dvals.push(sqrt_g(nodes[0])?);
        for w in nodes.windows(2) {
            let seg = adaptive_gl(&sqrt_g, w[0], w[1], QUAD_TOL)?;
            gvals.push(gvals.last().unwrap() + seg);
            dvals.push(sqrt_g(w[1])?);
        }
        Ok(GeoCoord::Table {
            nodes,
            gvals,
            dvals,
        })
    }

    /// The G-coordinate: a primitive of `√g`, anchored at the window start.
    pub fn g_coordinate(&self, theta: f64) -> Result<f64> {
        self.check_in_window(theta)?;
        match &self.geo {
            GeoCoord::Affine(a) => Ok(a * theta),
            GeoCoord::Log => Ok(0.5 * theta.ln()),
            GeoCoord::Table {
                nodes,
                gvals,
                dvals,
            } => Ok(GeoCoord::hermite(nodes, gvals, dvals, theta)),
        }
    }

    /// Inverse of [`Self::g_coordinate`] (clamped to the window).
    pub fn theta_from_g(&self, gval: f64) -> Result<f64> {
        match &self.geo {
            GeoCoord::Affine(a) => Ok(gval / a),
            GeoCoord::Log => Ok((2.0 * gval).exp()),
            GeoCoord::Table { nodes, gvals, .. } => {
                if gval <= gvals[0] {
                    return Ok(nodes[0]);
                }
                if gval >= *gvals.last().unwrap() {
                    return Ok(*nodes.last().unwrap());
                }
                let k = gvals.partition_point(|&v| v < gval) - 1;
                let (mut lo, mut hi) = (nodes[k], nodes[k + 1]);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if self.g_coordinate(mid)? < gval {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-12 * (1.0 + mid.abs()) {
                        break;
                    }
                }
                Ok(0.5 * (lo + hi))
            }
        }
    }

    /// Intrinsic distance `|G(θ) − G(θ′)|`.
    pub fn metric_distance(&self, theta: f64, theta_p: f64) -> Result<f64> {
        Ok((self.g_coordinate(theta)? - self.g_coordinate(theta_p)?).abs())
    }

    /// θ at intrinsic (signed) offset `d` from `theta`.
    pub fn offset_by_metric(&self, theta: f64, d: f64) -> Result<f64> {
        self.theta_from_g(self.g_coordinate(theta)? + d)
    }

    /// Intrinsic length of the window.
    pub fn metric_length(&self) -> Result<f64> {
        Ok(self.g_coordinate(self.window.1)? - self.g_coordinate(self.window.0)?)
    }

    /// Window grid uniform in the intrinsic metric with step ≤ `step`.
    pub fn metric_grid(&self, step: f64) -> Result<Vec<f64>> {
        if !(step > 0.0) {
            return Err(Error::Invalid("metric grid step must be positive".into()));
        }
        let g0 = self.g_coordinate(self.window.0)?;
        let g1 = self.g_coordinate(self.window.1)?;
        let n = (((g1 - g0) / step).ceil() as usize).max(1);
        let mut out = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let g = g0 + (g1 - g0) * k as f64 / n as f64;
            out.push(clamp_interior(self.theta_from_g(g)?, self.window));
        }
        Ok(out)
    }

    /// `ε(r) = 1 − sup{ |𝒦(θ,θ′)| : 𝔡(θ,θ′) ≥ r }` over the window.
    /// Returns `+∞` when no admissible pair exists.
    pub fn epsilon(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::Invalid("radius must be positive".into()));
        }
        if self.is_limit() && self.dict.family == Family::GaussianTranslate {
            // stationary kernel: sup at 𝔡 = r exactly
            return Ok(1.0 - (-r * r / 2.0).exp());
        }
        let (sup, _) = self.sup_search(r, true)?;
        Ok(if sup.is_finite() { 1.0 - sup } else { f64::INFINITY })
    }

    /// `ν(r) = −sup{ 𝒦^{[2,0]}(θ,θ′) : 𝔡(θ,θ′) ≤ r }` over the window.
    pub fn nu(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::Invalid("radius must be positive".into()));
        }
        if self.is_limit() && self.dict.family == Family::GaussianTranslate {
            // k″(d) = (d²−1)e^{−d²/2} increases on [0, √3]
            let d = r.min(3f64.sqrt());
            return Ok((1.0 - d * d) * (-d * d / 2.0).exp());
        }
        let (sup, _) = self.sup_search(r, false)?;
        Ok(if sup.is_finite() { -sup } else { f64::INFINITY })
    }

    /// Grid sup-search shared by ε (far pairs, |𝒦|) and ν (near pairs,
    /// 𝒦^{[2,0]}), with one local refinement pass around the argmax.
    fn sup_search(&self, r: f64, far: bool) -> Result<(f64, (f64, f64))> {
        let length = self.metric_length()?;
        let step = (r / 50.0).min(length / 64.0).max(1e-6);
        let grid = self.metric_grid(step)?;
        let n = grid.len();
        // metric_grid is uniform in G, so pair distances are index gaps
        let d_step = length / (n - 1).max(1) as f64;
        let mut best = f64::NEG_INFINITY;
        let mut arg = (0usize, 0usize);
        if far {
            let k00 = self.kernel_matrix(&grid, &grid, 0, 0)?;
            for a in 0..n {
                for b in 0..n {
                    if (a as f64 - b as f64).abs() * d_step >= r {
                        let v = k00[(a, b)].abs();
                        if v > best {
                            best = v;
                            arg = (a, b);
                        }
                    }
                }
            }
        } else {
            let band = (r / d_step).ceil() as usize;
            for a in 0..n {
                let lo = a.saturating_sub(band);
                let hi = (a + band).min(n - 1);
                for b in lo..=hi {
                    if (a as f64 - b as f64).abs() * d_step <= r {
                        let v = self.kernel_deriv(grid[a], grid[b], 2, 0)?;
                        if v > best {
                            best = v;
                            arg = (a, b);
                        }
                    }
                }
            }
        }
        if !best.is_finite() {
            return Ok((f64::NEG_INFINITY, (grid[arg.0], grid[arg.1])), );
        }
        // refinement on a fine local grid, keeping the distance constraint
        let g0 = self.g_coordinate(self.window.0)?;
        let (ga, gb) = (g0 + arg.0 as f64 * d_step, g0 + arg.1 as f64 * d_step);
        let fine = step / 10.0;
        for da in -10..=10i32 {
            for db in -10..=10i32 {
                let sa = ga + da as f64 * fine;
                let sb = gb + db as f64 * fine;
                let d = (sa - sb).abs();
                if (far && d >= r) || (!far && d <= r) {
                    let ta = self.theta_from_g(sa)?;
                    let tb = self.theta_from_g(sb)?;
                    let v = if far {
                        self.kernel_deriv(ta, tb, 0, 0)?.abs()
                    } else {
                        self.kernel_deriv(ta, tb, 2, 0)?
                    };
                    if v > best {
                        best = v;
                    }
                }
            }
        }
        Ok((best, (grid[arg.0], grid[arg.1])))
    }
}

fn check_window(dict: &DictionarySpec, window: (f64, f64)) -> Result<()> {
    if !(window.0 < window.1) || !window.0.is_finite() || !window.1.is_finite() {
        return Err(Error::Invalid("window must be a finite interval".into()));
    }
    if !dict.contains(window.0) && window.0 != dict.theta_min {
        return Err(Error::Domain("window escapes the parameter domain".into()));
    }
    if window.0 < dict.theta_min || window.1 > dict.theta_max {
        return Err(Error::Domain("window escapes the parameter domain".into()));
    }
    Ok(())
}

/// Covariant-derivative coefficient rows from the 4×4 matrix of raw inner
/// products at a single θ. Returns `(rows, g, g′)`.
fn covariant_coefficients(q: &[[f64; 4]; 4]) -> Result<([[f64; 4]; 4], f64, f64)> {
    let q0 = q[0][0];
    if !(q0 > 0.0) {
        return Err(Error::Degenerate("zero-norm feature".into()));
    }
    let q1 = 2.0 * q[1][0];
    let q2 = 2.0 * (q[2][0] + q[1][1]);
    let q3 = 2.0 * q[3][0] + 6.0 * q[2][1];
    // derivatives of q^{-1/2}
    let j0 = q0.powf(-0.5);
    let j1 = -0.5 * q1 * q0.powf(-1.5);
    let j2 = 0.75 * q1 * q1 * q0.powf(-2.5) - 0.5 * q2 * q0.powf(-1.5);
    let j3 = -15.0 / 8.0 * q1.powi(3) * q0.powf(-3.5) + 2.25 * q1 * q2 * q0.powf(-2.5)
        - 0.5 * q3 * q0.powf(-1.5);
    // ordinary derivatives of φ_T = j(θ)·φ in the basis {∂^a φ}
    let m0 = [j0, 0.0, 0.0, 0.0];
    let m1 = [j1, j0, 0.0, 0.0];
    let m2 = [j2, 2.0 * j1, j0, 0.0];
    let m3 = [j3, 3.0 * j2, 3.0 * j1, j0];
    let quad = |x: &[f64; 4], y: &[f64; 4]| -> f64 {
        let mut acc = 0.0;
        for a in 0..4 {
            if x[a] == 0.0 {
                continue;
            }
            for b in 0..4 {
                acc += x[a] * q[a][b] * y[b];
            }
        }
        acc
    };
    let g = quad(&m1, &m1);
    if !(g > 0.0) {
        return Err(Error::Degenerate(format!("metric tensor g = {g}")));
    }
    let gp = 2.0 * quad(&m1, &m2);
    let gpp = 2.0 * quad(&m2, &m2) + 2.0 * quad(&m1, &m3);
    let c = gp / (2.0 * g);
    let cp = gpp / (2.0 * g) - gp * gp / (2.0 * g * g);
    let sg = g.sqrt();
    let mut rows = [[0.0; 4]; 4];
    rows[0] = m0;
    for a in 0..4 {
        rows[1][a] = m1[a] / sg;
        rows[2][a] = (m2[a] - c * m1[a]) / g;
        rows[3][a] = (m3[a] - 3.0 * c * m2[a] + (2.0 * c * c - cp) * m1[a]) / (g * sg);
    }
    Ok((rows, g, gp))
}

/// Sup-norm bounds of the gaussian limit kernel derivatives and metric
/// tensor, used by the certificate constants.
#[derive(Debug, Clone, Copy)]
pub struct LimitConstants {
    pub m_g: f64,
    pub l00: f64,
    pub l10: f64,
    pub l11: f64,
    pub l20: f64,
    pub l21: f64,
    pub l22: f64,
    pub l3: f64,
}

impl LimitConstants {
    pub fn gaussian(sigma0: f64) -> Self {
        let l21 = (18.0 - 6.0 * 6f64.sqrt()).sqrt() * ((6f64.sqrt() - 3.0) / 2.0).exp();
        Self {
            m_g: 1.0 / (2.0 * sigma0 * sigma0),
            l00: 1.0,
            l10: (-0.5f64).exp(),
            l11: 1.0,
            l20: 1.0,
            l21,
            l22: 3.0,
            l3: 15.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LimitCompare {
    /// `max_{i,j≤2} sup |𝒦_T^{[i,j]} − 𝒦_∞^{[i,j]}| ∨ sup |h_T − h_∞|`
    pub v_t: f64,
    /// `max( sup √(g_T/g_∞), sup √(g_∞/g_T) )`
    pub rho_t: f64,
}

/// Uniform kernel-proximity and metric-equivalence diagnostics between a
/// finite context and its limit, measured on `probe_grid`.
pub fn limit_compare(
    ctx_t: &KernelContext,
    ctx_inf: &KernelContext,
    probe_grid: &[f64],
) -> Result<LimitCompare> {
    if ctx_t.dict.family != ctx_inf.dict.family {
        return Err(Error::Invalid("contexts use different families".into()));
    }
    if probe_grid.is_empty() {
        return Err(Error::Invalid("empty probe grid".into()));
    }
    let mut v_t: f64 = 0.0;
    for i in 0..=2 {
        for j in 0..=2 {
            let a = ctx_t.kernel_matrix(probe_grid, probe_grid, i, j)?;
            let b = ctx_inf.kernel_matrix(probe_grid, probe_grid, i, j)?;
            let d = (a - b).abs().max();
            v_t = v_t.max(d);
        }
    }
    let mut rho_t: f64 = 1.0;
    for &theta in probe_grid {
        let ht = ctx_t.h(theta)?;
        let hi = ctx_inf.h(theta)?;
        v_t = v_t.max((ht - hi).abs());
        let ratio = ctx_t.g(theta)? / ctx_inf.g(theta)?;
        rho_t = rho_t.max(ratio.sqrt()).max(ratio.sqrt().recip());
    }
    Ok(LimitCompare { v_t, rho_t })
}

pub enum TaylorTarget<'a> {
    /// The normalized feature curve `θ ↦ φ_T(θ)`.
    Feature,
    /// A scalar curve given as `f(θ, order)` for orders 0..=2.
    Scalar(&'a dyn Fn(f64, usize) -> Result<f64>),
}

#[derive(Debug, Clone, Copy)]
pub struct TaylorReport {
    pub distance: f64,
    pub residual: f64,
    pub bound: f64,
    pub pass: bool,
}

/// First-order intrinsic Taylor check: the remainder
/// `‖f(θ) − f(θ₀) − sign(θ−θ₀) 𝔡 f^{[1]}(θ₀)‖` must sit under
/// `(1/2) 𝔡² sup‖f^{[2]}‖` along the segment (tolerance factor 1.05).
pub fn taylor_check(
    ctx: &KernelContext,
    theta0: f64,
    theta: f64,
    target: TaylorTarget<'_>,
) -> Result<TaylorReport> {
    let d = ctx.metric_distance(theta, theta0)?;
    let sgn = if theta >= theta0 { 1.0 } else { -1.0 };
    let seg = linspace(theta0.min(theta), theta0.max(theta), 33);
    let (residual, mut sup2) = match target {
        TaylorTarget::Feature => {
            let k00 = ctx.kernel_deriv(theta, theta0, 0, 0)?;
            let k01 = ctx.kernel_deriv(theta, theta0, 0, 1)?;
            // expanding the squared norm through the kernel loses half the
            // significant digits, hence the ~1e-8 noise floor on the result
            let r2 = 2.0 + d * d - 2.0 * k00 - 2.0 * sgn * d * k01;
            let mut sup = 0.0f64;
            for &t in &seg {
                sup = sup.max(ctx.kernel_deriv(t, t, 2, 2)?.max(0.0).sqrt());
            }
            (r2.max(0.0).sqrt(), sup)
        }
        TaylorTarget::Scalar(f) => {
            let r = (f(theta, 0)? - f(theta0, 0)? - sgn * d * f(theta0, 1)?).abs();
            let mut sup = 0.0f64;
            for &t in &seg {
                sup = sup.max(f(t, 2)?.abs());
            }
            (r, sup)
        }
    };
    if d == 0.0 {
        sup2 = 0.0;
    }
    let bound = 0.5 * d * d * sup2;
    Ok(TaylorReport {
        distance: d,
        residual,
        bound,
        pass: residual <= 1.05 * bound + 1e-7,
    })
}

pub(crate) fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.5 * (a + b)];
    }
    (0..n)
        .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
        .collect()
}

fn clamp_interior(t: f64, window: (f64, f64)) -> f64 {
    let eps = 1e-9 * (window.1 - window.0);
    t.clamp(window.0 + eps, window.1 - eps)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

const GL8_NODES: [f64; 4] = [
    0.183434642495649805,
    0.525532409916328986,
    0.796666477413626740,
    0.960289856497536232,
];
const GL8_WEIGHTS: [f64; 4] = [
    0.362683783378361983,
    0.313706645877887287,
    0.222381034453374471,
    0.101228536290376259,
];

fn gl8(f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64) -> Result<f64> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = 0.0;
    for k in 0..4 {
        acc += GL8_WEIGHTS[k] * (f(c + h * GL8_NODES[k])? + f(c - h * GL8_NODES[k])?);
    }
    Ok(acc * h)
}

/// Adaptive Gauss–Legendre quadrature with bisection refinement.
fn adaptive_gl(f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn rec(
        f: &dyn Fn(f64) -> Result<f64>,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let left = gl8(f, a, m)?;
        let right = gl8(f, m, b)?;
        let diff = left + right - whole;
        if diff.abs() <= tol || b - a < 1e-14 * (1.0 + a.abs()) {
            return Ok(left + right + diff / 15.0);
        }
        if depth == 0 {
            return Err(Error::Numeric(format!(
                "quadrature failed to converge on [{a}, {b}], residual {diff}"
            )));
        }
        Ok(rec(f, a, m, left, tol / 2.0, depth - 1)? + rec(f, m, b, right, tol / 2.0, depth - 1)?)
    }
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let whole = gl8(f, lo, hi)?;
    Ok(sign * rec(f, lo, hi, whole, tol, 40)?)
}
