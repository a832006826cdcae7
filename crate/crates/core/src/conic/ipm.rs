//! Primal-dual interior-point method for
//!
//! ```text
//! minimize c^T x   s.t.   Z = F0 + sum_i x_i F_i ⪰ 0   (blockwise, with a diagonal LP block)
//! ```
//!
//! and its dual `maximize -<F0, X>` s.t. `<F_i, X> = c_i`, `X ⪰ 0`.
//! Search directions are HKM with a Mehrotra predictor-corrector; iterates
//! need not be feasible.

use nalgebra::{DMatrix, DVector};

use super::program::{ConicProgram, ConicSolver, SolverOutcome, SolverStatus};

/// Environment variable overriding the default tolerance.
pub const TOLERANCE_ENV: &str = "NETRED_SOLVER_TOL";

type Triplets = Vec<(usize, usize, f64)>;

#[derive(Debug, Clone)]
struct PsdBlock {
    dim: usize,
    f0: DMatrix<f64>,
    /// `(variable, entries of F_i)` with both triangles stored.
    coeffs: Vec<(usize, Triplets)>,
}

#[derive(Debug, Clone)]
struct LpBlock {
    g0: DVector<f64>,
    /// `rows x m`.
    g: DMatrix<f64>,
}

/// Program in the solver's standard form, after equality elimination.
#[derive(Debug, Clone)]
struct StandardForm {
    m: usize,
    c: DVector<f64>,
    blocks: Vec<PsdBlock>,
    lp: LpBlock,
}

impl StandardForm {
    fn cone_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim).sum::<usize>() + self.lp.g0.len()
    }
}

/// Maps a point of the standard form back to the original variables:
/// `x = offset + basis * z`, plus the objective constant.
#[derive(Debug, Clone)]
struct Recovery {
    offset: DVector<f64>,
    basis: DMatrix<f64>,
}

fn triplets_of(m: &DMatrix<f64>) -> Triplets {
    let mut t = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != 0.0 {
                t.push((i, j, v));
            }
        }
    }
    t
}

fn compile(program: &ConicProgram) -> Result<(StandardForm, Recovery), String> {
    program.validate().map_err(|e| e.to_string())?;
    let n = program.num_vars();
    let c_full = program.objective_vector();

    // Equalities: A x = b.
    let eq_rows: usize = program.eq_constraints().iter().map(|e| e.shape().0).sum();
    let (offset, basis) = if eq_rows == 0 {
        (DVector::zeros(n), DMatrix::identity(n, n))
    } else {
        let mut a = DMatrix::zeros(eq_rows.max(n), n);
        let mut b = DVector::zeros(eq_rows.max(n));
        let mut r0 = 0;
        for e in program.eq_constraints() {
            let k = e.shape().0;
            for i in 0..k {
                b[r0 + i] = -e.constant_part()[(i, 0)];
            }
            for (v, m) in e.terms() {
                for i in 0..k {
                    a[(r0 + i, v)] += m[(i, 0)];
                }
            }
            r0 += k;
        }
        let svd = a.clone().svd(true, true);
        let smax: f64 = svd.singular_values.max();
        let tol = 1e-12 * smax.max(1.0) * n as f64;
        let u = svd.u.as_ref().unwrap();
        let v_t = svd.v_t.as_ref().unwrap();
        let mut x0 = DVector::zeros(n);
        let mut null = Vec::new();
        for k in 0..svd.singular_values.len() {
            let s = svd.singular_values[k];
            if s > tol {
                let coef = u.column(k).dot(&b) / s;
                x0 += v_t.row(k).transpose() * coef;
            } else {
                null.push(v_t.row(k).transpose());
            }
        }
        let res = (&a * &x0 - &b).amax();
        if res > 1e-9 * (1.0 + b.amax()) {
            return Err(format!("equality constraints are inconsistent (residual {res:.3e})"));
        }
        let basis = if null.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&null)
        };
        (x0, basis)
    };
    let m = basis.ncols();
    let identity_basis = eq_rows == 0;

    let mut blocks = Vec::new();
    for e in program.psd_constraints() {
        let dim = e.shape().0;
        let mut f0 = e.constant_part().clone();
        let mut coeffs = Vec::new();
        if identity_basis {
            for (v, mat) in e.terms() {
                let t = triplets_of(mat);
                if !t.is_empty() {
                    coeffs.push((v, t));
                }
            }
        } else {
            let mut reduced = vec![DMatrix::zeros(dim, dim); m];
            for (v, mat) in e.terms() {
                f0 += mat * offset[v];
                for (k, r) in reduced.iter_mut().enumerate() {
                    let w = basis[(v, k)];
                    if w != 0.0 {
                        *r += mat * w;
                    }
                }
            }
            for (k, r) in reduced.into_iter().enumerate() {
                let t = triplets_of(&r);
                if !t.is_empty() {
                    coeffs.push((k, t));
                }
            }
        }
        if dim > 0 {
            blocks.push(PsdBlock { dim, f0, coeffs });
        }
    }

    let lp_rows: usize = program.nonneg_constraints().iter().map(|e| e.shape().0).sum();
    let mut g0 = DVector::zeros(lp_rows);
    let mut g_full = DMatrix::zeros(lp_rows, n);
    let mut r0 = 0;
    for e in program.nonneg_constraints() {
        let k = e.shape().0;
        for i in 0..k {
            g0[r0 + i] = e.constant_part()[(i, 0)];
        }
        for (v, mat) in e.terms() {
            for i in 0..k {
                g_full[(r0 + i, v)] += mat[(i, 0)];
            }
        }
        r0 += k;
    }
    let (g0, g) = if identity_basis {
        (g0, g_full)
    } else {
        (g0 + &g_full * &offset, &g_full * &basis)
    };
    let c = if identity_basis { c_full } else { basis.transpose() * c_full };

    Ok((
        StandardForm {
            m,
            c,
            blocks,
            lp: LpBlock { g0, g },
        },
        Recovery { offset, basis },
    ))
}

/// Removes variables that appear in no constraint. Fails if any of them
/// carries objective weight, since the program is then unbounded.
fn prune(form: &StandardForm) -> Result<(StandardForm, Vec<usize>), String> {
    let mut used = vec![false; form.m];
    for b in &form.blocks {
        for (v, _) in &b.coeffs {
            used[*v] = true;
        }
    }
    for v in 0..form.m {
        if form.lp.g.column(v).iter().any(|&x| x != 0.0) {
            used[v] = true;
        }
    }
    let cmax = form.c.amax();
    for v in 0..form.m {
        if !used[v] && form.c[v].abs() > 1e-14 * cmax.max(1.0) {
            return Err(format!("objective is unbounded along unconstrained variable {v}"));
        }
    }
    let kept: Vec<usize> = (0..form.m).filter(|&v| used[v]).collect();
    let mut index = vec![usize::MAX; form.m];
    for (k, &v) in kept.iter().enumerate() {
        index[v] = k;
    }
    let blocks = form
        .blocks
        .iter()
        .map(|b| PsdBlock {
            dim: b.dim,
            f0: b.f0.clone(),
            coeffs: b.coeffs.iter().map(|(v, t)| (index[*v], t.clone())).collect(),
        })
        .collect();
    let out = StandardForm {
        m: kept.len(),
        c: DVector::from_iterator(kept.len(), kept.iter().map(|&v| form.c[v])),
        blocks,
        lp: LpBlock {
            g0: form.lp.g0.clone(),
            g: form.lp.g.select_columns(&kept),
        },
    };
    Ok((out, kept))
}

#[derive(Debug, Clone)]
struct Iterate {
    x: DVector<f64>,
    xs: Vec<DMatrix<f64>>,
    zs: Vec<DMatrix<f64>>,
    xl: DVector<f64>,
    zl: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Termination {
    Converged,
    IterationLimit,
    Stalled,
    Diverged,
}

#[derive(Debug, Clone)]
struct RawResult {
    termination: Termination,
    x: DVector<f64>,
    pobj: f64,
    pinf: f64,
    dinf: f64,
    gap: f64,
    iterations: usize,
}

/// HKM primal-dual path-following solver.
#[derive(Debug, Clone)]
pub struct InteriorPointSolver {
    /// Relative tolerance on primal/dual infeasibility and duality gap.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for InteriorPointSolver {
    fn default() -> Self {
        let tol = std::env::var(TOLERANCE_ENV)
            .ok()
            .and_then(|s| s.trim().parse::<f64>().ok())
            .filter(|t| *t > 0.0 && t.is_finite())
            .unwrap_or(1e-9);
        Self { tol, max_iter: 150 }
    }
}

impl InteriorPointSolver {
    pub fn with_tolerance(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    fn sym_inverse(z: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let inv = z.clone().cholesky()?.inverse();
        Some((&inv + inv.transpose()) * 0.5)
    }

    fn lin_block(block: &PsdBlock, dx: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(block.dim, block.dim);
        for (v, t) in &block.coeffs {
            let s = dx[*v];
            if s != 0.0 {
                for &(i, j, w) in t {
                    out[(i, j)] += w * s;
                }
            }
        }
        out
    }

    /// `out_i += <F_i, K> = sum F_i[a, b] K[b, a]`.
    fn adjoint_block(block: &PsdBlock, k: &DMatrix<f64>, out: &mut DVector<f64>) {
        for (v, t) in &block.coeffs {
            let mut s = 0.0;
            for &(a, b, w) in t {
                s += w * k[(b, a)];
            }
            out[*v] += s;
        }
    }

    fn adjoint(form: &StandardForm, ks: &[DMatrix<f64>], kl: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(form.m);
        for (b, k) in form.blocks.iter().zip(ks) {
            Self::adjoint_block(b, k, &mut out);
        }
        if kl.len() > 0 {
            out += form.lp.g.transpose() * kl;
        }
        out
    }

    fn max_step_psd(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
        let Some(chol) = x.clone().cholesky() else {
            return 0.0;
        };
        let l = chol.l();
        let Some(w) = l.solve_lower_triangular(dx) else {
            return 0.0;
        };
        let Some(w) = l.solve_lower_triangular(&w.transpose()) else {
            return 0.0;
        };
        let w = (&w + w.transpose()) * 0.5;
        let lmin = w.symmetric_eigenvalues().min();
        if lmin < 0.0 {
            -1.0 / lmin
        } else {
            f64::INFINITY
        }
    }

    fn max_step_lp(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
        let mut a = f64::INFINITY;
        for i in 0..x.len() {
            if dx[i] < 0.0 {
                a = a.min(-x[i] / dx[i]);
            }
        }
        a
    }

    fn initial_point(form: &StandardForm) -> Iterate {
        let cnorm = |v: usize| form.c[v].abs();
        let mut xs = Vec::new();
        let mut zs = Vec::new();
        for b in &form.blocks {
            let k = b.dim as f64;
            let mut xi = 10.0f64.max(k.sqrt());
            let mut eta = 10.0f64.max(k.sqrt()).max(b.f0.norm());
            for (v, t) in &b.coeffs {
                let fnorm = t.iter().map(|e| e.2 * e.2).sum::<f64>().sqrt();
                xi = xi.max(k * (1.0 + cnorm(*v)) / (1.0 + fnorm));
                eta = eta.max(fnorm);
            }
            xs.push(DMatrix::identity(b.dim, b.dim) * xi);
            zs.push(DMatrix::identity(b.dim, b.dim) * eta);
        }
        let rows = form.lp.g0.len();
        let (mut xi, mut eta) = (10.0f64, 10.0f64.max(form.lp.g0.norm()));
        for v in 0..form.m {
            let fnorm = form.lp.g.column(v).norm();
            if fnorm > 0.0 {
                xi = xi.max(rows as f64 * (1.0 + cnorm(v)) / (1.0 + fnorm));
                eta = eta.max(fnorm);
            }
        }
        Iterate {
            x: DVector::zeros(form.m),
            xs,
            zs,
            xl: DVector::repeat(rows, xi),
            zl: DVector::repeat(rows, eta),
        }
    }

    fn run(&self, form: &StandardForm) -> RawResult {
        let m = form.m;
        let ncone = form.cone_dim().max(1) as f64;
        let cnorm = form.c.norm();
        let f0norm = (form.blocks.iter().map(|b| b.f0.norm_squared()).sum::<f64>()
            + form.lp.g0.norm_squared())
        .sqrt();
        let mut it = Self::initial_point(form);
        let mut last = None;
        let mut best_mu = f64::INFINITY;
        let mut no_progress = 0;

        for iter in 0..=self.max_iter {
            // Residuals.
            let fx: Vec<DMatrix<f64>> = form
                .blocks
                .iter()
                .map(|b| &b.f0 + Self::lin_block(b, &it.x))
                .collect();
            let rd: Vec<DMatrix<f64>> = fx.iter().zip(&it.zs).map(|(f, z)| f - z).collect();
            let fxl = &form.lp.g0 + &form.lp.g * &it.x;
            let rdl = &fxl - &it.zl;
            let ax = Self::adjoint(form, &it.xs, &it.xl);
            let rp = &form.c - ax;

            let xz: f64 = it.xs.iter().zip(&it.zs).map(|(x, z)| x.dot(z)).sum::<f64>() + it.xl.dot(&it.zl);
            let mu = xz / ncone;
            let pobj = form.c.dot(&it.x);
            let dobj = -(form.blocks.iter().zip(&it.xs).map(|(b, x)| b.f0.dot(x)).sum::<f64>()
                + form.lp.g0.dot(&it.xl));
            let pinf = rp.norm() / (1.0 + cnorm);
            let dinf = (rd.iter().map(|r| r.norm_squared()).sum::<f64>() + rdl.norm_squared()).sqrt()
                / (1.0 + f0norm);
            let denom = 1.0 + pobj.abs() + dobj.abs();
            let gap = xz.abs() / denom;
            let raw = RawResult {
                termination: Termination::Converged,
                x: it.x.clone(),
                pobj,
                pinf,
                dinf,
                gap,
                iterations: iter,
            };
            if pinf <= self.tol && dinf <= self.tol && gap <= self.tol {
                return raw;
            }
            if !(it.x.amax() < 1e12) || !mu.is_finite() || mu > 1e16 {
                return RawResult {
                    termination: Termination::Diverged,
                    ..raw
                };
            }
            if mu < best_mu * 0.999 {
                best_mu = mu;
                no_progress = 0;
            } else {
                no_progress += 1;
            }
            last = Some(raw);
            if iter == self.max_iter || no_progress > 8 {
                break;
            }

            // Schur complement M_ij = <F_i, X F_j Z^-1>.
            let Some(zinv): Option<Vec<DMatrix<f64>>> = it.zs.iter().map(Self::sym_inverse).collect()
            else {
                break;
            };
            let mut schur = DMatrix::zeros(m, m);
            for ((b, x), zi) in form.blocks.iter().zip(&it.xs).zip(&zinv) {
                let k = b.dim;
                for (vj, tj) in &b.coeffs {
                    let mut p = DMatrix::zeros(k, k);
                    for &(a, c, w) in tj {
                        let mut col = p.column_mut(c);
                        col.axpy(w, &x.column(a), 1.0);
                    }
                    let g = p * zi;
                    for (vi, ti) in &b.coeffs {
                        let mut s = 0.0;
                        for &(a, c, w) in ti {
                            s += w * g[(c, a)];
                        }
                        schur[(*vi, *vj)] += s;
                    }
                }
            }
            if form.lp.g0.len() > 0 {
                let ratio = it.xl.component_div(&it.zl);
                let mut scaled = form.lp.g.clone();
                for (i, mut row) in scaled.row_iter_mut().enumerate() {
                    row *= ratio[i];
                }
                schur += form.lp.g.transpose() * scaled;
            }
            let schur = (&schur + schur.transpose()) * 0.5;
            let diag_max = schur.diagonal().amax().max(1e-300);
            let factor = {
                let mut reg = 0.0;
                let mut f = None;
                for _ in 0..6 {
                    let mut mm = schur.clone();
                    for i in 0..m {
                        mm[(i, i)] += reg;
                    }
                    if let Some(c) = mm.cholesky() {
                        f = Some(c);
                        break;
                    }
                    reg = if reg == 0.0 { 1e-14 * diag_max } else { reg * 100.0 };
                }
                f
            };
            let Some(factor) = factor else {
                break;
            };

            // X R_d Z^-1 and its adjoint, shared by both steps.
            let xrz: Vec<DMatrix<f64>> = it
                .xs
                .iter()
                .zip(&rd)
                .zip(&zinv)
                .map(|((x, r), zi)| x * r * zi)
                .collect();
            let xrzl = it.xl.component_mul(&rdl).component_div(&it.zl);
            let a_xrz = Self::adjoint(form, &xrz, &xrzl);
            let a_zinv = Self::adjoint(form, &zinv, &it.zl.map(|z| 1.0 / z));

            let direction = |sigma_mu: f64,
                             corr: Option<(&[DMatrix<f64>], &DVector<f64>)>|
             -> (DVector<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, DVector<f64>, DVector<f64>) {
                let mut rhs = &a_zinv * sigma_mu - &a_xrz - &form.c;
                let corr_mats: Option<(Vec<DMatrix<f64>>, DVector<f64>)> = corr.map(|(cs, cl)| {
                    let mats: Vec<DMatrix<f64>> = cs.iter().zip(&zinv).map(|(c, zi)| c * zi).collect();
                    let lp = cl.component_div(&it.zl);
                    (mats, lp)
                });
                if let Some((mats, lp)) = &corr_mats {
                    rhs -= Self::adjoint(form, mats, lp);
                }
                let build = |dx: &DVector<f64>| {
                    let mut dzs = Vec::with_capacity(form.blocks.len());
                    let mut dxs = Vec::with_capacity(form.blocks.len());
                    for (bi, b) in form.blocks.iter().enumerate() {
                        let dz = &rd[bi] + Self::lin_block(b, dx);
                        let mut k = &it.xs[bi] * &dz * &zinv[bi];
                        if let Some((mats, _)) = &corr_mats {
                            k += &mats[bi];
                        }
                        let dxm = &zinv[bi] * sigma_mu - &it.xs[bi] - (&k + k.transpose()) * 0.5;
                        dzs.push(dz);
                        dxs.push(dxm);
                    }
                    let dzl = &rdl + &form.lp.g * dx;
                    let mut kl = it.xl.component_mul(&dzl).component_div(&it.zl);
                    if let Some((_, lp)) = &corr_mats {
                        kl += lp;
                    }
                    let dxl = it.zl.map(|z| sigma_mu / z) - &it.xl - kl;
                    (dxs, dzs, dxl, dzl)
                };
                let mut dx = factor.solve(&rhs);
                let (mut dxs, mut dzs, mut dxl, mut dzl) = build(&dx);
                // Iterative refinement against A(dX) = r_p.
                let mut res = Self::adjoint(form, &dxs, &dxl) - &rp;
                for _ in 0..3 {
                    let before = res.norm();
                    if before <= 1e-15 * (1.0 + cnorm) {
                        break;
                    }
                    let cand = &dx + factor.solve(&res);
                    let built = build(&cand);
                    let after = Self::adjoint(form, &built.0, &built.2) - &rp;
                    if after.norm() >= before {
                        break;
                    }
                    dx = cand;
                    (dxs, dzs, dxl, dzl) = built;
                    res = after;
                }
                (dx, dxs, dzs, dxl, dzl)
            };

            let steps = |dxs: &[DMatrix<f64>], dzs: &[DMatrix<f64>], dxl: &DVector<f64>, dzl: &DVector<f64>| {
                let mut ap = Self::max_step_lp(&it.xl, dxl);
                let mut ad = Self::max_step_lp(&it.zl, dzl);
                for (x, d) in it.xs.iter().zip(dxs) {
                    ap = ap.min(Self::max_step_psd(x, d));
                }
                for (z, d) in it.zs.iter().zip(dzs) {
                    ad = ad.min(Self::max_step_psd(z, d));
                }
                (ap, ad)
            };

            // Predictor.
            let (_, dxs_a, dzs_a, dxl_a, dzl_a) = direction(0.0, None);
            let (ap, ad) = steps(&dxs_a, &dzs_a, &dxl_a, &dzl_a);
            let (ap1, ad1) = (ap.min(1.0), ad.min(1.0));
            let mut xz_aff = 0.0;
            for bi in 0..form.blocks.len() {
                let xa = &it.xs[bi] + &dxs_a[bi] * ap1;
                let za = &it.zs[bi] + &dzs_a[bi] * ad1;
                xz_aff += xa.dot(&za);
            }
            xz_aff += (&it.xl + &dxl_a * ap1).dot(&(&it.zl + &dzl_a * ad1));
            let mu_aff = (xz_aff / ncone).max(0.0);
            let expon = (3.0 * ap1.min(ad1).powi(2)).max(1.0);
            let sigma = (mu_aff / mu).powf(expon).clamp(0.0, 1.0);

            // Corrector.
            let corr: Vec<DMatrix<f64>> = dxs_a.iter().zip(&dzs_a).map(|(a, b)| a * b).collect();
            let corr_l = dxl_a.component_mul(&dzl_a);
            let (dx, dxs, dzs, dxl, dzl) = direction(sigma * mu, Some((&corr, &corr_l)));
            let (ap, ad) = steps(&dxs, &dzs, &dxl, &dzl);
            let gamma = 0.9 + 0.09 * ap1.min(ad1);
            let (ap, ad) = ((gamma * ap).min(1.0), (gamma * ad).min(1.0));
            if ap < 1e-12 && ad < 1e-12 {
                return RawResult {
                    termination: Termination::Stalled,
                    ..last.unwrap()
                };
            }
            for bi in 0..form.blocks.len() {
                it.xs[bi] += &dxs[bi] * ap;
                it.xs[bi] = (&it.xs[bi] + it.xs[bi].transpose()) * 0.5;
                it.zs[bi] += &dzs[bi] * ad;
                it.zs[bi] = (&it.zs[bi] + it.zs[bi].transpose()) * 0.5;
            }
            it.xl += &dxl * ap;
            it.zl += &dzl * ad;
            it.x += &dx * ad;
        }
        let raw = last.expect("at least one iteration is evaluated");
        let termination = if raw.iterations >= self.max_iter {
            Termination::IterationLimit
        } else {
            Termination::Stalled
        };
        RawResult { termination, ..raw }
    }

    /// Phase I: `maximize t` subject to `F(x) - t I ⪰ 0` on every block
    /// and `t <= 1`.
    fn phase_one(&self, form: &StandardForm) -> RawResult {
        let t = form.m;
        let mut blocks = form.blocks.clone();
        for b in &mut blocks {
            b.coeffs.push((t, (0..b.dim).map(|i| (i, i, -1.0)).collect()));
        }
        let rows = form.lp.g0.len();
        let mut g = DMatrix::zeros(rows + 1, t + 1);
        g.view_mut((0, 0), (rows, t)).copy_from(&form.lp.g);
        for i in 0..rows {
            g[(i, t)] = -1.0;
        }
        g[(rows, t)] = -1.0;
        let mut g0 = DVector::zeros(rows + 1);
        g0.rows_mut(0, rows).copy_from(&form.lp.g0);
        g0[rows] = 1.0;
        let mut c = DVector::zeros(t + 1);
        c[t] = -1.0;
        self.run(&StandardForm {
            m: t + 1,
            c,
            blocks,
            lp: LpBlock { g0, g },
        })
    }
}

impl ConicSolver for InteriorPointSolver {
    fn solve(&self, program: &ConicProgram) -> SolverOutcome {
        let failure = |status, diagnostics: String, iterations| SolverOutcome {
            status,
            x: None,
            objective: None,
            iterations,
            diagnostics,
        };
        let (form, recovery) = match compile(program) {
            Ok(v) => v,
            Err(msg) if msg.contains("inconsistent") => return failure(SolverStatus::Infeasible, msg, 0),
            Err(msg) => return failure(SolverStatus::NumericalFailure, msg, 0),
        };
        let (form, kept) = match prune(&form) {
            Ok(v) => v,
            Err(msg) => return failure(SolverStatus::NumericalFailure, msg, 0),
        };
        let lift = |z: &DVector<f64>| {
            let mut full = DVector::zeros(recovery.basis.ncols());
            for (k, &v) in kept.iter().enumerate() {
                full[v] = z[k];
            }
            &recovery.offset + &recovery.basis * full
        };

        if form.m == 0 {
            // Nothing to optimize: check the constant constraints.
            let ok = form
                .blocks
                .iter()
                .all(|b| b.f0.symmetric_eigenvalues().min() >= -self.tol * (1.0 + b.f0.amax()))
                && form.lp.g0.iter().all(|&v| v >= -self.tol);
            let x = lift(&DVector::zeros(0));
            return if ok {
                SolverOutcome {
                    status: SolverStatus::Optimal,
                    objective: Some(program.objective_value(&x)),
                    x: Some(x),
                    iterations: 0,
                    diagnostics: "no free variables".into(),
                }
            } else {
                failure(SolverStatus::Infeasible, "constant constraint violated".into(), 0)
            };
        }

        let raw = self.run(&form);
        let summary = |r: &RawResult| {
            format!(
                "{:?} after {} iterations (pinf {:.2e}, dinf {:.2e}, gap {:.2e})",
                r.termination, r.iterations, r.pinf, r.dinf, r.gap
            )
        };
        let loose = 1e3 * self.tol;
        let accept = raw.termination == Termination::Converged
            || (raw.termination != Termination::Diverged
                && raw.pinf <= loose
                && raw.dinf <= loose
                && raw.gap <= loose);
        if accept {
            let x = lift(&raw.x);
            return SolverOutcome {
                status: SolverStatus::Optimal,
                objective: Some(program.objective_value(&x)),
                x: Some(x),
                iterations: raw.iterations,
                diagnostics: summary(&raw),
            };
        }

        let phase = self.phase_one(&form);
        let t_star = -phase.pobj;
        let diagnostics = format!(
            "{}; phase I {} gives max margin {t_star:.3e}",
            summary(&raw),
            summary(&phase)
        );
        let phase_ok = phase.pinf <= loose && phase.dinf <= loose;
        let status = if phase_ok && t_star < -loose.max(1e-7) {
            SolverStatus::Infeasible
        } else {
            SolverStatus::NumericalFailure
        };
        failure(status, diagnostics, raw.iterations + phase.iterations)
    }
}
