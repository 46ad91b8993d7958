//! Maxwellian-weighted Galerkin basis in configuration space and the dense
//! operator blocks built from it: mass (identity by construction),
//! stiffness under the Rouse coupling, drag pairings and Kramers moment
//! vectors.
//!
//! Per spring the basis starts from tensor products of one-dimensional
//! polynomials orthonormal under the proto weight `exp(-U(x^2/2))` and is
//! re-orthonormalized against the true radial Maxwellian through a Cholesky
//! factor of the Gram matrix. Across springs the measure factorizes, so the
//! tensor basis is exactly orthonormal.

use crate::error::{Error, Result};
use crate::maxwellian::{potential_derivative, MaxwellianModel, SpringQuadrature};
use crate::params::ChainSpec;
use nalgebra::{DMatrix, DVector};

/// Orthonormal basis data for a single spring (d = 2).
#[derive(Debug, Clone)]
pub struct SpringBasis {
    /// Basis size `(degree + 1)^2`.
    pub m: usize,
    /// Per-coordinate degrees `(a, b)` in graded order; index 0 is the
    /// constant function.
    pub degrees: Vec<(usize, usize)>,
    /// Change of basis from the proto tensor functions:
    /// `phi_k = sum_mu transform[(k, mu)] p_mu`.
    pub transform: DMatrix<f64>,
    /// Values at quadrature nodes, `eval[(node, k)]`.
    pub eval: DMatrix<f64>,
    /// Gradients at quadrature nodes.
    pub deval: [DMatrix<f64>; 2],
    pub quad: SpringQuadrature,
    /// One-spring matrices: `grad_mass[c][k, l] = int M phi_k d_c phi_l`.
    pub grad_mass: [DMatrix<f64>; 2],
    /// `stiff[c][c'][k, l] = int M d_c phi_k d_c' phi_l`.
    pub stiff: [[DMatrix<f64>; 2]; 2],
    /// `drag[c][c'][k, l] = int M q_c' (d_c phi_k) phi_l`.
    pub drag: [[DMatrix<f64>; 2]; 2],
    /// `kramers[c][c'][l] = int M phi_l U'(|q|^2/2) q_c q_c'`.
    pub kramers: [[DVector<f64>; 2]; 2],
}

fn weighted_product(a: &DMatrix<f64>, w: &[f64], b: &DMatrix<f64>) -> DMatrix<f64> {
    // a^T diag(w) b with a, b of shape (nodes, m).
    let n = a.nrows();
    let mut aw = a.clone();
    for i in 0..n {
        let wi = w[i];
        for v in aw.row_mut(i).iter_mut() {
            *v *= wi;
        }
    }
    aw.transpose() * b
}

impl SpringBasis {
    /// Orthonormal basis values at an arbitrary point, via the proto
    /// recurrence and the stored change of basis.
    pub fn eval_point(&self, rec: &crate::quad1d::Recurrence, x: f64, y: f64, out: &mut [f64]) {
        let p1 = (self.m as f64).sqrt() as usize;
        let mut vx = vec![0.0; p1];
        let mut vy = vec![0.0; p1];
        rec.eval(x, &mut vx);
        rec.eval(y, &mut vy);
        let mut proto = vec![0.0; self.m];
        for (mu, &(a, b)) in self.degrees.iter().enumerate() {
            proto[mu] = vx[a] * vy[b];
        }
        for k in 0..self.m {
            let mut s = 0.0;
            for mu in 0..self.m {
                s += self.transform[(k, mu)] * proto[mu];
            }
            out[k] = s;
        }
    }

    pub fn build(model: &MaxwellianModel, degree: usize) -> Result<Self> {
        let quad = model.quad.clone();
        let nn = quad.len();
        let p1 = degree + 1;
        let m = p1 * p1;

        // Graded ordering of tensor degrees.
        let mut degrees: Vec<(usize, usize)> = (0..p1)
            .flat_map(|a| (0..p1).map(move |b| (a, b)))
            .collect();
        degrees.sort_by_key(|&(a, b)| (a + b, a));

        // Proto 1D values and derivatives at each node coordinate.
        let rec = &model.proto_recurrence;
        let mut proto = DMatrix::zeros(nn, m);
        let mut dproto_x = DMatrix::zeros(nn, m);
        let mut dproto_y = DMatrix::zeros(nn, m);
        let mut vx = vec![0.0; p1];
        let mut dx = vec![0.0; p1];
        let mut vy = vec![0.0; p1];
        let mut dy = vec![0.0; p1];
        for (node, c) in quad.coords.iter().enumerate() {
            rec.eval_with_derivative(c[0], &mut vx, &mut dx);
            rec.eval_with_derivative(c[1], &mut vy, &mut dy);
            for (k, &(a, b)) in degrees.iter().enumerate() {
                proto[(node, k)] = vx[a] * vy[b];
                dproto_x[(node, k)] = dx[a] * vy[b];
                dproto_y[(node, k)] = vx[a] * dy[b];
            }
        }

        // Orthonormalize against the true Maxwellian.
        let gram = weighted_product(&proto, &quad.weights, &proto);
        let chol = nalgebra::Cholesky::new(gram).ok_or_else(|| {
            Error::Resolution("Gram matrix of the q-basis lost positive definiteness".into())
        })?;
        let l = chol.l();
        let solve = |mat: &DMatrix<f64>| -> DMatrix<f64> {
            // rows of result = L^{-1} rows^T  =>  E = (L^{-1} mat^T)^T
            let mt = mat.transpose();
            let sol = l.solve_lower_triangular(&mt).expect("triangular solve");
            sol.transpose()
        };
        let transform = l
            .solve_lower_triangular(&DMatrix::identity(m, m))
            .expect("triangular inverse");
        let eval = solve(&proto);
        let deval = [solve(&dproto_x), solve(&dproto_y)];

        let grad_mass = [
            weighted_product(&eval, &quad.weights, &deval[0]),
            weighted_product(&eval, &quad.weights, &deval[1]),
        ];
        let stiff = [
            [
                weighted_product(&deval[0], &quad.weights, &deval[0]),
                weighted_product(&deval[0], &quad.weights, &deval[1]),
            ],
            [
                weighted_product(&deval[1], &quad.weights, &deval[0]),
                weighted_product(&deval[1], &quad.weights, &deval[1]),
            ],
        ];

        let coord = |node: usize, c: usize| quad.coords[node][c];
        let mut drag: [[DMatrix<f64>; 2]; 2] = [
            [DMatrix::zeros(m, m), DMatrix::zeros(m, m)],
            [DMatrix::zeros(m, m), DMatrix::zeros(m, m)],
        ];
        for c in 0..2 {
            for cp in 0..2 {
                let w: Vec<f64> = (0..nn).map(|n| quad.weights[n] * coord(n, cp)).collect();
                drag[c][cp] = weighted_product(&deval[c], &w, &eval);
            }
        }

        let mut kramers: [[DVector<f64>; 2]; 2] = [
            [DVector::zeros(m), DVector::zeros(m)],
            [DVector::zeros(m), DVector::zeros(m)],
        ];
        for c in 0..2 {
            for cp in 0..2 {
                let mut v = DVector::zeros(m);
                for node in 0..nn {
                    let s = quad.s_values[node];
                    let w = quad.weights[node]
                        * potential_derivative(s, &model.potential)
                        * coord(node, c)
                        * coord(node, cp);
                    for k in 0..m {
                        v[k] += w * eval[(node, k)];
                    }
                }
                kramers[c][cp] = v;
            }
        }

        Ok(SpringBasis {
            m,
            degrees,
            transform,
            eval,
            deval,
            quad,
            grad_mass,
            stiff,
            drag,
            kramers,
        })
    }
}

/// Full configuration-space discretization for a chain of `springs`
/// identical springs: total basis (tensor across springs), dense operator
/// blocks and their eigendecompositions.
pub struct QSpace {
    pub springs: usize,
    pub degree: usize,
    pub spring: SpringBasis,
    /// Total basis size `m^springs`.
    pub n_q: usize,
    /// Rouse-weighted stiffness `sum_ij A_ij int M grad_qj phi_nu . grad_qi phi_mu`.
    pub s_rouse: DMatrix<f64>,
    /// Identity-weighted stiffness over all coordinates (heat form).
    pub s_heat: DMatrix<f64>,
    /// Eigenbasis of `s_rouse`: columns are eigenvectors.
    pub rouse_vectors: DMatrix<f64>,
    pub rouse_values: DVector<f64>,
    pub heat_vectors: DMatrix<f64>,
    pub heat_values: DVector<f64>,
    /// Per spring `i`, per `(c, c')`: total-space drag matrix with entries
    /// `int M q_{i,c'} (d_{q_i,c} phi_mu) phi_nu`.
    pub drag_total: Vec<[[DMatrix<f64>; 2]; 2]>,
    /// Per spring `i`, per `(c, c')`: Kramers moment vector
    /// `int M phi_nu U' q_{i,c} q_{i,c'}`.
    pub kramers_total: Vec<[[DVector<f64>; 2]; 2]>,
    /// Row vectors `int M q_{i,c'} d_{q_i,c} phi_nu` used by the
    /// integration-by-parts audit.
    pub ibp_row: Vec<[[DVector<f64>; 2]; 2]>,
}

impl std::fmt::Debug for QSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QSpace")
            .field("springs", &self.springs)
            .field("degree", &self.degree)
            .field("n_q", &self.n_q)
            .finish()
    }
}

impl QSpace {
    pub fn build(model: &MaxwellianModel, chain: &ChainSpec, degree: usize) -> Result<Self> {
        if degree < 1 {
            return Err(Error::Resolution("q-degree must be >= 1".into()));
        }
        let springs = model.springs;
        if springs > 2 {
            return Err(Error::Unsupported(
                "configuration-space assembly implemented for chains of up to two springs".into(),
            ));
        }
        if chain.rouse.nrows() != springs {
            return Err(Error::invalid("rouse", "Rouse size mismatch"));
        }
        let spring = SpringBasis::build(model, degree)?;
        let m = spring.m;
        let n_q = m.pow(springs as u32);

        let mut s_rouse = DMatrix::zeros(n_q, n_q);
        let mut s_heat = DMatrix::zeros(n_q, n_q);
        match springs {
            1 => {
                for c in 0..2 {
                    s_rouse += chain.rouse[(0, 0)] * &spring.stiff[c][c];
                    s_heat += &spring.stiff[c][c];
                }
            }
            2 => {
                // Index (k1, k2) flattened as k1 * m + k2.
                let idx = |k1: usize, k2: usize| k1 * m + k2;
                for mu1 in 0..m {
                    for mu2 in 0..m {
                        for nu1 in 0..m {
                            for nu2 in 0..m {
                                let mut v_r = 0.0;
                                let mut v_h = 0.0;
                                for c in 0..2 {
                                    // i = j = 1 and i = j = 2.
                                    if mu2 == nu2 {
                                        v_r += chain.rouse[(0, 0)] * spring.stiff[c][c][(mu1, nu1)];
                                        v_h += spring.stiff[c][c][(mu1, nu1)];
                                    }
                                    if mu1 == nu1 {
                                        v_r += chain.rouse[(1, 1)] * spring.stiff[c][c][(mu2, nu2)];
                                        v_h += spring.stiff[c][c][(mu2, nu2)];
                                    }
                                    // Cross terms i != j.
                                    v_r += chain.rouse[(0, 1)]
                                        * spring.grad_mass[c][(nu1, mu1)]
                                        * spring.grad_mass[c][(mu2, nu2)];
                                    v_r += chain.rouse[(1, 0)]
                                        * spring.grad_mass[c][(mu1, nu1)]
                                        * spring.grad_mass[c][(nu2, mu2)];
                                }
                                s_rouse[(idx(mu1, mu2), idx(nu1, nu2))] += v_r;
                                s_heat[(idx(mu1, mu2), idx(nu1, nu2))] += v_h;
                            }
                        }
                    }
                }
            }
            _ => unreachable!(),
        }

        // Symmetrize against roundoff before the eigensolve.
        let s_rouse = 0.5 * (&s_rouse + s_rouse.transpose());
        let s_heat = 0.5 * (&s_heat + s_heat.transpose());

        let eig_r = s_rouse.clone().symmetric_eigen();
        let eig_h = s_heat.clone().symmetric_eigen();

        let kron_matrix = |a: &DMatrix<f64>, slot: usize| -> DMatrix<f64> {
            match springs {
                1 => a.clone(),
                2 => {
                    let mut out = DMatrix::zeros(n_q, n_q);
                    for k1 in 0..m {
                        for k2 in 0..m {
                            for l1 in 0..m {
                                for l2 in 0..m {
                                    let v = if slot == 0 {
                                        if k2 == l2 { a[(k1, l1)] } else { 0.0 }
                                    } else if k1 == l1 {
                                        a[(k2, l2)]
                                    } else {
                                        0.0
                                    };
                                    if v != 0.0 {
                                        out[(k1 * m + k2, l1 * m + l2)] = v;
                                    }
                                }
                            }
                        }
                    }
                    out
                }
                _ => unreachable!(),
            }
        };
        let kron_vector = |a: &DVector<f64>, slot: usize| -> DVector<f64> {
            match springs {
                1 => a.clone(),
                2 => {
                    let mut out = DVector::zeros(n_q);
                    for k1 in 0..m {
                        for k2 in 0..m {
                            out[k1 * m + k2] = if slot == 0 {
                                if k2 == 0 { a[k1] } else { 0.0 }
                            } else if k1 == 0 {
                                a[k2]
                            } else {
                                0.0
                            };
                        }
                    }
                    out
                }
                _ => unreachable!(),
            }
        };

        let mut drag_total = Vec::with_capacity(springs);
        let mut kramers_total = Vec::with_capacity(springs);
        let mut ibp_row = Vec::with_capacity(springs);
        for i in 0..springs {
            let mut dt: [[DMatrix<f64>; 2]; 2] = [
                [DMatrix::zeros(n_q, n_q), DMatrix::zeros(n_q, n_q)],
                [DMatrix::zeros(n_q, n_q), DMatrix::zeros(n_q, n_q)],
            ];
            let mut kt: [[DVector<f64>; 2]; 2] = [
                [DVector::zeros(n_q), DVector::zeros(n_q)],
                [DVector::zeros(n_q), DVector::zeros(n_q)],
            ];
            let mut it: [[DVector<f64>; 2]; 2] = [
                [DVector::zeros(n_q), DVector::zeros(n_q)],
                [DVector::zeros(n_q), DVector::zeros(n_q)],
            ];
            for c in 0..2 {
                for cp in 0..2 {
                    dt[c][cp] = kron_matrix(&spring.drag[c][cp], i);
                    kt[c][cp] = kron_vector(&spring.kramers[c][cp], i);
                    // Row vector of int M q_{c'} d_c phi over the spring,
                    // tensor-extended by the constant on the other slot.
                    let nn = spring.quad.len();
                    let mut row = DVector::zeros(m);
                    for node in 0..nn {
                        let w = spring.quad.weights[node] * spring.quad.coords[node][cp];
                        for k in 0..m {
                            row[k] += w * spring.deval[c][(node, k)];
                        }
                    }
                    it[c][cp] = kron_vector(&row, i);
                }
            }
            drag_total.push(dt);
            kramers_total.push(kt);
            ibp_row.push(it);
        }

        Ok(QSpace {
            springs,
            degree,
            spring,
            n_q,
            s_rouse,
            s_heat,
            rouse_vectors: eig_r.eigenvectors,
            rouse_values: eig_r.eigenvalues,
            heat_vectors: eig_h.eigenvectors,
            heat_values: eig_h.eigenvalues,
            drag_total,
            kramers_total,
            ibp_row,
        })
    }

    /// Index of the constant basis function.
    pub fn constant_index(&self) -> usize {
        0
    }

    /// Total degree of a flattened basis index.
    pub fn total_degree(&self, idx: usize) -> usize {
        match self.springs {
            1 => {
                let (a, b) = self.spring.degrees[idx];
                a + b
            }
            2 => {
                let m = self.spring.m;
                let (a1, b1) = self.spring.degrees[idx / m];
                let (a2, b2) = self.spring.degrees[idx % m];
                a1 + b1 + a2 + b2
            }
            _ => unreachable!(),
        }
    }

    /// Residual of the weighted integration-by-parts identity for a
    /// trace-free matrix `B` and a q-function given by total-basis
    /// coefficients: `int M sum_i (B q_i) . grad_qi phi` minus
    /// `int M phi sum_i U' q_i q_i^T : B`.
    pub fn ibp_residual(&self, b: &[[f64; 2]; 2], coeffs: &[f64]) -> Result<f64> {
        if (b[0][0] + b[1][1]).abs() > 1e-14 {
            return Err(Error::Precondition(format!(
                "integration-by-parts identity needs tr B = 0, got {}",
                b[0][0] + b[1][1]
            )));
        }
        if coeffs.len() != self.n_q {
            return Err(Error::State("coefficient length mismatch".into()));
        }
        let v = DVector::from_column_slice(coeffs);
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for i in 0..self.springs {
            for c in 0..2 {
                for cp in 0..2 {
                    lhs += b[c][cp] * self.ibp_row[i][c][cp].dot(&v);
                    rhs += b[c][cp] * self.kramers_total[i][c][cp].dot(&v);
                }
            }
        }
        Ok((lhs - rhs).abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maxwellian::MaxwellianModel;
    use crate::params::{rouse_matrix, PotentialSpec};
    use approx::assert_abs_diff_eq;

    fn gaussian_model(degree: usize) -> MaxwellianModel {
        MaxwellianModel::build(PotentialSpec { theta: 2.0, s_inf: 1e8 }, 1, 2, degree).unwrap()
    }

    #[test]
    fn basis_is_orthonormal_gaussian() {
        let model = gaussian_model(6);
        let basis = SpringBasis::build(&model, 6).unwrap();
        let gram = super::weighted_product(&basis.eval, &basis.quad.weights, &basis.eval);
        for i in 0..basis.m {
            for j in 0..basis.m {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(gram[(i, j)], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn basis_is_orthonormal_default_potential() {
        let model = MaxwellianModel::build(PotentialSpec::default(), 1, 2, 8).unwrap();
        let basis = SpringBasis::build(&model, 8).unwrap();
        let gram = super::weighted_product(&basis.eval, &basis.quad.weights, &basis.eval);
        let mut worst = 0.0_f64;
        for i in 0..basis.m {
            for j in 0..basis.m {
                let expect = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - expect).abs());
            }
        }
        assert!(worst < 1e-12, "worst Gram deviation {worst}");
    }

    #[test]
    fn first_basis_functions_match_hermite() {
        let model = gaussian_model(4);
        let basis = SpringBasis::build(&model, 4).unwrap();
        // phi_0 = 1, and the degree-(1,0) function is x, (2,0) is (x^2-1)/sqrt 2.
        let k10 = basis.degrees.iter().position(|&d| d == (1, 0)).unwrap();
        let k20 = basis.degrees.iter().position(|&d| d == (2, 0)).unwrap();
        for (node, c) in basis.quad.coords.iter().enumerate().step_by(17) {
            assert_abs_diff_eq!(basis.eval[(node, 0)], 1.0, epsilon = 1e-11);
            assert_abs_diff_eq!(basis.eval[(node, k10)], c[0], epsilon = 1e-9 * (1.0 + c[0].abs()));
            assert_abs_diff_eq!(
                basis.eval[(node, k20)],
                (c[0] * c[0] - 1.0) / 2.0_f64.sqrt(),
                epsilon = 1e-9 * (1.0 + c[0] * c[0])
            );
        }
    }

    #[test]
    fn constant_has_unit_mass() {
        let model = MaxwellianModel::build(PotentialSpec::default(), 1, 2, 5).unwrap();
        let basis = SpringBasis::build(&model, 5).unwrap();
        let mass: f64 = basis
            .quad
            .weights
            .iter()
            .enumerate()
            .map(|(n, w)| w * basis.eval[(n, 0)])
            .sum();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn heat_stiffness_is_degree_diagonal_for_gaussian() {
        let model = gaussian_model(5);
        let chain = rouse_matrix(1).unwrap();
        let qs = QSpace::build(&model, &chain, 5).unwrap();
        for k in 0..qs.n_q {
            for l in 0..qs.n_q {
                let expect = if k == l { qs.total_degree(k) as f64 } else { 0.0 };
                assert_abs_diff_eq!(qs.s_heat[(k, l)], expect, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn rouse_stiffness_is_scaled_heat_for_single_spring() {
        let model = gaussian_model(4);
        let chain = rouse_matrix(1).unwrap();
        let qs = QSpace::build(&model, &chain, 4).unwrap();
        let diff = (&qs.s_rouse - 2.0 * &qs.s_heat).norm();
        assert!(diff < 1e-10, "diff {diff}");
    }

    #[test]
    fn ibp_residual_small_for_all_basis_functions() {
        // Load-bearing identity for energy stability, default potential.
        let model = MaxwellianModel::build(PotentialSpec::default(), 1, 2, 8).unwrap();
        let chain = rouse_matrix(1).unwrap();
        let qs = QSpace::build(&model, &chain, 8).unwrap();
        let mut state = 0x9e3779b97f4a7c15_u64;
        let mut rnd = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for _ in 0..20 {
            let a = rnd();
            let bb = rnd();
            let c = rnd();
            let b = [[a, bb], [c, -a]];
            for k in 0..qs.n_q {
                let mut coeffs = vec![0.0; qs.n_q];
                coeffs[k] = 1.0;
                let r = qs.ibp_residual(&b, &coeffs).unwrap();
                assert!(r <= 1e-10, "basis {k}: residual {r}");
            }
        }
    }

    #[test]
    fn ibp_rejects_nonzero_trace() {
        let model = gaussian_model(3);
        let chain = rouse_matrix(1).unwrap();
        let qs = QSpace::build(&model, &chain, 3).unwrap();
        let coeffs = vec![0.0; qs.n_q];
        let b = [[1.0, 0.0], [0.0, 1.0]];
        assert!(qs.ibp_residual(&b, &coeffs).is_err());
    }

    #[test]
    fn ibp_trivial_for_constant() {
        let model = gaussian_model(3);
        let chain = rouse_matrix(1).unwrap();
        let qs = QSpace::build(&model, &chain, 3).unwrap();
        let mut coeffs = vec![0.0; qs.n_q];
        coeffs[0] = 1.0;
        let b = [[0.3, 0.4], [-0.2, -0.3]];
        let r = qs.ibp_residual(&b, &coeffs).unwrap();
        assert!(r <= 1e-12);
    }

    #[test]
    fn two_spring_assembly_is_symmetric_psd() {
        let model = MaxwellianModel::build(PotentialSpec::default(), 2, 2, 2).unwrap();
        let chain = rouse_matrix(2).unwrap();
        let qs = QSpace::build(&model, &chain, 2).unwrap();
        let asym = (&qs.s_rouse - qs.s_rouse.transpose()).norm();
        assert!(asym < 1e-12);
        let min_eig = qs.rouse_values.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min_eig > -1e-10, "min eigenvalue {min_eig}");
        // Constant function is in the kernel.
        let e0 = DVector::from_fn(qs.n_q, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let r = (&qs.s_rouse * &e0).norm();
        assert!(r < 1e-10);
    }

    #[test]
    fn two_spring_ibp_holds() {
        let model = MaxwellianModel::build(PotentialSpec::default(), 2, 2, 2).unwrap();
        let chain = rouse_matrix(2).unwrap();
        let qs = QSpace::build(&model, &chain, 2).unwrap();
        let b = [[0.7, -0.1], [0.5, -0.7]];
        for k in 0..qs.n_q {
            let mut coeffs = vec![0.0; qs.n_q];
            coeffs[k] = 1.0;
            let r = qs.ibp_residual(&b, &coeffs).unwrap();
            assert!(r <= 1e-10, "basis {k}: residual {r}");
        }
    }
}
