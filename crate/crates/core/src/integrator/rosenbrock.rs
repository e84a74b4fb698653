use nalgebra::{DMatrix, DVector};

use super::{error_norm, fd_jacobian, Dense, IntegratorConfig, OdeSystem, Stats, StepOutcome};

/// `d = 1 / (2 + sqrt 2)`.
pub(crate) const D: f64 = 0.292_893_218_813_452_5;
/// `e32 = 6 + sqrt 2`.
const E32: f64 = 7.414_213_562_373_095;

/// Shampine-Reichelt Rosenbrock 2(3) pair. The propagated solution is second
/// order and L-stable; the embedded third-order stage only feeds the error
/// estimate.
pub(crate) struct Rosenbrock23 {
    n: usize,
    jac: DMatrix<f64>,
    dfdt: Vec<f64>,
    jac_valid: bool,
}

impl Rosenbrock23 {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            n,
            jac: DMatrix::zeros(n, n),
            dfdt: vec![0.0; n],
            jac_valid: false,
        }
    }

    pub(crate) fn invalidate(&mut self) {
        self.jac_valid = false;
    }

    fn refresh_jacobian<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        t: f64,
        y: &[f64],
        f0: &[f64],
        stats: &mut Stats,
    ) {
        if self.jac_valid {
            return;
        }
        if !sys.jacobian(t, y, &mut self.jac) {
            stats.rhs_evals += fd_jacobian(sys, t, y, f0, &mut self.jac);
        }
        stats.jacobian_evals += 1;
        if sys.autonomous() {
            self.dfdt.fill(0.0);
        } else {
            let dt = f64::EPSILON.sqrt() * t.abs().max(1.0);
            let mut ft = vec![0.0; self.n];
            sys.rhs(t + dt, y, &mut ft);
            stats.rhs_evals += 1;
            for i in 0..self.n {
                self.dfdt[i] = (ft[i] - f0[i]) / dt;
            }
        }
        self.jac_valid = true;
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn step<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        t: f64,
        y: &[f64],
        f0: &[f64],
        h: f64,
        cfg: &IntegratorConfig,
        stats: &mut Stats,
    ) -> Option<StepOutcome> {
        let n = self.n;
        self.refresh_jacobian(sys, t, y, f0, stats);

        let w = DMatrix::identity(n, n) - &self.jac * (h * D);
        let lu = w.lu();
        let solve = |rhs: Vec<f64>| -> Option<Vec<f64>> {
            lu.solve(&DVector::from_vec(rhs)).map(|v| v.data.into())
        };
        let hd = h * D;

        let k1 = solve((0..n).map(|i| f0[i] + hd * self.dfdt[i]).collect())?;

        let mid: Vec<f64> = (0..n).map(|i| y[i] + 0.5 * h * k1[i]).collect();
        let mut f1 = vec![0.0; n];
        sys.rhs(t + 0.5 * h, &mid, &mut f1);

        let k2 = solve((0..n).map(|i| f1[i] - k1[i]).collect())?;
        let k2: Vec<f64> = k2.iter().zip(&k1).map(|(a, b)| a + b).collect();

        let y_new: Vec<f64> = (0..n).map(|i| y[i] + h * k2[i]).collect();
        let mut f2 = vec![0.0; n];
        sys.rhs(t + h, &y_new, &mut f2);
        stats.rhs_evals += 2;

        let k3 = solve(
            (0..n)
                .map(|i| f2[i] - E32 * (k2[i] - f1[i]) - 2.0 * (k1[i] - f0[i]) + hd * self.dfdt[i])
                .collect(),
        )?;

        let err_vec: Vec<f64> = (0..n)
            .map(|i| h / 6.0 * (k1[i] - 2.0 * k2[i] + k3[i]))
            .collect();
        let err = error_norm(&err_vec, y, &y_new, cfg.rtol, cfg.atol);

        Some(StepOutcome {
            y_new,
            f_new: f2,
            err,
            dense: Dense::Rosenbrock { k1, k2 },
        })
    }
}
