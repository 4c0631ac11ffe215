use alloc::vec::Vec;

use super::{DenseMatrix, Tape, Var};
use crate::error::Result;

/// Outcome of comparing analytic gradients against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub compared: usize,
    /// Coordinates skipped because the function has a kink there.
    pub skipped: usize,
    pub passed: bool,
}

// Relative error denominators never drop below this, so coordinates whose
// true gradient is ~0 are judged on absolute error instead.
const REL_FLOOR: f64 = 1e-3;

// One-sided slopes of a smooth function differ by about h * |f''|; a jump
// this large relative to the slope means a kink.
const KINK_JUMP: f64 = 1e-2;

/// Checks the gradients of a scalar-valued expression.
///
/// `build` records the expression on a fresh tape given parameter leaves
/// (in the order of `params`) and returns the scalar root. Coordinates where
/// the one-sided differences jump (for example relu evaluated exactly at 0)
/// are excluded.
pub fn grad_check<F>(build: F, params: &[DenseMatrix], h: f64, tolerance: f64) -> GradCheckReport
where
    F: for<'t> Fn(&mut Tape<'t>, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[DenseMatrix]| -> Option<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let root = build(&mut tape, &vars).ok()?;
        Some(tape.scalar(root))
    };

    let failed = GradCheckReport {
        max_relative_error: f64::INFINITY,
        compared: 0,
        skipped: 0,
        passed: false,
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let Ok(root) = build(&mut tape, &vars) else { return failed };
    let Ok(grads) = tape.backward(root) else { return failed };
    let Some(f0) = eval(params) else { return failed };

    let mut work: Vec<DenseMatrix> = params.to_vec();
    let mut max_rel: f64 = 0.0;
    let mut compared = 0;
    let mut skipped = 0;
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var);
        for k in 0..params[pi].len() {
            let orig = params[pi].data()[k];
            work[pi].data_mut()[k] = orig + h;
            let fp = eval(&work);
            work[pi].data_mut()[k] = orig - h;
            let fm = eval(&work);
            work[pi].data_mut()[k] = orig;
            let (Some(fp), Some(fm)) = (fp, fm) else { return failed };

            let forward = (fp - f0) / h;
            let backward = (f0 - fm) / h;
            let numeric = (fp - fm) / (2.0 * h);
            let scale = forward.abs().max(backward.abs()).max(1.0);
            if (forward - backward).abs() / scale > KINK_JUMP {
                skipped += 1;
                continue;
            }
            let a = analytic.data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            max_rel = max_rel.max(rel);
            compared += 1;
        }
    }
    GradCheckReport {
        max_relative_error: max_rel,
        compared,
        skipped,
        passed: max_rel < tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_form_passes() {
        let a = DenseMatrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]).unwrap();
        let x = DenseMatrix::from_rows(&[[0.3], [-1.2]]).unwrap();
        let report = grad_check(
            |t, p| {
                let a = t.constant(a.clone());
                let ax = t.matmul(a, p[0])?;
                let xt = t.transpose(p[0])?;
                t.matmul(xt, ax)
            },
            &[x],
            1e-5,
            1e-5,
        );
        assert!(report.passed, "{report:?}");
        assert_eq!(report.compared, 2);
    }

    #[test]
    fn softmax_nll_composite_passes() {
        let logits = DenseMatrix::from_rows(&[[0.2, -1.0, 0.7], [1.5, 0.1, -0.3]]).unwrap();
        let mut mask = DenseMatrix::zeros(2, 3);
        mask.set(0, 2, -0.5);
        mask.set(1, 0, -0.5);
        let report = grad_check(
            |t, p| {
                let s = t.row_softmax(p[0])?;
                let l = t.log(s)?;
                let m = t.constant(mask.clone());
                let prod = t.mul(l, m)?;
                t.reduce_sum(prod)
            },
            &[logits],
            1e-5,
            1e-4,
        );
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn relu_kink_is_skipped() {
        let x = DenseMatrix::from_rows(&[[0.0, 1.0, -1.0]]).unwrap();
        let report = grad_check(
            |t, p| {
                let r = t.relu(p[0])?;
                t.reduce_sum(r)
            },
            &[x],
            1e-5,
            1e-4,
        );
        assert!(report.passed);
        assert_eq!(report.skipped, 1);
        assert_eq!(report.compared, 2);
    }

    #[test]
    fn sqrt_of_square_passes_away_from_zero() {
        let x = DenseMatrix::from_rows(&[[2.0]]).unwrap();
        let ok = grad_check(
            |t, p| {
                let sq = t.mul(p[0], p[0])?;
                let s = t.sqrt(sq)?;
                t.reduce_sum(s)
            },
            &[x.clone()],
            1e-5,
            1e-4,
        );
        assert!(ok.passed);
    }
}
