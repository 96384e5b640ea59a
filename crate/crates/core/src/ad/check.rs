use super::{AdError, Gradients, Tape, Tensor, Var};

/// Outcome of a finite-difference comparison for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    /// Flat index of the entry with the largest error.
    pub worst_index: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
    pub passed: bool,
}

impl FdReport {
    pub fn failed_params(&self) -> Vec<&str> {
        self.params
            .iter()
            .filter(|p| !p.passed)
            .map(|p| p.name.as_str())
            .collect()
    }
}

/// Relative error with an absolute floor in the denominator so that
/// entries whose true gradient is ~0 are judged on absolute error.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

const DENOMINATOR_FLOOR: f64 = 1e-6;

/// Compares the tape's analytic gradient of the scalar `output` against
/// central differences with step `h`, for every parameter input.
///
/// The tape must have all inputs bound. Bound values are restored on exit.
pub fn finite_diff_check(tape: &mut Tape, output: Var, h: f64, tol: f64) -> Result<FdReport, AdError> {
    tape.forward()?;
    let analytic = tape.backward(output, Tensor::scalar(1.0))?;
    finite_diff_check_against(tape, output, &analytic, h, tol)
}

/// Like [`finite_diff_check`] but checks a caller-supplied gradient.
pub fn finite_diff_check_against(
    tape: &mut Tape,
    output: Var,
    analytic: &Gradients,
    h: f64,
    tol: f64,
) -> Result<FdReport, AdError> {
    let names: Vec<String> = tape
        .input_names()
        .filter(|(_, p)| *p)
        .map(|(n, _)| n.to_string())
        .collect();
    let mut params = Vec::with_capacity(names.len());
    for name in names {
        let original = tape
            .bound(&name)
            .cloned()
            .ok_or_else(|| AdError::Unbound(name.clone()))?;
        let grad = analytic
            .get(&name)
            .ok_or_else(|| AdError::UnknownParam(name.clone()))?;
        let mut worst = 0.0f64;
        let mut worst_index = 0;
        for i in 0..original.len() {
            let mut plus = original.clone();
            plus.data_mut()[i] += h;
            tape.bind(&name, plus)?;
            tape.forward()?;
            let fp = tape.value(output)?.item();
            let mut minus = original.clone();
            minus.data_mut()[i] -= h;
            tape.bind(&name, minus)?;
            tape.forward()?;
            let fm = tape.value(output)?.item();
            let numeric = (fp - fm) / (2.0 * h);
            let err = relative_error(grad.data()[i], numeric, DENOMINATOR_FLOOR);
            if err > worst || err.is_nan() {
                worst = err;
                worst_index = i;
            }
        }
        tape.bind(&name, original)?;
        params.push(ParamCheck {
            name,
            max_rel_error: worst,
            worst_index,
            passed: worst < tol,
        });
    }
    tape.forward()?;
    let max_rel_error = params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max);
    let passed = params.iter().all(|p| p.passed);
    Ok(FdReport {
        params,
        max_rel_error,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_matches_exactly() {
        let mut t = Tape::new();
        let x = t.param("x");
        let y = t.scale(x, 3.0);
        let s = t.sum(y);
        t.bind("x", Tensor::row(&[0.7, -1.2])).unwrap();
        let report = finite_diff_check(&mut t, s, 1e-5, 1e-10).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn corrupted_gradient_fails_only_that_parameter() {
        let mut t = Tape::new();
        let x = t.input("x");
        let w = t.param("w");
        let b = t.param("b");
        let h = t.matmul(x, w);
        let h = t.add(h, b);
        let h = t.tanh(h);
        let s = t.sum(h);
        t.bind("x", Tensor::new(2, 2, vec![0.3, -0.8, 1.1, 0.4]).unwrap())
            .unwrap();
        t.bind("w", Tensor::new(2, 2, vec![0.5, -0.2, 0.1, 0.9]).unwrap())
            .unwrap();
        t.bind("b", Tensor::row(&[0.05, -0.1])).unwrap();
        t.forward().unwrap();
        let mut g = t.backward(s, Tensor::scalar(1.0)).unwrap();
        g.get_mut("w").unwrap().data_mut()[1] *= 2.0;
        let report = finite_diff_check_against(&mut t, s, &g, 1e-5, 1e-6).unwrap();
        assert_eq!(report.failed_params(), vec!["w"]);
        let w = report.params.iter().find(|p| p.name == "w").unwrap();
        assert_eq!(w.worst_index, 1);
    }
}
