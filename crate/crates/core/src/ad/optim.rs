use serde::{Deserialize, Serialize};

use super::{AdError, Gradients, ParamStore, Tensor};

/// Adaptive moment estimation.
///
/// Moments are allocated for the parameter names given at construction;
/// gradients for other names are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: Vec<(String, Tensor, Tensor)>,
}

impl Adam {
    pub fn new<'a>(lr: f64, params: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Self {
        let moments = params
            .into_iter()
            .map(|(n, t)| {
                (
                    n.to_string(),
                    Tensor::zeros(t.rows(), t.cols()),
                    Tensor::zeros(t.rows(), t.cols()),
                )
            })
            .collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments,
        }
    }

    /// Optimizer over every parameter of `store` whose name passes `filter`.
    pub fn for_store(lr: f64, store: &ParamStore, filter: impl Fn(&str) -> bool) -> Self {
        Self::new(lr, store.iter().filter(|(n, _)| filter(n)))
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn tracks(&self, name: &str) -> bool {
        self.moments.iter().any(|(n, ..)| n == name)
    }

    pub fn moments(&self) -> impl Iterator<Item = (&str, &Tensor, &Tensor)> {
        self.moments.iter().map(|(n, m, v)| (n.as_str(), m, v))
    }

    pub(crate) fn from_parts(
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        step: u64,
        moments: Vec<(String, Tensor, Tensor)>,
    ) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step,
            moments,
        }
    }

    /// Applies one update to every tracked parameter.
    ///
    /// All gradients are validated before any parameter is touched.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> Result<(), AdError> {
        for (name, m, _) in &self.moments {
            let g = grads
                .get(name)
                .ok_or_else(|| AdError::UnknownParam(name.clone()))?;
            let p = params.require(name)?;
            if g.shape() != m.shape() || p.shape() != m.shape() {
                return Err(AdError::GradShape {
                    name: name.clone(),
                    grad: g.shape(),
                    param: p.shape(),
                });
            }
            if !g.is_finite() {
                return Err(AdError::NonFiniteGradient(name.clone()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, m, v) in &mut self.moments {
            let g = grads.get(name).expect("validated above");
            let p = params.get_mut(name).expect("validated above");
            let (md, vd, pd) = (m.data_mut(), v.data_mut(), p.data_mut());
            for (i, &gi) in g.data().iter().enumerate() {
                md[i] = self.beta1 * md[i] + (1.0 - self.beta1) * gi;
                vd[i] = self.beta2 * vd[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = md[i] / bc1;
                let vhat = vd[i] / bc2;
                pd[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
