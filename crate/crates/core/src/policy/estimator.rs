use serde::{Deserialize, Serialize};

use crate::ad::{Adam, Tape, Tensor, Var};

use super::net::build_estimator;
use super::{PolicyError, PolicyParams};

/// Predicted ball velocity and terrain parameters of the current zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatedContext {
    pub ball_velocity: [f64; 2],
    pub slope: [f64; 2],
    pub roughness: f64,
    pub friction: f64,
}

impl EstimatedContext {
    pub const DIM: usize = 6;

    pub fn from_slice(z: &[f64]) -> Self {
        Self {
            ball_velocity: [z[0], z[1]],
            slope: [z[2], z[3]],
            roughness: z[4],
            friction: z[5],
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.ball_velocity[0],
            self.ball_velocity[1],
            self.slope[0],
            self.slope[1],
            self.roughness,
            self.friction,
        ]
    }
}

pub(crate) fn flatten_history(
    params: &PolicyParams,
    history: &[Vec<f64>],
) -> Result<Vec<f64>, PolicyError> {
    let window = params.config.estimator_window;
    if history.len() < window {
        return Err(PolicyError::HistoryLength {
            got: history.len(),
            expected: window,
        });
    }
    let step = params.dims.estimator_step_dim;
    let recent = &history[history.len() - window..];
    let mut flat = Vec::with_capacity(window * step);
    for h in recent {
        if h.len() != step {
            return Err(PolicyError::ObservationLength {
                got: h.len(),
                expected: step,
            });
        }
        flat.extend_from_slice(h);
    }
    Ok(flat)
}

/// Supervised regression of the context estimator onto simulator ground
/// truth. Only `estimator.*` parameters are touched.
#[derive(Debug, Clone)]
pub struct EstimatorTrainer {
    tape: Tape,
    loss: Var,
    adam: Adam,
}

impl EstimatorTrainer {
    pub fn new(params: &PolicyParams, lr: f64) -> Self {
        let mut tape = Tape::new();
        let hist = tape.input("history");
        let target = tape.input("target");
        let pred = build_estimator(&mut tape, &params.config, hist);
        let err = tape.sub(pred, target);
        let sq = tape.mul(err, err);
        let loss = tape.mean(sq);
        let adam = Adam::for_store(lr, &params.store, PolicyParams::is_estimator);
        Self { tape, loss, adam }
    }

    fn check(&self, params: &PolicyParams, histories: &Tensor) -> Result<(), PolicyError> {
        let step = params.dims.estimator_step_dim;
        let want = step * params.config.estimator_window;
        if histories.cols() != want {
            return Err(PolicyError::HistoryLength {
                got: histories.cols() / step.max(1),
                expected: params.config.estimator_window,
            });
        }
        Ok(())
    }

    /// Mean squared error of the current estimator, without updating.
    pub fn loss(
        &mut self,
        params: &PolicyParams,
        histories: &Tensor,
        targets: &Tensor,
    ) -> Result<f64, PolicyError> {
        self.check(params, histories)?;
        params.store.bind_into(&mut self.tape);
        self.tape.bind("history", histories.clone())?;
        self.tape.bind("target", targets.clone())?;
        self.tape.forward()?;
        Ok(self.tape.value(self.loss)?.item())
    }

    /// One Adam step on the MSE; returns the pre-update loss.
    pub fn update(
        &mut self,
        params: &mut PolicyParams,
        histories: &Tensor,
        targets: &Tensor,
    ) -> Result<f64, PolicyError> {
        let loss = self.loss(params, histories, targets)?;
        let grads = self.tape.backward(self.loss, Tensor::scalar(1.0))?;
        self.adam.step(&mut params.store, &grads)?;
        Ok(loss)
    }
}
