use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    /// Fixed integration and sampling step, in seconds.
    pub step: f64,
    pub initial: [f64; 3],
    /// Number of samples returned, initial state included.
    pub steps: usize,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
            step: 0.1,
            initial: [1.0, 1.0, 1.0],
            steps: 2500,
        }
    }
}

impl LorenzParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidParameter("steps must be at least 1".into()));
        }
        Ok(())
    }

    fn derivative(&self, s: [f64; 3]) -> [f64; 3] {
        let [o, p, q] = s;
        [
            self.sigma * (p - o),
            o * (self.rho - q) - p,
            o * p - self.beta * q,
        ]
    }
}

/// One classical fourth-order Runge–Kutta step of size `h`.
pub fn rk4_step(params: &LorenzParams, s: [f64; 3], h: f64) -> [f64; 3] {
    let axpy = |a: [f64; 3], k: [f64; 3], t: f64| [a[0] + t * k[0], a[1] + t * k[1], a[2] + t * k[2]];
    let k1 = params.derivative(s);
    let k2 = params.derivative(axpy(s, k1, 0.5 * h));
    let k3 = params.derivative(axpy(s, k2, 0.5 * h));
    let k4 = params.derivative(axpy(s, k3, h));
    let mut out = s;
    for i in 0..3 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Trajectory `(o, p, q)` sampled every `params.step` seconds.
pub fn simulate_lorenz(params: &LorenzParams) -> Result<Vec<[f64; 3]>> {
    params.validate()?;
    let mut states = Vec::with_capacity(params.steps);
    let mut s = params.initial;
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(0));
    }
    states.push(s);
    for k in 1..params.steps {
        s = rk4_step(params, s, params.step);
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        states.push(s);
    }
    Ok(states)
}
