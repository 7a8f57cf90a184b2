/// Two-dimensional filter on `(θ, φ)` = (constraint violation, barrier objective).
#[derive(Debug, Clone)]
pub struct Filter {
    entries: Vec<(f64, f64)>,
    theta_min: f64,
    theta_max: f64,
    pub gamma_theta: f64,
    pub gamma_phi: f64,
}

impl Filter {
    /// Fresh filter for a subproblem whose start has violation `theta0`.
    pub fn new(theta0: f64) -> Self {
        let t = theta0.max(1.0);
        Self { entries: Vec::new(), theta_min: 1e-4 * t, theta_max: 1e4 * t, gamma_theta: 1e-5, gamma_phi: 1e-5 }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dominates(&self, theta: f64, phi: f64) -> bool {
        self.entries.iter().any(|&(t, p)| theta >= t && phi >= p)
    }

    /// Decides a trial point and updates the filter. `slope` is the barrier
    /// objective's directional derivative at the current point.
    #[allow(clippy::too_many_arguments)]
    pub fn accept(
        &mut self,
        theta: f64,
        phi: f64,
        trial_theta: f64,
        trial_phi: f64,
        alpha: f64,
        slope: f64,
        armijo: f64,
    ) -> bool {
        if trial_theta > self.theta_max || self.dominates(trial_theta, trial_phi) {
            return false;
        }
        let switching = theta <= self.theta_min && slope < 0.0 && alpha * (-slope).powf(2.3) > theta.powf(1.1);
        if switching {
            return trial_phi <= phi + armijo * alpha * slope;
        }
        let ok = trial_theta <= (1.0 - self.gamma_theta) * theta || trial_phi <= phi - self.gamma_phi * theta;
        if ok {
            self.entries.push(((1.0 - self.gamma_theta) * theta, phi - self.gamma_phi * theta));
        }
        ok
    }
}
