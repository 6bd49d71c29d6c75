use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Distance-dependent score bias `b(r)` and value gate `phi(r)`.
#[derive(Clone)]
pub struct RadialScalars {
    bias: ScalarFn,
    gate: ScalarFn,
    label: String,
}

impl RadialScalars {
    pub fn new(
        bias: impl Fn(f64) -> f64 + Send + Sync + 'static,
        gate: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            bias: Arc::new(bias),
            gate: Arc::new(gate),
            label: "custom".into(),
        }
    }

    /// `b = 0`, `phi(r) = (cos(pi r / r_cut) + 1) / 2` inside the cutoff, 0 beyond.
    pub fn cosine_cutoff(r_cut: f64) -> Self {
        Self {
            bias: Arc::new(|_| 0.0),
            gate: Arc::new(move |r| {
                if r < r_cut {
                    0.5 * ((PI * r / r_cut).cos() + 1.0)
                } else {
                    0.0
                }
            }),
            label: format!("cosine_cutoff({r_cut})"),
        }
    }

    /// `b = 0`, `phi = 1`.
    pub fn neutral() -> Self {
        Self {
            bias: Arc::new(|_| 0.0),
            gate: Arc::new(|_| 1.0),
            label: "neutral".into(),
        }
    }

    pub fn bias(&self, r: f64) -> f64 {
        (self.bias)(r)
    }

    pub fn gate(&self, r: f64) -> f64 {
        (self.gate)(r)
    }

    /// `(b, phi)` for an edge; edges without a stored distance get `(0, 1)`.
    pub fn edge(&self, r: Option<f64>) -> (f64, f64) {
        match r {
            Some(r) => (self.bias(r), self.gate(r)),
            None => (0.0, 1.0),
        }
    }
}

impl fmt::Debug for RadialScalars {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RadialScalars({})", self.label)
    }
}
