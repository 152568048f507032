use ndarray::{Array1, ArrayView2};

/// A real-valued function on `R^d` that the analysis routines can sample.
pub trait RealMap: Sync {
    fn input_dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> f64;

    /// Evaluates every row of `points` (`n x d`).
    fn eval_many(&self, points: ArrayView2<f64>) -> Array1<f64> {
        points
            .rows()
            .into_iter()
            .map(|row| match row.as_slice() {
                Some(s) => self.eval(s),
                None => self.eval(&row.to_vec()),
            })
            .collect()
    }
}

/// Adapts a closure into a [`RealMap`].
pub struct FnMap<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnMap<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> RealMap for FnMap<F> {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// The zero function.
pub struct Zero(pub usize);

impl RealMap for Zero {
    fn input_dim(&self) -> usize {
        self.0
    }

    fn eval(&self, _x: &[f64]) -> f64 {
        0.0
    }
}
