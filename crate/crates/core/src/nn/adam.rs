use super::{shape_err, Mat, NnError, ParamStore};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: BETA1,
            beta2: BETA2,
            eps: EPS,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update from the gradients accumulated in `store`:
    /// `theta *= 1 - lr * wd`, then the bias-corrected Adam step.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<(), NnError> {
        if self.m.is_empty() {
            self.m = store.ids().map(|id| Mat::zeros(store.value(id).dim())).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != store.len() {
            return Err(shape_err(format!("{} parameters", self.m.len()), (store.len(), 1)));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let decay = 1.0 - self.lr * self.weight_decay;
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (i, id) in store.ids().enumerate() {
            let g = store.grad(id).clone();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            if m.dim() != g.dim() {
                return Err(shape_err(format!("{:?}", m.dim()), g.dim()));
            }
            m.zip_mut_with(&g, |m, &g| *m = b1 * *m + (1.0 - b1) * g);
            v.zip_mut_with(&g, |v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
            let theta = store.value_mut(id);
            theta.mapv_inplace(|x| x * decay);
            ndarray::Zip::from(theta).and(&*m).and(&*v).for_each(|x, &m, &v| {
                *x -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut store = ParamStore::new();
        let id = store.add("p", array![[1.0, -2.0, 0.5]]);
        store.accumulate_grad(id, &array![[3.0, -0.01, 1e-3]]);
        let mut adam = Adam::new(1e-3, 0.0);
        adam.step(&mut store).unwrap();
        let expect = array![[1.0 - 1e-3, -2.0 + 1e-3, 0.5 - 1e-3]];
        for (a, b) in store.value(id).iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-8, "{a} {b}");
        }
    }

    #[test]
    fn zero_grad_leaves_params() {
        let mut store = ParamStore::new();
        let id = store.add("p", array![[1.0, -2.0]]);
        let mut adam = Adam::new(0.1, 0.0);
        adam.step(&mut store).unwrap();
        assert_eq!(store.value(id), &array![[1.0, -2.0]]);
    }

    #[test]
    fn descends_a_parabola() {
        let mut store = ParamStore::new();
        let id = store.add("theta", array![[1.0]]);
        let mut adam = Adam::new(0.1, 0.0);
        for _ in 0..100 {
            store.zero_grad();
            let th = store.value(id)[[0, 0]];
            store.accumulate_grad(id, &array![[2.0 * th]]);
            adam.step(&mut store).unwrap();
        }
        assert!(store.value(id)[[0, 0]].abs() < 0.1);
    }

    #[test]
    fn weight_decay_is_decoupled() {
        let mut store = ParamStore::new();
        let id = store.add("p", array![[2.0]]);
        let mut adam = Adam::new(0.1, 0.5);
        adam.step(&mut store).unwrap();
        assert!((store.value(id)[[0, 0]] - 2.0 * 0.95).abs() < 1e-15);
    }
}
