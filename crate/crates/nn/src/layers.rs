use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, Var};
use crate::params::{Bound, ParamId, ParamStore};
use crate::Result;

/// Affine map `x W + b` with `W: [input, output]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    /// Weights and bias uniform in `[-1/sqrt(input), 1/sqrt(input)]`.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let weight = store.add_uniform(format!("{name}.weight"), input, output, bound, rng);
        let bias = store.add_uniform(format!("{name}.bias"), 1, output, bound, rng);
        Self {
            weight,
            bias,
            input,
            output,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let xw = g.matmul(x, p[self.weight])?;
        g.add(xw, p[self.bias])
    }
}

/// Gated recurrent unit.
///
/// ```text
/// z  = sigmoid(x Wxz + bxz + h Whz + bhz)
/// r  = sigmoid(x Wxr + bxr + h Whr + bhr)
/// n  = tanh(x Wxn + bxn + (r * h) Whn + bhn)
/// h' = (1 - z) * h + z * n
/// ```
///
/// The input-path weights of all three gates live in one `[input, 3H]`
/// matrix (column blocks z, r, n) and the hidden-path update/reset weights in
/// one `[H, 2H]` matrix.
#[derive(Debug, Clone)]
pub struct GruCell {
    pub w_input: ParamId,
    pub b_input: ParamId,
    pub w_hidden_zr: ParamId,
    pub w_hidden_n: ParamId,
    pub b_hidden: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruCell {
    /// All parameters uniform in `[-1/sqrt(H), 1/sqrt(H)]`.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let w_input = store.add_uniform(format!("{name}.w_input"), input, 3 * hidden, bound, rng);
        let b_input = store.add_uniform(format!("{name}.b_input"), 1, 3 * hidden, bound, rng);
        let w_hidden_zr = store.add_uniform(
            format!("{name}.w_hidden_zr"),
            hidden,
            2 * hidden,
            bound,
            rng,
        );
        let w_hidden_n =
            store.add_uniform(format!("{name}.w_hidden_n"), hidden, hidden, bound, rng);
        let b_hidden = store.add_uniform(format!("{name}.b_hidden"), 1, 3 * hidden, bound, rng);
        Self {
            w_input,
            b_input,
            w_hidden_zr,
            w_hidden_n,
            b_hidden,
            input,
            hidden,
        }
    }

    /// One step: `x: [B, input]`, `h: [B, H]` -> `[B, H]`.
    pub fn step(&self, g: &mut Graph, p: &Bound, x: Var, h: Var) -> Result<Var> {
        let hs = self.hidden;
        let xw = g.matmul(x, p[self.w_input])?;
        let xw = g.add(xw, p[self.b_input])?;
        let hw = g.matmul(h, p[self.w_hidden_zr])?;
        let b_zr = g.slice(p[self.b_hidden], 0, 2 * hs)?;
        let b_n = g.slice(p[self.b_hidden], 2 * hs, 3 * hs)?;
        let hw = g.add(hw, b_zr)?;

        let zx = g.slice(xw, 0, hs)?;
        let zh = g.slice(hw, 0, hs)?;
        let z = g.add(zx, zh)?;
        let z = g.sigmoid(z)?;

        let rx = g.slice(xw, hs, 2 * hs)?;
        let rh = g.slice(hw, hs, 2 * hs)?;
        let r = g.add(rx, rh)?;
        let r = g.sigmoid(r)?;

        let nx = g.slice(xw, 2 * hs, 3 * hs)?;
        let rh = g.mul(r, h)?;
        let nh = g.matmul(rh, p[self.w_hidden_n])?;
        let nh = g.add(nh, b_n)?;
        let n = g.add(nx, nh)?;
        let n = g.tanh(n)?;

        // h + z * (n - h)
        let diff = g.sub(n, h)?;
        let upd = g.mul(z, diff)?;
        g.add(h, upd)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::Tensor;

    fn zeroed(store: &mut ParamStore) {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            store.get_mut(id).data_mut().fill(0.0);
        }
    }

    #[test]
    fn zero_gru_halves_previous_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "gru", 3, 4, &mut rng);
        zeroed(&mut store);

        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let x = g.constant(Tensor::from_rows(1, 3, vec![0.3, -1.0, 2.0]).unwrap());
        let h_prev = vec![0.8, -0.4, 0.1, 1.0];
        let h = g.constant(Tensor::from_rows(1, 4, h_prev.clone()).unwrap());
        let out = cell.step(&mut g, &p, x, h).unwrap();
        for (o, hp) in g.value(out).data().iter().zip(&h_prev) {
            assert!((o - 0.5 * hp).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_everything_stays_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "gru", 2, 3, &mut rng);
        zeroed(&mut store);
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let x = g.constant(Tensor::zeros(2, 2));
        let h = g.constant(Tensor::zeros(2, 3));
        let out = cell.step(&mut g, &p, x, h).unwrap();
        assert!(g.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let build = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut store = ParamStore::new();
            Linear::new(&mut store, "fc", 16, 4, &mut rng);
            store
        };
        let a = build(7);
        assert_eq!(a, build(7));
        assert_ne!(a, build(8));
        assert!(a
            .iter()
            .all(|(_, t)| t.data().iter().all(|v| v.abs() <= 0.25)));
    }

    #[test]
    fn shape_mismatch_surfaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "gru", 3, 4, &mut rng);
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let x = g.constant(Tensor::zeros(1, 5));
        let h = g.constant(Tensor::zeros(1, 4));
        assert!(cell.step(&mut g, &p, x, h).is_err());
    }
}
