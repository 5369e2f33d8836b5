//! Dense and recurrent layers recorded onto a [`Tape`].
//!
//! Sequences are laid out time-major: a batch of `B` sequences padded to `T`
//! steps is a `(T·B)×d` matrix whose rows `t·B..(t+1)·B` hold step `t`.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::mat::Mat;
use super::tape::{ParamId, Params, Tape, Var};

pub fn uniform_mat(rng: &mut impl Rng, rows: usize, cols: usize, bound: f64) -> Mat {
    let dist = Uniform::new_inclusive(-bound, bound).expect("valid bound");
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| dist.sample(rng)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new(params: &mut Params, name: &str, input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (input + output) as f64).sqrt();
        let w = params.add(format!("{name}.w"), uniform_mat(rng, input, output, bound));
        let b = params.add(format!("{name}.b"), Mat::zeros(1, output));
        Self { w, b, input, output }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        let y = tape.matmul(x, w);
        tape.add_row(y, b)
    }

    /// Forward without a tape, for sample-by-sample inference loops.
    pub fn apply(&self, params: &Params, x: &[f64]) -> Vec<f64> {
        let (w, b) = (params.get(self.w), params.get(self.b));
        let mut out = b.data.clone();
        for (i, xv) in x.iter().enumerate() {
            if *xv == 0.0 {
                continue;
            }
            for (o, wv) in out.iter_mut().zip(w.row(i)) {
                *o += xv * wv;
            }
        }
        out
    }
}

/// Gated recurrent unit: `r, z = σ(…)`, `n = tanh(x·Wn + r ⊙ (h·Un + bn))`,
/// `h' = (1 − z) ⊙ n + z ⊙ h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gru {
    pub wx: ParamId,
    pub bx: ParamId,
    pub wh: ParamId,
    pub bh: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Gru {
    pub fn new(params: &mut Params, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        let wx = params.add(format!("{name}.wx"), uniform_mat(rng, input, 3 * hidden, k));
        let bx = params.add(format!("{name}.bx"), uniform_mat(rng, 1, 3 * hidden, k));
        let wh = params.add(format!("{name}.wh"), uniform_mat(rng, hidden, 3 * hidden, k));
        let bh = params.add(format!("{name}.bh"), uniform_mat(rng, 1, 3 * hidden, k));
        Self { wx, bx, wh, bh, input, hidden }
    }

    /// Runs over time-major inputs (`(T·B)×input`) for a batch of `batch`
    /// sequences and returns the stacked hidden states `(T·B)×H`.
    pub fn run(&self, tape: &mut Tape, xs: Var, batch: usize) -> Var {
        let wx = tape.param(self.wx);
        let bx = tape.param(self.bx);
        let wh = tape.param(self.wh);
        let bh = tape.param(self.bh);
        let xp = tape.matmul(xs, wx);
        let xp = tape.add_row(xp, bx);
        tape.gru_seq(xp, wh, bh, batch)
    }

    /// One step without a tape. `xproj` is the already-projected input
    /// `x·Wx + bx` (length `3H`).
    pub fn step(&self, params: &Params, xproj: &[f64], state: &mut [f64]) {
        let h = self.hidden;
        let (wh, bh) = (params.get(self.wh), params.get(self.bh));
        let mut hp = bh.data.clone();
        for (i, sv) in state.iter().enumerate() {
            for (o, w) in hp.iter_mut().zip(wh.row(i)) {
                *o += sv * w;
            }
        }
        for j in 0..h {
            let r = super::tape::sigmoid(xproj[j] + hp[j]);
            let z = super::tape::sigmoid(xproj[h + j] + hp[h + j]);
            let n = (xproj[2 * h + j] + r * hp[2 * h + j]).tanh();
            state[j] = n + z * (state[j] - n);
        }
    }
}

/// Long short-term memory cell with gate order (input, forget, cell, output).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lstm {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(params: &mut Params, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        let wx = params.add(format!("{name}.wx"), uniform_mat(rng, input, 4 * hidden, k));
        let wh = params.add(format!("{name}.wh"), uniform_mat(rng, hidden, 4 * hidden, k));
        let mut bias = Mat::zeros(1, 4 * hidden);
        for j in hidden..2 * hidden {
            bias.data[j] = 1.0;
        }
        let b = params.add(format!("{name}.b"), bias);
        Self { wx, wh, b, input, hidden }
    }

    /// Runs over time-major inputs and returns the stacked hidden states.
    /// `step_bias`, when given, is a `B×4H` node added to the gate
    /// pre-activations at every step (used for utterance-level conditioning).
    pub fn run(&self, tape: &mut Tape, xs: Var, batch: usize, step_bias: Option<Var>) -> Var {
        let wx = tape.param(self.wx);
        let wh = tape.param(self.wh);
        let b = tape.param(self.b);
        let xp = tape.matmul(xs, wx);
        let xp = tape.add_row(xp, b);
        tape.lstm_seq(xp, wh, step_bias, batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gru_step_matches_tape() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = Params::default();
        let gru = Gru::new(&mut params, "g", 3, 4, &mut rng);
        let xs = uniform_mat(&mut rng, 5, 3, 1.0);
        let mut tape = Tape::new(&params);
        let x = tape.input(xs.clone());
        let hs = gru.run(&mut tape, x, 1);
        let want = tape.value(hs).slice_rows(4, 5);

        let (wx, bx) = (params.get(gru.wx), params.get(gru.bx));
        let mut state = vec![0.0; 4];
        for t in 0..5 {
            let mut xp = bx.data.clone();
            for (i, xv) in xs.row(t).iter().enumerate() {
                for (o, w) in xp.iter_mut().zip(wx.row(i)) {
                    *o += xv * w;
                }
            }
            gru.step(&params, &xp, &mut state);
        }
        for (a, b) in state.iter().zip(&want.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
