//! Recurrent layers (simple RNN, GRU, LSTM) with backpropagation through
//! time, and the bidirectional wrapper.
//!
//! Gate blocks are stored side by side in the weight matrices:
//! GRU `[z | r | candidate]`, LSTM `[i | f | g | o]`.
//!
//! GRU update: `h = (1 - z) * h_prev + z * candidate`, with the reset gate
//! applied before the recurrent product, `candidate = tanh(W x + U (r * h_prev) + b)`.

use std::fmt;
use std::str::FromStr;

use crate::encoder::{EncodedName, FLAT_LEN, MAX_LEN, VOCAB_SIZE};
use crate::error::{Error, Result};
use crate::numerics::{gemm_view, sigmoid, MatRef, Matrix};

/// Recorded in model files so the GRU blend is unambiguous on reload.
pub const GRU_CONVENTION: &str = "h=(1-z)*h_prev+z*candidate;reset-before-recurrent-product";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Simple,
    Gru,
    Lstm,
}

impl CellKind {
    pub fn gates(self) -> usize {
        match self {
            CellKind::Simple => 1,
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Simple => "rnn",
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CellKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rnn" => Ok(CellKind::Simple),
            "gru" => Ok(CellKind::Gru),
            "lstm" => Ok(CellKind::Lstm),
            other => Err(Error::ModelFormat(format!("unknown cell {other:?}"))),
        }
    }
}

/// A recurrent layer over `len` steps of `input` values, returning the final
/// hidden state. With `reverse` set the steps are consumed last to first.
#[derive(Debug, Clone, PartialEq)]
pub struct Recurrent {
    pub cell: CellKind,
    pub len: usize,
    pub input: usize,
    pub hidden: usize,
    pub reverse: bool,
    /// `[input x gates*hidden]`
    pub w: Matrix,
    /// `[hidden x gates*hidden]`
    pub u: Matrix,
    /// `[1 x gates*hidden]`
    pub b: Matrix,
}

#[derive(Debug, Clone)]
struct StepCache {
    h_prev: Matrix,
    c_prev: Option<Matrix>,
    /// Activated gate values, same layout as the weight blocks.
    gates: Matrix,
    c: Option<Matrix>,
    /// GRU only: `r * h_prev`.
    rh: Option<Matrix>,
}

#[derive(Debug, Clone)]
pub struct RecurrentCache {
    x: Matrix,
    steps: Vec<StepCache>,
}

impl Recurrent {
    pub fn zeros(cell: CellKind, len: usize, input: usize, hidden: usize, reverse: bool) -> Self {
        let gh = cell.gates() * hidden;
        Recurrent {
            cell,
            len,
            input,
            hidden,
            reverse,
            w: Matrix::zeros(input, gh),
            u: Matrix::zeros(hidden, gh),
            b: Matrix::zeros(1, gh),
        }
    }

    fn order(&self) -> Vec<usize> {
        if self.reverse {
            (0..self.len).rev().collect()
        } else {
            (0..self.len).collect()
        }
    }

    fn step_input<'a>(&self, x: &'a Matrix, t: usize) -> MatRef<'a> {
        MatRef::new(
            &x.as_slice()[t * self.input..],
            x.rows(),
            self.input,
            self.len * self.input,
            1,
        )
    }

    fn step(&self, xt: MatRef<'_>, h_prev: Matrix, c_prev: Option<Matrix>) -> (Matrix, StepCache) {
        let bsz = xt.rows();
        let h = self.hidden;
        let gh = self.cell.gates() * h;
        let mut a = Matrix::zeros(bsz, gh);
        gemm_view(1.0, xt, self.w.view(), 0.0, a.as_mut_slice(), gh);
        a.add_row_vector(self.b.as_slice());
        match self.cell {
            CellKind::Simple => {
                gemm_view(1.0, h_prev.view(), self.u.view(), 1.0, a.as_mut_slice(), gh);
                let gates = a.map(f64::tanh);
                let h_new = gates.clone();
                (
                    h_new,
                    StepCache {
                        h_prev,
                        c_prev: None,
                        gates,
                        c: None,
                        rh: None,
                    },
                )
            }
            CellKind::Lstm => {
                gemm_view(1.0, h_prev.view(), self.u.view(), 1.0, a.as_mut_slice(), gh);
                let c_prev = c_prev.unwrap_or_else(|| Matrix::zeros(bsz, h));
                let mut gates = a;
                let mut c = Matrix::zeros(bsz, h);
                let mut h_new = Matrix::zeros(bsz, h);
                for r in 0..bsz {
                    let g = gates.row_mut(r);
                    for j in 0..h {
                        g[j] = sigmoid(g[j]);
                        g[h + j] = sigmoid(g[h + j]);
                        g[2 * h + j] = g[2 * h + j].tanh();
                        g[3 * h + j] = sigmoid(g[3 * h + j]);
                    }
                    let g = gates.row(r);
                    for j in 0..h {
                        let cv = g[h + j] * c_prev[(r, j)] + g[j] * g[2 * h + j];
                        c[(r, j)] = cv;
                        h_new[(r, j)] = g[3 * h + j] * cv.tanh();
                    }
                }
                (
                    h_new,
                    StepCache {
                        h_prev,
                        c_prev: Some(c_prev),
                        gates,
                        c: Some(c.clone()),
                        rh: None,
                    },
                )
            }
            CellKind::Gru => {
                gemm_view(
                    1.0,
                    h_prev.view(),
                    self.u.col_block(0, 2 * h),
                    1.0,
                    a.as_mut_slice(),
                    gh,
                );
                let mut rh = Matrix::zeros(bsz, h);
                for r in 0..bsz {
                    let g = a.row_mut(r);
                    for v in &mut g[..2 * h] {
                        *v = sigmoid(*v);
                    }
                    for j in 0..h {
                        rh[(r, j)] = g[h + j] * h_prev[(r, j)];
                    }
                }
                gemm_view(
                    1.0,
                    rh.view(),
                    self.u.col_block(2 * h, h),
                    1.0,
                    &mut a.as_mut_slice()[2 * h..],
                    gh,
                );
                let mut h_new = Matrix::zeros(bsz, h);
                for r in 0..bsz {
                    let g = a.row_mut(r);
                    for j in 0..h {
                        g[2 * h + j] = g[2 * h + j].tanh();
                        let z = g[j];
                        h_new[(r, j)] = (1.0 - z) * h_prev[(r, j)] + z * g[2 * h + j];
                    }
                }
                (
                    h_new,
                    StepCache {
                        h_prev,
                        c_prev: None,
                        gates: a,
                        c: None,
                        rh: Some(rh),
                    },
                )
            }
        }
    }

    /// Runs the sequence `x` (`[batch x len*input]`) from a zero state.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, RecurrentCache)> {
        if x.cols() != self.len * self.input {
            return Err(Error::ShapeMismatch(format!(
                "{} layer expects {} x {} inputs, got {}",
                self.cell,
                self.len,
                self.input,
                x.cols()
            )));
        }
        let bsz = x.rows();
        let mut h = Matrix::zeros(bsz, self.hidden);
        let mut c = (self.cell == CellKind::Lstm).then(|| Matrix::zeros(bsz, self.hidden));
        let mut steps = Vec::with_capacity(self.len);
        for t in self.order() {
            let (h_new, st) = self.step(self.step_input(x, t), h, c);
            c = st.c.clone();
            h = h_new;
            steps.push(st);
        }
        Ok((
            h,
            RecurrentCache {
                x: x.clone(),
                steps,
            },
        ))
    }

    /// Backpropagation through time from `dh = dL/d(final state)`.
    /// Returns `(dx, [dw, du, db])`.
    pub fn backward(&self, cache: &RecurrentCache, dh_final: &Matrix) -> (Matrix, Vec<Matrix>) {
        let bsz = cache.x.rows();
        let h = self.hidden;
        let gh = self.cell.gates() * h;
        let mut dw = Matrix::zeros(self.input, gh);
        let mut du = Matrix::zeros(h, gh);
        let mut db = Matrix::zeros(1, gh);
        let mut dx = Matrix::zeros(bsz, self.len * self.input);
        let mut dh = dh_final.clone();
        let mut dc = Matrix::zeros(bsz, h);

        let order = self.order();
        for (st, &t) in cache.steps.iter().zip(&order).rev() {
            let mut da = Matrix::zeros(bsz, gh);
            let mut dh_prev = Matrix::zeros(bsz, h);
            match self.cell {
                CellKind::Simple => {
                    for ((d, &g), &dv) in da
                        .as_mut_slice()
                        .iter_mut()
                        .zip(st.gates.as_slice())
                        .zip(dh.as_slice())
                    {
                        *d = dv * (1.0 - g * g);
                    }
                    gemm_view(1.0, st.h_prev.view().t(), da.view(), 1.0, du.as_mut_slice(), gh);
                    gemm_view(1.0, da.view(), self.u.view().t(), 0.0, dh_prev.as_mut_slice(), h);
                }
                CellKind::Lstm => {
                    let c = st.c.as_ref().expect("lstm cache");
                    let c_prev = st.c_prev.as_ref().expect("lstm cache");
                    let mut dc_prev = Matrix::zeros(bsz, h);
                    for r in 0..bsz {
                        let g = st.gates.row(r);
                        let d = da.row_mut(r);
                        for j in 0..h {
                            let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                            let tc = c[(r, j)].tanh();
                            let dhv = dh[(r, j)];
                            let dct = dc[(r, j)] + dhv * o * (1.0 - tc * tc);
                            d[j] = dct * gg * i * (1.0 - i);
                            d[h + j] = dct * c_prev[(r, j)] * f * (1.0 - f);
                            d[2 * h + j] = dct * i * (1.0 - gg * gg);
                            d[3 * h + j] = dhv * tc * o * (1.0 - o);
                            dc_prev[(r, j)] = dct * f;
                        }
                    }
                    dc = dc_prev;
                    gemm_view(1.0, st.h_prev.view().t(), da.view(), 1.0, du.as_mut_slice(), gh);
                    gemm_view(1.0, da.view(), self.u.view().t(), 0.0, dh_prev.as_mut_slice(), h);
                }
                CellKind::Gru => {
                    let rh = st.rh.as_ref().expect("gru cache");
                    for r in 0..bsz {
                        let g = st.gates.row(r);
                        let d = da.row_mut(r);
                        for j in 0..h {
                            let (z, cand) = (g[j], g[2 * h + j]);
                            let dhv = dh[(r, j)];
                            let hp = st.h_prev[(r, j)];
                            d[j] = dhv * (cand - hp) * z * (1.0 - z);
                            d[2 * h + j] = dhv * z * (1.0 - cand * cand);
                            dh_prev[(r, j)] = dhv * (1.0 - z);
                        }
                    }
                    let da_cand = MatRef::new(&da.as_slice()[2 * h..], bsz, h, gh, 1);
                    gemm_view(1.0, rh.view().t(), da_cand, 1.0, &mut du.as_mut_slice()[2 * h..], gh);
                    let mut drh = Matrix::zeros(bsz, h);
                    gemm_view(
                        1.0,
                        da_cand,
                        self.u.col_block(2 * h, h).t(),
                        0.0,
                        drh.as_mut_slice(),
                        h,
                    );
                    for r in 0..bsz {
                        for j in 0..h {
                            let reset = st.gates[(r, h + j)];
                            let hp = st.h_prev[(r, j)];
                            da[(r, h + j)] = drh[(r, j)] * hp * reset * (1.0 - reset);
                            dh_prev[(r, j)] += drh[(r, j)] * reset;
                        }
                    }
                    let da_zr = MatRef::new(da.as_slice(), bsz, 2 * h, gh, 1);
                    gemm_view(1.0, st.h_prev.view().t(), da_zr, 1.0, du.as_mut_slice(), gh);
                    gemm_view(
                        1.0,
                        da_zr,
                        self.u.col_block(0, 2 * h).t(),
                        1.0,
                        dh_prev.as_mut_slice(),
                        h,
                    );
                }
            }
            let xt = self.step_input(&cache.x, t);
            gemm_view(1.0, xt.t(), da.view(), 1.0, dw.as_mut_slice(), gh);
            da.add_column_sums_to(db.as_mut_slice());
            gemm_view(
                1.0,
                da.view(),
                self.w.view().t(),
                0.0,
                &mut dx.as_mut_slice()[t * self.input..],
                self.len * self.input,
            );
            dh = dh_prev;
        }
        (dx, vec![dw, du, db])
    }

    fn check_step(&self, x_t: &[f64], h_prev: &[f64]) -> Result<()> {
        if x_t.len() != self.input || h_prev.len() != self.hidden {
            return Err(Error::ShapeMismatch(format!(
                "step expects input {} and state {}, got {} and {}",
                self.input,
                self.hidden,
                x_t.len(),
                h_prev.len()
            )));
        }
        Ok(())
    }

    /// One step for a single example. `c_prev` is used by LSTM cells only.
    pub fn step_single(
        &self,
        x_t: &[f64],
        h_prev: &[f64],
        c_prev: Option<&[f64]>,
    ) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        self.check_step(x_t, h_prev)?;
        let h = Matrix::from_vec(1, self.hidden, h_prev.to_vec())?;
        let c = match c_prev {
            Some(c) if c.len() == self.hidden => Some(Matrix::from_vec(1, self.hidden, c.to_vec())?),
            Some(c) => {
                return Err(Error::ShapeMismatch(format!(
                    "cell state of length {}, expected {}",
                    c.len(),
                    self.hidden
                )))
            }
            None => None,
        };
        let xt = MatRef::new(x_t, 1, self.input, self.input, 1);
        let (h_new, st) = self.step(xt, h, c);
        Ok((h_new.into_vec(), st.c.map(Matrix::into_vec)))
    }
}

/// `h_t = tanh(W x_t + U h_prev + b)`.
pub fn rnn_cell_step(x_t: &[f64], h_prev: &[f64], cell: &Recurrent) -> Result<Vec<f64>> {
    debug_assert_eq!(cell.cell, CellKind::Simple);
    Ok(cell.step_single(x_t, h_prev, None)?.0)
}

pub fn gru_cell_step(x_t: &[f64], h_prev: &[f64], cell: &Recurrent) -> Result<Vec<f64>> {
    debug_assert_eq!(cell.cell, CellKind::Gru);
    Ok(cell.step_single(x_t, h_prev, None)?.0)
}

/// Returns `(h_t, c_t)`.
pub fn lstm_cell_step(
    x_t: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    cell: &Recurrent,
) -> Result<(Vec<f64>, Vec<f64>)> {
    debug_assert_eq!(cell.cell, CellKind::Lstm);
    let (h, c) = cell.step_single(x_t, h_prev, Some(c_prev))?;
    Ok((h, c.expect("lstm returns a cell state")))
}

/// Forward and backward recurrent passes with concatenated final states.
#[derive(Debug, Clone, PartialEq)]
pub struct Bidirectional {
    pub forward: Recurrent,
    pub backward: Recurrent,
}

#[derive(Debug, Clone)]
pub struct BidirectionalCache {
    fwd: RecurrentCache,
    bwd: RecurrentCache,
}

impl Bidirectional {
    pub fn zeros(cell: CellKind, len: usize, input: usize, hidden: usize) -> Self {
        Bidirectional {
            forward: Recurrent::zeros(cell, len, input, hidden, false),
            backward: Recurrent::zeros(cell, len, input, hidden, true),
        }
    }

    pub fn output_width(&self) -> usize {
        self.forward.hidden + self.backward.hidden
    }

    pub fn run(&self, x: &Matrix) -> Result<(Matrix, BidirectionalCache)> {
        let (hf, fwd) = self.forward.forward(x)?;
        let (hb, bwd) = self.backward.forward(x)?;
        let mut out = Matrix::zeros(x.rows(), self.output_width());
        let split = self.forward.hidden;
        for r in 0..x.rows() {
            out.row_mut(r)[..split].copy_from_slice(hf.row(r));
            out.row_mut(r)[split..].copy_from_slice(hb.row(r));
        }
        Ok((out, BidirectionalCache { fwd, bwd }))
    }

    /// Returns `(dx, [forward dw, du, db, backward dw, du, db])`.
    pub fn backprop(&self, cache: &BidirectionalCache, dy: &Matrix) -> (Matrix, Vec<Matrix>) {
        let split = self.forward.hidden;
        let mut dyf = Matrix::zeros(dy.rows(), split);
        let mut dyb = Matrix::zeros(dy.rows(), self.backward.hidden);
        for r in 0..dy.rows() {
            dyf.row_mut(r).copy_from_slice(&dy.row(r)[..split]);
            dyb.row_mut(r).copy_from_slice(&dy.row(r)[split..]);
        }
        let (mut dx, mut grads) = self.forward.backward(&cache.fwd, &dyf);
        let (dxb, gb) = self.backward.backward(&cache.bwd, &dyb);
        dx.axpy(1.0, &dxb);
        grads.extend(gb);
        (dx, grads)
    }
}

/// Scans an encoded name front-to-back and back-to-front and concatenates
/// the two final states.
pub fn bidirectional_scan(seq: &EncodedName, layer: &Bidirectional) -> Result<Vec<f64>> {
    if layer.forward.len != MAX_LEN || layer.forward.input != VOCAB_SIZE {
        return Err(Error::ShapeMismatch(format!(
            "bidirectional layer is {} x {}, names are {MAX_LEN} x {VOCAB_SIZE}",
            layer.forward.len, layer.forward.input
        )));
    }
    let mut x = Matrix::zeros(1, FLAT_LEN);
    seq.write_dense(x.row_mut(0));
    Ok(layer.run(&x)?.0.into_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{encode, Vocabulary};

    #[test]
    fn zero_params_fixed_points() {
        let rnn = Recurrent::zeros(CellKind::Simple, 1, 3, 4, false);
        let h = rnn_cell_step(&[1.0, -2.0, 0.5], &[0.3, -0.1, 0.9, 0.2], &rnn).unwrap();
        assert_eq!(h, vec![0.0; 4]);

        let gru = Recurrent::zeros(CellKind::Gru, 1, 3, 2, false);
        let h = gru_cell_step(&[1.0, 0.0, 0.0], &[0.4, -0.8], &gru).unwrap();
        assert_eq!(h, vec![0.2, -0.4]);
        let h = gru_cell_step(&[1.0, 0.0, 0.0], &[0.0, 0.0], &gru).unwrap();
        assert_eq!(h, vec![0.0, 0.0]);

        let lstm = Recurrent::zeros(CellKind::Lstm, 1, 3, 2, false);
        let (h, c) = lstm_cell_step(&[0.0, 1.0, 0.0], &[0.7, 0.1], &[0.6, -2.0], &lstm).unwrap();
        assert_eq!(c, vec![0.3, -1.0]);
        assert_eq!(h, vec![0.5 * 0.3f64.tanh(), 0.5 * (-1.0f64).tanh()]);
        let (h, c) = lstm_cell_step(&[0.0, 1.0, 0.0], &[0.0, 0.0], &[0.0, 0.0], &lstm).unwrap();
        assert_eq!((h, c), (vec![0.0, 0.0], vec![0.0, 0.0]));
    }

    #[test]
    fn tanh_saturation() {
        let mut rnn = Recurrent::zeros(CellKind::Simple, 1, 2, 3, false);
        rnn.b.fill(50.0);
        let h = rnn_cell_step(&[0.3, 0.1], &[0.0; 3], &rnn).unwrap();
        assert!(h.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn step_shape_errors() {
        let rnn = Recurrent::zeros(CellKind::Simple, 1, 2, 3, false);
        assert!(matches!(rnn_cell_step(&[0.0], &[0.0; 3], &rnn), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn palindrome_with_tied_directions() {
        let mut layer = Bidirectional::zeros(CellKind::Lstm, MAX_LEN, VOCAB_SIZE, 4);
        let mut k = 0.0;
        for v in layer.forward.w.as_mut_slice() {
            k += 0.37;
            *v = (k as f64).sin() * 0.3;
        }
        for v in layer.forward.u.as_mut_slice() {
            k += 0.11;
            *v = (k as f64).cos() * 0.2;
        }
        layer.backward.w = layer.forward.w.clone();
        layer.backward.u = layer.forward.u.clone();
        // all 20 rows must be symmetric, so fill the whole width
        let enc = encode("ABCDEFGHIJJIHGFEDCBA", &Vocabulary::standard()).unwrap();
        let out = bidirectional_scan(&enc, &layer).unwrap();
        assert_eq!(out.len(), 8);
        assert_eq!(out[..4], out[4..]);
        assert!(out.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn zero_bidirectional_is_zero() {
        let layer = Bidirectional::zeros(CellKind::Lstm, MAX_LEN, VOCAB_SIZE, 64);
        let enc = encode("ANA", &Vocabulary::standard()).unwrap();
        let out = bidirectional_scan(&enc, &layer).unwrap();
        assert_eq!(out, vec![0.0; 128]);
    }
}
