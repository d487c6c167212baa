//! LSTM and GRU cells over per-snapshot graph vectors.
//!
//! Gate weights are kept as separate matrices per gate (`x·W + h·U + b`), which
//! keeps each gate's gradient path explicit on the tape.

use crate::autodiff::{Matrix, ParamSpec, ParamStore, Tape, Tensor};
use crate::config::RnnKind;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct Gate {
    pub w: Tensor,
    pub u: Tensor,
    pub b: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub enum Cell {
    /// Input, forget, candidate and output gates.
    Lstm { i: Gate, f: Gate, g: Gate, o: Gate },
    /// Reset, update and candidate gates.
    Gru { r: Gate, z: Gate, n: Gate },
}

pub fn gate_names(kind: RnnKind) -> &'static [&'static str] {
    match kind {
        RnnKind::Lstm => &["i", "f", "g", "o"],
        RnnKind::Gru => &["r", "z", "n"],
    }
}

pub fn cell_param_specs(
    prefix: &str,
    kind: RnnKind,
    input: usize,
    hidden: usize,
) -> Vec<ParamSpec> {
    gate_names(kind)
        .iter()
        .flat_map(|g| {
            [
                ParamSpec::glorot(format!("{prefix}.{g}.w"), input, hidden),
                ParamSpec::glorot(format!("{prefix}.{g}.u"), hidden, hidden),
                ParamSpec::zeros(format!("{prefix}.{g}.b"), 1, hidden),
            ]
        })
        .collect()
}

impl Cell {
    pub fn load(tape: &mut Tape, params: &ParamStore, prefix: &str, kind: RnnKind) -> Result<Self> {
        let mut gate = |name: &str| -> Result<Gate> {
            Ok(Gate {
                w: tape.param(params, &format!("{prefix}.{name}.w"))?,
                u: tape.param(params, &format!("{prefix}.{name}.u"))?,
                b: tape.param(params, &format!("{prefix}.{name}.b"))?,
            })
        };
        Ok(match kind {
            RnnKind::Lstm => Cell::Lstm {
                i: gate("i")?,
                f: gate("f")?,
                g: gate("g")?,
                o: gate("o")?,
            },
            RnnKind::Gru => Cell::Gru {
                r: gate("r")?,
                z: gate("z")?,
                n: gate("n")?,
            },
        })
    }

    fn hidden(&self, tape: &Tape) -> usize {
        match self {
            Cell::Lstm { i, .. } => tape.shape(i.u).0,
            Cell::Gru { r, .. } => tape.shape(r.u).0,
        }
    }
}

fn pre(tape: &mut Tape, gate: &Gate, x: Tensor, h: Tensor) -> Result<Tensor> {
    let xw = tape.matmul(x, gate.w)?;
    let hu = tape.matmul(h, gate.u)?;
    let s = tape.add(xw, hu)?;
    tape.add_bias(s, gate.b)
}

/// One LSTM step; returns `(h', c')`.
///
/// ```text
/// i = σ(xW_i + hU_i + b_i)   f = σ(xW_f + hU_f + b_f)
/// g = tanh(xW_g + hU_g + b_g) o = σ(xW_o + hU_o + b_o)
/// c' = f∘c + i∘g              h' = o∘tanh(c')
/// ```
pub fn lstm_step(
    tape: &mut Tape,
    gates: [&Gate; 4],
    x: Tensor,
    h: Tensor,
    c: Tensor,
) -> Result<(Tensor, Tensor)> {
    let [gi, gf, gg, go] = gates;
    let i = pre(tape, gi, x, h)?;
    let i = tape.sigmoid(i)?;
    let f = pre(tape, gf, x, h)?;
    let f = tape.sigmoid(f)?;
    let g = pre(tape, gg, x, h)?;
    let g = tape.tanh(g)?;
    let o = pre(tape, go, x, h)?;
    let o = tape.sigmoid(o)?;
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c_next = tape.add(fc, ig)?;
    let tc = tape.tanh(c_next)?;
    let h_next = tape.mul(o, tc)?;
    Ok((h_next, c_next))
}

/// One GRU step.
///
/// ```text
/// r = σ(xW_r + hU_r + b_r)   z = σ(xW_z + hU_z + b_z)
/// n = tanh(xW_n + b_n + r∘(hU_n))
/// h' = (1 - z)∘n + z∘h = n + z∘(h - n)
/// ```
pub fn gru_step(tape: &mut Tape, gates: [&Gate; 3], x: Tensor, h: Tensor) -> Result<Tensor> {
    let [gr, gz, gn] = gates;
    let r = pre(tape, gr, x, h)?;
    let r = tape.sigmoid(r)?;
    let z = pre(tape, gz, x, h)?;
    let z = tape.sigmoid(z)?;
    let xw = tape.matmul(x, gn.w)?;
    let xw = tape.add_bias(xw, gn.b)?;
    let hu = tape.matmul(h, gn.u)?;
    let rhu = tape.mul(r, hu)?;
    let n = tape.add(xw, rhu)?;
    let n = tape.tanh(n)?;
    let diff = tape.sub(h, n)?;
    let zd = tape.mul(z, diff)?;
    tape.add(n, zd)
}

/// Runs the cell left to right from a zero state and returns the last hidden state.
pub fn recurrent_aggregate(tape: &mut Tape, inputs: &[Tensor], cell: &Cell) -> Result<Tensor> {
    if inputs.is_empty() {
        return Err(Error::Structure(
            "recurrent aggregation over zero steps".into(),
        ));
    }
    let hidden = cell.hidden(tape);
    let mut h = tape.constant(Matrix::zeros(1, hidden))?;
    match cell {
        Cell::Lstm { i, f, g, o } => {
            let mut c = tape.constant(Matrix::zeros(1, hidden))?;
            for &x in inputs {
                (h, c) = lstm_step(tape, [i, f, g, o], x, h, c)?;
            }
        }
        Cell::Gru { r, z, n } => {
            for &x in inputs {
                h = gru_step(tape, [r, z, n], x, h)?;
            }
        }
    }
    Ok(h)
}
