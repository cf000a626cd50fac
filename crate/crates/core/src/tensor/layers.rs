//! Composite layers built from tape primitives: GRU, additive attention and a
//! dense projection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::array::Tensor;
use super::params::{ParamId, ParamSet};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gated recurrent unit:
/// `z = σ(x W_z + h U_z + b_z)`, `r = σ(x W_r + h U_r + b_r)`,
/// `h̃ = tanh(x W_h + (r ⊙ h) U_h + b_h)`, `h' = (1 − z) ⊙ h + z ⊙ h̃`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gru {
    pub input_dim: usize,
    pub hidden_dim: usize,
    w: [ParamId; 3],
    u: [ParamId; 3],
    b: [ParamId; 3],
}

/// A [`Gru`] whose parameters are recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct BoundGru {
    hidden_dim: usize,
    w: [Var; 3],
    u: [Var; 3],
    b: [Var; 3],
}

pub struct GruOutput {
    /// `[N, T, hidden]`, zero at masked positions.
    pub states: Var,
    /// `[N, hidden]`, the state after the last step.
    pub last: Var,
}

const GATES: [&str; 3] = ["z", "r", "h"];

impl Gru {
    pub fn new(
        params: &mut ParamSet,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut w = [ParamId(0); 3];
        let mut u = [ParamId(0); 3];
        let mut b = [ParamId(0); 3];
        for (i, g) in GATES.iter().enumerate() {
            w[i] = params.add_xavier(format!("{prefix}.w_{g}"), &[input_dim, hidden_dim], rng)?;
            u[i] = params.add_xavier(format!("{prefix}.u_{g}"), &[hidden_dim, hidden_dim], rng)?;
            b[i] = params.add_zeros(format!("{prefix}.b_{g}"), &[hidden_dim])?;
        }
        Ok(Gru {
            input_dim,
            hidden_dim,
            w,
            u,
            b,
        })
    }

    /// Looks the parameters up by name in an existing set.
    pub fn find(params: &ParamSet, prefix: &str) -> Result<Self> {
        let get = |name: String| {
            params
                .id(&name)
                .ok_or_else(|| Error::Model(format!("missing parameter {name}")))
        };
        let mut w = [ParamId(0); 3];
        let mut u = [ParamId(0); 3];
        let mut b = [ParamId(0); 3];
        for (i, g) in GATES.iter().enumerate() {
            w[i] = get(format!("{prefix}.w_{g}"))?;
            u[i] = get(format!("{prefix}.u_{g}"))?;
            b[i] = get(format!("{prefix}.b_{g}"))?;
        }
        let shape = params.value(w[0]).shape();
        if shape.len() != 2 {
            return Err(Error::Model(format!("{prefix}.w_z is not a matrix")));
        }
        Ok(Gru {
            input_dim: shape[0],
            hidden_dim: shape[1],
            w,
            u,
            b,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.w.iter().chain(&self.u).chain(&self.b).copied().collect()
    }

    pub fn bind(&self, tape: &mut Tape, params: &ParamSet) -> BoundGru {
        BoundGru {
            hidden_dim: self.hidden_dim,
            w: self.w.map(|id| tape.param(params, id)),
            u: self.u.map(|id| tape.param(params, id)),
            b: self.b.map(|id| tape.param(params, id)),
        }
    }

    /// One step evaluated with plain loops, independent of the tape.
    pub fn step_value(&self, params: &ParamSet, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
        let (n_in, n_h) = (self.input_dim, self.hidden_dim);
        if x.len() != n_in || h_prev.len() != n_h {
            return Err(Error::shape("gru_step", &[x.len(), h_prev.len()], &[n_in, n_h]));
        }
        let affine = |gate: usize, h: &[f64]| -> Vec<f64> {
            let (w, u, b) = (
                params.value(self.w[gate]).data(),
                params.value(self.u[gate]).data(),
                params.value(self.b[gate]).data(),
            );
            (0..n_h)
                .map(|j| {
                    let xs: f64 = (0..n_in).map(|i| x[i] * w[i * n_h + j]).sum();
                    let hs: f64 = (0..n_h).map(|i| h[i] * u[i * n_h + j]).sum();
                    xs + hs + b[j]
                })
                .collect()
        };
        let z: Vec<f64> = affine(0, h_prev).into_iter().map(sigmoid).collect();
        let r: Vec<f64> = affine(1, h_prev).into_iter().map(sigmoid).collect();
        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        let cand: Vec<f64> = affine(2, &rh).into_iter().map(f64::tanh).collect();
        Ok((0..n_h)
            .map(|j| (1.0 - z[j]) * h_prev[j] + z[j] * cand[j])
            .collect())
    }
}

impl BoundGru {
    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    /// One step on a batch: `x [N, in]`, `h [N, hidden]`.
    pub fn step(&self, tape: &mut Tape, x: Var, h: Var) -> Result<Var> {
        let mut proj = [x; 3];
        for g in 0..3 {
            let xw = tape.matmul(x, self.w[g])?;
            proj[g] = tape.add_bias(xw, self.b[g])?;
        }
        self.step_projected(tape, proj, h)
    }

    /// Step with the input side `x W + b` already computed per gate.
    fn step_projected(&self, tape: &mut Tape, proj: [Var; 3], h: Var) -> Result<Var> {
        let hz = tape.matmul(h, self.u[0])?;
        let z_pre = tape.add(proj[0], hz)?;
        let z = tape.sigmoid(z_pre);
        let hr = tape.matmul(h, self.u[1])?;
        let r_pre = tape.add(proj[1], hr)?;
        let r = tape.sigmoid(r_pre);
        let rh = tape.mul(r, h)?;
        let hh = tape.matmul(rh, self.u[2])?;
        let c_pre = tape.add(proj[2], hh)?;
        let cand = tape.tanh(c_pre);
        // h + z ⊙ (h̃ − h)
        let delta = tape.sub(cand, h)?;
        let moved = tape.mul(z, delta)?;
        tape.add(h, moved)
    }

    /// Runs over `x [N, T, in]` from a zero state (or `h0`). `mask` holds one
    /// 0/1 value per `(n, t)`; a masked step carries the previous state
    /// through unchanged and outputs zeros.
    pub fn run(&self, tape: &mut Tape, x: Var, mask: Option<&[f64]>, h0: Option<Var>) -> Result<GruOutput> {
        let shape = tape.shape(x).to_vec();
        if shape.len() != 3 {
            return Err(Error::shape("gru_run", &shape, &[3]));
        }
        let (n, t_len) = (shape[0], shape[1]);
        if let Some(m) = mask {
            if m.len() != n * t_len {
                return Err(Error::shape("gru_run mask", &shape, &[m.len()]));
            }
        }
        let mut full = [x; 3];
        for g in 0..3 {
            let xw = tape.matmul(x, self.w[g])?;
            full[g] = tape.add_bias(xw, self.b[g])?;
        }
        let mut h = match h0 {
            Some(h) => h,
            None => tape.constant(Tensor::zeros(&[n, self.hidden_dim])),
        };
        let mut states = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let proj = [
                tape.select(full[0], 1, t)?,
                tape.select(full[1], 1, t)?,
                tape.select(full[2], 1, t)?,
            ];
            let next = self.step_projected(tape, proj, h)?;
            match mask {
                None => {
                    h = next;
                    states.push(h);
                }
                Some(m) => {
                    let keep = expand_mask(m, t, t_len, self.hidden_dim, false);
                    let hold = expand_mask(m, t, t_len, self.hidden_dim, true);
                    let keep = tape.constant(keep);
                    let hold = tape.constant(hold);
                    let a = tape.mul(keep, next)?;
                    let b = tape.mul(hold, h)?;
                    h = tape.add(a, b)?;
                    states.push(tape.mul(keep, h)?);
                }
            }
        }
        let states = tape.stack(&states, 1)?;
        Ok(GruOutput { states, last: h })
    }
}

/// `[N, hidden]` tensor of `m[n, t]` (or `1 − m[n, t]` when `invert`).
fn expand_mask(mask: &[f64], t: usize, t_len: usize, hidden: usize, invert: bool) -> Tensor {
    let n = mask.len() / t_len;
    Tensor::from_fn(&[n, hidden], |i| {
        let m = mask[(i / hidden) * t_len + t];
        if invert {
            1.0 - m
        } else {
            m
        }
    })
}

/// Additive attention `score(k, q) = vᵀ tanh(k W_k + q W_q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdditiveAttention {
    w_key: ParamId,
    w_query: ParamId,
    v: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundAttention {
    w_key: Var,
    w_query: Var,
    v: Var,
}

impl AdditiveAttention {
    pub fn new(
        params: &mut ParamSet,
        prefix: &str,
        key_dim: usize,
        query_dim: usize,
        attn_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(AdditiveAttention {
            w_key: params.add_xavier(format!("{prefix}.w_key"), &[key_dim, attn_dim], rng)?,
            w_query: params.add_xavier(format!("{prefix}.w_query"), &[query_dim, attn_dim], rng)?,
            v: params.add_xavier(format!("{prefix}.v"), &[attn_dim, 1], rng)?,
        })
    }

    pub fn find(params: &ParamSet, prefix: &str) -> Result<Self> {
        let get = |s: &str| {
            let name = format!("{prefix}.{s}");
            params
                .id(&name)
                .ok_or_else(|| Error::Model(format!("missing parameter {name}")))
        };
        Ok(AdditiveAttention {
            w_key: get("w_key")?,
            w_query: get("w_query")?,
            v: get("v")?,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w_key, self.w_query, self.v]
    }

    pub fn bind(&self, tape: &mut Tape, params: &ParamSet) -> BoundAttention {
        BoundAttention {
            w_key: tape.param(params, self.w_key),
            w_query: tape.param(params, self.w_query),
            v: tape.param(params, self.v),
        }
    }
}

impl BoundAttention {
    /// Attention weights `[N, T, S]` of queries `[N, T, dq]` over keys
    /// `[N, S, dk]`. `key_mask` has one flag per `(n, s)`; masked keys get
    /// weight zero and a query with no valid key gets all zeros.
    pub fn weights(&self, tape: &mut Tape, keys: Var, queries: Var, key_mask: Option<&[bool]>) -> Result<Var> {
        let (ks, qs) = (tape.shape(keys).to_vec(), tape.shape(queries).to_vec());
        if ks.len() != 3 || qs.len() != 3 || ks[0] != qs[0] {
            return Err(Error::shape("attention", &ks, &qs));
        }
        let (n, s, t) = (ks[0], ks[1], qs[1]);
        let kp = tape.matmul(keys, self.w_key)?;
        let qp = tape.matmul(queries, self.w_query)?;
        let summed = tape.pair_add(qp, kp)?; // [N, T, S, a]
        let act = tape.tanh(summed);
        let scores = tape.matmul(act, self.v)?; // [N, T, S, 1]
        let scores = tape.reshape(scores, &[n, t, s])?;
        let mask = match key_mask {
            Some(m) => {
                if m.len() != n * s {
                    return Err(Error::shape("attention mask", &ks, &[m.len()]));
                }
                Some(
                    (0..n * t * s)
                        .map(|i| m[(i / (t * s)) * s + i % s])
                        .collect::<Vec<bool>>(),
                )
            }
            None => None,
        };
        tape.masked_softmax(scores, 2, mask.as_deref())
    }

    /// Weighted sum of `values [N, S, d]` under `weights [N, T, S]`.
    pub fn context(&self, tape: &mut Tape, weights: Var, values: Var) -> Result<Var> {
        tape.bmm(weights, values)
    }
}

/// Affine map `x W + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dense {
    w: ParamId,
    b: Option<ParamId>,
}

impl Dense {
    pub fn new(
        params: &mut ParamSet,
        prefix: &str,
        input_dim: usize,
        output_dim: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w = params.add_xavier(format!("{prefix}.w"), &[input_dim, output_dim], rng)?;
        let b = if bias {
            Some(params.add_zeros(format!("{prefix}.b"), &[output_dim])?)
        } else {
            None
        };
        Ok(Dense { w, b })
    }

    pub fn find(params: &ParamSet, prefix: &str) -> Result<Self> {
        let w = params
            .id(&format!("{prefix}.w"))
            .ok_or_else(|| Error::Model(format!("missing parameter {prefix}.w")))?;
        Ok(Dense {
            w,
            b: params.id(&format!("{prefix}.b")),
        })
    }

    pub fn weight(&self) -> ParamId {
        self.w
    }

    pub fn bias(&self) -> Option<ParamId> {
        self.b
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        std::iter::once(self.w).chain(self.b).collect()
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, x: Var) -> Result<Var> {
        let w = tape.param(params, self.w);
        let y = tape.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = tape.param(params, b);
                tape.add_bias(y, b)
            }
            None => Ok(y),
        }
    }
}
