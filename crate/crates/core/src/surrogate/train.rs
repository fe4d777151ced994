//! Full-batch Levenberg-Marquardt training for the regression network.
//!
//! Residuals live in scaled target space. Each epoch assembles the
//! Gauss-Newton normal equations `(JᵀJ + μI) δ = Jᵀr` chunk by chunk (the
//! per-chunk Jacobian goes through one big gemm, which is where the time
//! goes), then adapts the damping: accept and divide μ by 10 on improvement,
//! multiply by 10 and retry otherwise. Training stops on the epoch cap, μ
//! overflow, a vanishing gradient, or six consecutive validation-loss
//! increases, and always returns the best-validation weights.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::surrogate::fnn::FnnModel;

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub max_epochs: usize,
    pub mu_init: f64,
    pub mu_max: f64,
    /// Consecutive validation-loss increases tolerated before stopping.
    pub max_validation_failures: usize,
    /// Samples per Jacobian chunk.
    pub chunk_size: usize,
    /// Stop when the gradient infinity-norm falls below this.
    pub min_gradient: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            max_epochs: 120,
            mu_init: 1e-3,
            mu_max: 1e10,
            max_validation_failures: 6,
            chunk_size: 256,
            min_gradient: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    MuOverflow,
    EarlyStopping,
    GradientVanished,
}

#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mu: f64,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_val_mse: f64,
    pub stop: StopReason,
}

/// Forward pass keeping every layer's activations; input must already be
/// normalized. `states[0]` is the input, `states[L]` the linear output.
fn forward_states(model: &FnnModel, xn: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let last = model.weights.len() - 1;
    let mut states = Vec::with_capacity(model.weights.len() + 1);
    states.push(xn.clone());
    for (l, (w, b)) in model.weights.iter().zip(&model.biases).enumerate() {
        let mut z = w * states.last().unwrap();
        for mut col in z.column_iter_mut() {
            col += b;
        }
        if l != last {
            z.apply(|v| *v = v.tanh());
        }
        states.push(z);
    }
    states
}

fn normalize_columns(model: &FnnModel, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut xn = x.clone();
    for d in 0..xn.nrows() {
        let (mean, std) = (model.input_mean[d], model.input_std[d]);
        for s in 0..xn.ncols() {
            xn[(d, s)] = (xn[(d, s)] - mean) / std;
        }
    }
    xn
}

/// Parameter-column offset of layer `l` in the flat parameter vector.
fn layer_offset(model: &FnnModel, layer: usize) -> usize {
    model.sizes.windows(2).take(layer).map(|p| p[1] * (p[0] + 1)).sum()
}

/// Fill rows `s * out_dim + j` of `jac` with d ŷ_j(x_s) / d params for every
/// sample in the chunk. `states` comes from [`forward_states`].
fn fill_jacobian_chunk(model: &FnnModel, states: &[DMatrix<f64>], jac: &mut DMatrix<f64>) {
    let num_layers = model.weights.len();
    let out_dim = model.output_dim();
    let chunk = states[0].ncols();
    for j in 0..out_dim {
        // δ for the output pre-activation: the output layer is linear.
        let mut delta = DMatrix::zeros(out_dim, chunk);
        delta.row_mut(j).fill(1.0);
        for l in (0..num_layers).rev() {
            let (n_out, n_in) = (model.sizes[l + 1], model.sizes[l]);
            let offset = layer_offset(model, l);
            let act = &states[l];
            for s in 0..chunk {
                let row = s * out_dim + j;
                for r in 0..n_out {
                    let d = delta[(r, s)];
                    if d != 0.0 {
                        let base = offset + r * n_in;
                        for c in 0..n_in {
                            jac[(row, base + c)] = d * act[(c, s)];
                        }
                    }
                    jac[(row, offset + n_out * n_in + r)] = d;
                }
            }
            if l > 0 {
                // δ^{l} = (W_lᵀ δ^{l+1}) ∘ tanh'(z_l), with tanh' = 1 - a².
                let mut back = model.weights[l].transpose() * delta;
                for s in 0..chunk {
                    for r in 0..model.sizes[l] {
                        back[(r, s)] *= 1.0 - states[l][(r, s)] * states[l][(r, s)];
                    }
                }
                delta = back;
            }
        }
    }
}

/// Analytic Jacobian (out x P) of the scaled-space output for one raw input.
pub fn analytic_jacobian(model: &FnnModel, x_raw: &[f64]) -> Result<DMatrix<f64>> {
    if x_raw.len() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "fnn input",
            expected: model.input_dim(),
            actual: x_raw.len(),
        });
    }
    let x = DMatrix::from_column_slice(x_raw.len(), 1, x_raw);
    let xn = normalize_columns(model, &x);
    let states = forward_states(model, &xn);
    let mut jac = DMatrix::zeros(model.output_dim(), model.num_params());
    fill_jacobian_chunk(model, &states, &mut jac);
    Ok(jac)
}

/// Sum of squared scaled-space residuals over a set.
fn sum_squared_error(model: &FnnModel, x: &DMatrix<f64>, t_scaled: &DMatrix<f64>) -> Result<f64> {
    let y = model.forward_batch(x)?;
    let mut sse = 0.0;
    for s in 0..y.ncols() {
        for r in 0..y.nrows() {
            let e = y[(r, s)] - t_scaled[(r, s)];
            sse += e * e;
        }
    }
    Ok(sse)
}

/// Mean squared error in scaled target space.
pub fn mean_squared_error(model: &FnnModel, x: &DMatrix<f64>, t_codes: &DMatrix<f64>) -> Result<f64> {
    let t = t_codes.map(|c| model.scale_code(c));
    let n = (x.ncols() * model.output_dim()).max(1) as f64;
    Ok(sum_squared_error(model, x, &t)? / n)
}

struct NormalEquations {
    jtj: DMatrix<f64>,
    jtr: DVector<f64>,
    sse: f64,
}

fn assemble(
    model: &FnnModel,
    x: &DMatrix<f64>,
    t_scaled: &DMatrix<f64>,
    chunk_size: usize,
) -> NormalEquations {
    let p = model.num_params();
    let out_dim = model.output_dim();
    let total = x.ncols();
    let mut jtj = DMatrix::zeros(p, p);
    let mut jtr = DVector::zeros(p);
    let mut sse = 0.0;
    let xn = normalize_columns(model, x);
    let mut start = 0;
    while start < total {
        let len = chunk_size.min(total - start);
        let chunk_x = xn.columns(start, len).into_owned();
        let states = forward_states(model, &chunk_x);
        let mut jac = DMatrix::zeros(len * out_dim, p);
        fill_jacobian_chunk(model, &states, &mut jac);
        let output = states.last().unwrap();
        let mut resid = DVector::zeros(len * out_dim);
        for s in 0..len {
            for r in 0..out_dim {
                let e = output[(r, s)] - t_scaled[(r, start + s)];
                resid[s * out_dim + r] = e;
                sse += e * e;
            }
        }
        // One dense gemm per chunk carries the accumulation cost.
        let jt = jac.transpose();
        jtj += &jt * &jac;
        jtr += jt * resid;
        start += len;
    }
    NormalEquations { jtj, jtr, sse }
}

/// Train in place. `x` columns are raw feature vectors; `t_codes` columns
/// are integer-code targets. Normalization must already be frozen on the
/// model. Returns the epoch history; the model ends at the best-validation
/// weights.
pub fn train_lm(
    model: &mut FnnModel,
    train_x: &DMatrix<f64>,
    train_codes: &DMatrix<f64>,
    val_x: &DMatrix<f64>,
    val_codes: &DMatrix<f64>,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    if train_x.ncols() == 0 {
        return Err(Error::InvalidParameter {
            field: "train",
            reason: "training set is empty".into(),
        });
    }
    let t_train = train_codes.map(|c| model.scale_code(c));
    let t_val = val_codes.map(|c| model.scale_code(c));
    let train_n = (train_x.ncols() * model.output_dim()) as f64;
    let val_n = (val_x.ncols() * model.output_dim()).max(1) as f64;

    let mut mu = opts.mu_init;
    let mut params = model.params();
    let mut history = Vec::new();
    let mut best_params = params.clone();
    let mut best_val = f64::INFINITY;
    let mut val_failures = 0usize;
    let mut stop = StopReason::MaxEpochs;

    'epochs: for epoch in 1..=opts.max_epochs {
        let eqs = assemble(model, train_x, &t_train, opts.chunk_size);
        if eqs.jtr.amax() < opts.min_gradient {
            stop = StopReason::GradientVanished;
            break;
        }
        // Damping loop: retry with larger μ until the step improves.
        let new_sse = loop {
            let mut damped = eqs.jtj.clone();
            for d in 0..damped.nrows() {
                damped[(d, d)] += mu;
            }
            match Cholesky::new(damped) {
                Some(chol) => {
                    let delta = chol.solve(&eqs.jtr);
                    let trial = &params - &delta;
                    model.set_params(&trial)?;
                    let trial_sse = sum_squared_error(model, train_x, &t_train)?;
                    if trial_sse < eqs.sse {
                        params = trial;
                        mu = (mu * 0.1).max(1e-20);
                        break trial_sse;
                    }
                    model.set_params(&params)?;
                    mu *= 10.0;
                }
                None => {
                    mu *= 10.0;
                    if mu > opts.mu_max {
                        return Err(Error::TrainingFailed(format!(
                            "normal equations singular even at mu = {mu:.3e} (epoch {epoch})"
                        )));
                    }
                    continue;
                }
            }
            if mu > opts.mu_max {
                stop = StopReason::MuOverflow;
                break 'epochs;
            }
        };

        let val_mse = if val_x.ncols() == 0 {
            new_sse / train_n
        } else {
            sum_squared_error(model, val_x, &t_val)? / val_n
        };
        history.push(EpochRecord {
            epoch,
            mu,
            train_mse: new_sse / train_n,
            val_mse,
        });
        if val_mse < best_val {
            best_val = val_mse;
            best_params = params.clone();
            val_failures = 0;
        } else {
            val_failures += 1;
            if val_failures >= opts.max_validation_failures {
                stop = StopReason::EarlyStopping;
                break;
            }
        }
    }

    model.set_params(&best_params)?;
    if best_val.is_infinite() {
        // No epoch completed (e.g. immediate μ overflow); keep initial weights.
        best_val = mean_squared_error(model, val_x, val_codes)?;
    }
    Ok(TrainOutcome {
        history,
        best_val_mse: best_val,
        stop,
    })
}
