//! Feed-forward regression network: tanh hidden layers, linear output,
//! frozen input standardization and target scaling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FnnModel {
    /// Layer widths `[input, hidden..., output]`.
    pub sizes: Vec<usize>,
    /// Per layer, `out x in`.
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    /// Input standardization, frozen after training.
    pub input_mean: DVector<f64>,
    pub input_std: DVector<f64>,
    /// Code values mapped to -1 and +1 in target space.
    pub target_lo: f64,
    pub target_hi: f64,
}

impl FnnModel {
    /// Seeded uniform init in `±1/sqrt(fan_in)`, identity normalization.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidParameter {
                field: "sizes",
                reason: "need at least input and output layers".into(),
            });
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidParameter {
                field: "sizes",
                reason: "zero-width layer".into(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            weights.push(DMatrix::from_fn(fan_out, fan_in, |_, _| {
                rng.gen_range(-bound..bound)
            }));
            biases.push(DVector::from_fn(fan_out, |_, _| {
                rng.gen_range(-bound..bound)
            }));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
            input_mean: DVector::zeros(sizes[0]),
            input_std: DVector::from_element(sizes[0], 1.0),
            target_lo: 0.0,
            target_hi: 1.0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.sizes
            .windows(2)
            .map(|p| p[1] * p[0] + p[1])
            .sum()
    }

    /// Freeze input statistics from training features (columns = samples)
    /// and the code range for target scaling.
    pub fn fit_normalization(&mut self, inputs: &DMatrix<f64>, code_lo: f64, code_hi: f64) {
        let n = inputs.ncols().max(1) as f64;
        for d in 0..inputs.nrows() {
            let row = inputs.row(d);
            let mean = row.sum() / n;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            self.input_mean[d] = mean;
            self.input_std[d] = var.sqrt().max(1e-300);
        }
        self.target_lo = code_lo;
        self.target_hi = if code_hi > code_lo { code_hi } else { code_lo + 1.0 };
    }

    /// Map integer codes into `[-1, 1]` target space.
    pub fn scale_code(&self, code: f64) -> f64 {
        2.0 * (code - self.target_lo) / (self.target_hi - self.target_lo) - 1.0
    }

    /// Inverse of [`Self::scale_code`].
    pub fn unscale_code(&self, y: f64) -> f64 {
        (y + 1.0) / 2.0 * (self.target_hi - self.target_lo) + self.target_lo
    }

    fn normalize_input(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(x.len(), |d, _| (x[d] - self.input_mean[d]) / self.input_std[d])
    }

    /// Forward pass for one raw feature vector; returns the linear output in
    /// scaled target space.
    pub fn forward(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "fnn input",
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let mut a = self.normalize_input(&DVector::from_column_slice(x));
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            a = w * a + b;
            if l != last {
                a.apply(|v| *v = v.tanh());
            }
        }
        Ok(a)
    }

    /// Batched forward pass, columns are samples. Raw features in, scaled
    /// outputs out.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "fnn input",
                expected: self.input_dim(),
                actual: x.nrows(),
            });
        }
        let mut a = x.clone();
        for d in 0..a.nrows() {
            let (mean, std) = (self.input_mean[d], self.input_std[d]);
            for s in 0..a.ncols() {
                a[(d, s)] = (a[(d, s)] - mean) / std;
            }
        }
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * a;
            for mut col in z.column_iter_mut() {
                col += b;
            }
            if l != last {
                z.apply(|v| *v = v.tanh());
            }
            a = z;
        }
        Ok(a)
    }

    /// Predicted integer-code values (still real) for one feature vector.
    pub fn predict_codes(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.iter().map(|&y| self.unscale_code(y)).collect())
    }

    /// Flat parameter vector (weights row-major, then bias, per layer).
    pub fn params(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for r in 0..w.nrows() {
                for c in 0..w.ncols() {
                    out.push(w[(r, c)]);
                }
            }
            out.extend(b.iter().copied());
        }
        DVector::from_vec(out)
    }

    pub fn set_params(&mut self, p: &DVector<f64>) -> Result<()> {
        if p.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                context: "fnn params",
                expected: self.num_params(),
                actual: p.len(),
            });
        }
        let mut cursor = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for r in 0..w.nrows() {
                for c in 0..w.ncols() {
                    w[(r, c)] = p[cursor];
                    cursor += 1;
                }
            }
            for r in 0..b.len() {
                b[r] = p[cursor];
                cursor += 1;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// JSON model file
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct FnnModelFile {
    format_version: u32,
    sizes: Vec<usize>,
    activation: String,
    /// Row-major weight matrix per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    input_mean: Vec<f64>,
    input_std: Vec<f64>,
    target_lo: f64,
    target_hi: f64,
}

pub fn save_model(model: &FnnModel, path: &std::path::Path) -> Result<()> {
    let file = FnnModelFile {
        format_version: MODEL_FORMAT_VERSION,
        sizes: model.sizes.clone(),
        activation: "tanh".to_string(),
        weights: model
            .weights
            .iter()
            .map(|w| {
                let mut flat = Vec::with_capacity(w.len());
                for r in 0..w.nrows() {
                    for c in 0..w.ncols() {
                        flat.push(w[(r, c)]);
                    }
                }
                flat
            })
            .collect(),
        biases: model.biases.iter().map(|b| b.iter().copied().collect()).collect(),
        input_mean: model.input_mean.iter().copied().collect(),
        input_std: model.input_std.iter().copied().collect(),
        target_lo: model.target_lo,
        target_hi: model.target_hi,
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn load_model(path: &std::path::Path) -> Result<FnnModel> {
    let file: FnnModelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::MalformedFile {
            what: "model file",
            reason: format!(
                "format version {} unsupported (expected {MODEL_FORMAT_VERSION})",
                file.format_version
            ),
        });
    }
    if file.activation != "tanh" {
        return Err(Error::MalformedFile {
            what: "model file",
            reason: format!("unknown activation `{}`", file.activation),
        });
    }
    let mut model = FnnModel::new(&file.sizes, 0)?;
    for (l, pair) in file.sizes.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        if file.weights[l].len() != fan_in * fan_out || file.biases[l].len() != fan_out {
            return Err(Error::MalformedFile {
                what: "model file",
                reason: format!("layer {l} has wrong element count"),
            });
        }
        model.weights[l] = DMatrix::from_row_slice(fan_out, fan_in, &file.weights[l]);
        model.biases[l] = DVector::from_column_slice(&file.biases[l]);
    }
    model.input_mean = DVector::from_vec(file.input_mean);
    model.input_std = DVector::from_vec(file.input_std);
    if model.input_mean.len() != model.input_dim() || model.input_std.len() != model.input_dim() {
        return Err(Error::MalformedFile {
            what: "model file",
            reason: "normalization length mismatch".into(),
        });
    }
    model.target_lo = file.target_lo;
    model.target_hi = file.target_hi;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_model_outputs_zero() {
        let mut model = FnnModel::new(&[3, 4, 2], 1).unwrap();
        for w in &mut model.weights {
            w.fill(0.0);
        }
        for b in &mut model.biases {
            b.fill(0.0);
        }
        let y = model.forward(&[0.5, -1.0, 2.0]).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn degenerate_affine_model() {
        // No hidden layers: y = 2x + 1.
        let mut model = FnnModel::new(&[1, 1], 1).unwrap();
        model.weights[0][(0, 0)] = 2.0;
        model.biases[0][0] = 1.0;
        let y = model.forward(&[3.0]).unwrap();
        assert_relative_eq!(y[0], 7.0, max_relative = 1e-15);
    }

    #[test]
    fn forward_deterministic_and_batch_consistent() {
        let model = FnnModel::new(&[4, 10, 10, 3], 9).unwrap();
        let x = [0.1, -0.4, 2.2, 0.9];
        let a = model.forward(&x).unwrap();
        let b = model.forward(&x).unwrap();
        assert_eq!(a, b);
        let batch = DMatrix::from_fn(4, 2, |r, c| x[r] * (c + 1) as f64);
        let out = model.forward_batch(&batch).unwrap();
        let col0 = model.forward(batch.column(0).as_slice()).unwrap();
        for r in 0..3 {
            assert_relative_eq!(out[(r, 0)], col0[r], max_relative = 1e-14);
        }
    }

    #[test]
    fn param_vector_round_trip() {
        let model = FnnModel::new(&[5, 7, 2], 11).unwrap();
        let p = model.params();
        assert_eq!(p.len(), model.num_params());
        let mut clone = FnnModel::new(&[5, 7, 2], 99).unwrap();
        clone.set_params(&p).unwrap();
        assert_eq!(clone.weights, model.weights);
        assert_eq!(clone.biases, model.biases);
    }

    #[test]
    fn code_scaling_round_trip() {
        let mut model = FnnModel::new(&[2, 2], 0).unwrap();
        model.target_lo = 1.0;
        model.target_hi = 8.0;
        for code in [1.0, 2.0, 4.0, 8.0] {
            assert_relative_eq!(
                model.unscale_code(model.scale_code(code)),
                code,
                max_relative = 1e-12
            );
        }
        assert_relative_eq!(model.scale_code(1.0), -1.0);
        assert_relative_eq!(model.scale_code(8.0), 1.0);
    }

    #[test]
    fn model_file_round_trip() {
        let dir = std::env::temp_dir().join("irsim_fnn_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");
        let mut model = FnnModel::new(&[6, 10, 10, 10, 2], 3).unwrap();
        model.input_mean = DVector::from_element(6, 0.25);
        model.input_std = DVector::from_element(6, 2.5);
        model.target_lo = 1.0;
        model.target_hi = 2.0;
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(model, back);
        std::fs::remove_file(&path).ok();
    }
}
