use serde::{Deserialize, Serialize};

use super::{ConvKernelBank, Result, Tensor3, TensorError};

/// Zero-padding mode for [`conv2d`]. Stride is always 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Output keeps the input's spatial size. For a kernel of size `k` the
    /// input is padded by `floor((k-1)/2)` before and `ceil((k-1)/2)` after.
    Same,
    /// No padding; output size is `input - k + 1`.
    Valid,
}

impl Padding {
    /// `(before, after)` padding for one axis.
    pub fn amounts(self, kernel: usize) -> (usize, usize) {
        match self {
            Padding::Same => {
                let total = kernel.saturating_sub(1);
                (total / 2, total - total / 2)
            }
            Padding::Valid => (0, 0),
        }
    }
}

/// Grouped 2-D cross-correlation with stride 1.
///
/// With `groups == input.maps()` and one kernel per map this is a depthwise
/// convolution; output map `o` reads input maps of group
/// `o / (kernels / groups)`.
pub fn conv2d(input: &Tensor3, bank: &ConvKernelBank, padding: Padding) -> Result<Tensor3> {
    let (in_maps, in_rows, in_cols) = input.dims();
    let shape_err = |expected: String, found: String| TensorError::ShapeMismatch {
        layer: bank.name.clone(),
        expected,
        found,
    };

    if bank.groups == 0 || in_maps % bank.groups != 0 {
        return Err(shape_err(
            format!("groups dividing {in_maps} input maps"),
            format!("groups = {}", bank.groups),
        ));
    }
    if bank.kernels == 0 || !bank.kernels.is_multiple_of(bank.groups) {
        return Err(shape_err(
            format!("kernel count divisible by groups = {}", bank.groups),
            format!("kernels = {}", bank.kernels),
        ));
    }
    let per_group = in_maps / bank.groups;
    let expected_len = bank.kernels * per_group * bank.kernel_rows * bank.kernel_cols;
    if bank.kernel_rows == 0 || bank.kernel_cols == 0 || bank.weights.len() != expected_len {
        return Err(shape_err(
            format!(
                "{expected_len} weights for [{}, {per_group}, {}, {}]",
                bank.kernels, bank.kernel_rows, bank.kernel_cols
            ),
            format!("{} weights", bank.weights.len()),
        ));
    }

    let (pad_top, _) = padding.amounts(bank.kernel_rows);
    let (pad_left, _) = padding.amounts(bank.kernel_cols);
    let (out_rows, out_cols) = match padding {
        Padding::Same => (in_rows, in_cols),
        Padding::Valid => {
            if bank.kernel_rows > in_rows || bank.kernel_cols > in_cols {
                return Err(shape_err(
                    format!(
                        "input at least {}x{} for valid padding",
                        bank.kernel_rows, bank.kernel_cols
                    ),
                    format!("input {in_rows}x{in_cols}"),
                ));
            }
            (in_rows - bank.kernel_rows + 1, in_cols - bank.kernel_cols + 1)
        }
    };

    let out_per_group = bank.kernels / bank.groups;
    let mut out = Tensor3::zeros(bank.kernels, out_rows, out_cols)?;

    for o in 0..bank.kernels {
        let group = o / out_per_group;
        for m in 0..per_group {
            let in_map = group * per_group + m;
            for kr in 0..bank.kernel_rows {
                for r in 0..out_rows {
                    let ir = r + kr;
                    if ir < pad_top || ir - pad_top >= in_rows {
                        continue;
                    }
                    let in_row = input.row(in_map, ir - pad_top);
                    let out_row = out.row_mut(o, r);
                    for kc in 0..bank.kernel_cols {
                        let w = bank.weight(o, m, kr, kc, per_group);
                        // input column = c + kc - pad_left, kept inside [0, in_cols)
                        let c_start = pad_left.saturating_sub(kc);
                        let c_end = (in_cols + pad_left).saturating_sub(kc).min(out_cols);
                        if c_start >= c_end {
                            continue;
                        }
                        let shift = c_start + kc - pad_left;
                        let src = &in_row[shift..shift + (c_end - c_start)];
                        for (acc, x) in out_row[c_start..c_end].iter_mut().zip(src) {
                            *acc += w * x;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
