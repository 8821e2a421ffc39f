use ndarray::{Array2, ArrayView2};

use super::{
    dequantize, gaussian_values, quantize_blockwise, BlockSpec, Codebook, QuantError,
    QuantizedTensor,
};

pub const DEFAULT_RANK: usize = 8;

/// Trainable low-rank factors: `l1` is in × r, `l2` is r × out.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    l1: Array2<f64>,
    l2: Array2<f64>,
}

impl LoraAdapter {
    pub fn new(l1: Array2<f64>, l2: Array2<f64>) -> Result<Self, QuantError> {
        if l1.ncols() != l2.nrows() || l1.ncols() == 0 {
            return Err(QuantError::ShapeMismatch(format!(
                "adapter factors {:?} and {:?} do not share a positive rank",
                l1.dim(),
                l2.dim()
            )));
        }
        Ok(Self { l1, l2 })
    }

    pub fn rank(&self) -> usize {
        self.l1.ncols()
    }

    pub fn l1(&self) -> &Array2<f64> {
        &self.l1
    }

    pub fn l2(&self) -> &Array2<f64> {
        &self.l2
    }

    pub fn l1_mut(&mut self) -> &mut Array2<f64> {
        &mut self.l1
    }

    pub fn l2_mut(&mut self) -> &mut Array2<f64> {
        &mut self.l2
    }
}

/// Gradients of the adapter factors. The frozen quantized weight has no
/// entry here by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGrads {
    pub dl1: Array2<f64>,
    pub dl2: Array2<f64>,
}

/// One linear layer: frozen quantized weight (in × out) plus an adapter.
/// `Y = X · doubleDequant(W) + (X · L1) · L2`, with no extra scaling on
/// the adapter term.
#[derive(Debug, Clone)]
pub struct QuantLinear {
    weight: QuantizedTensor,
    base: Array2<f64>,
    pub adapter: LoraAdapter,
}

impl QuantLinear {
    pub fn new(
        weight: QuantizedTensor,
        cb: &Codebook,
        adapter: LoraAdapter,
    ) -> Result<Self, QuantError> {
        let &[rows, cols] = weight.shape() else {
            return Err(QuantError::ShapeMismatch(format!(
                "weight must be 2-D, got {:?}",
                weight.shape()
            )));
        };
        if adapter.l1.nrows() != rows || adapter.l2.ncols() != cols {
            return Err(QuantError::ShapeMismatch(format!(
                "adapter {:?}·{:?} does not fit weight {rows}×{cols}",
                adapter.l1.dim(),
                adapter.l2.dim()
            )));
        }
        let deq = dequantize(&weight, cb)?;
        let base = Array2::from_shape_vec((rows, cols), deq.into_iter().map(f64::from).collect())
            .expect("dequantized length matches shape");
        Ok(Self {
            weight,
            base,
            adapter,
        })
    }

    pub fn in_features(&self) -> usize {
        self.base.nrows()
    }

    pub fn out_features(&self) -> usize {
        self.base.ncols()
    }

    pub fn weight(&self) -> &QuantizedTensor {
        &self.weight
    }

    /// The dequantized base weight, widened to f64.
    pub fn base_weight(&self) -> &Array2<f64> {
        &self.base
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<(), QuantError> {
        if x.ncols() != self.in_features() {
            return Err(QuantError::ShapeMismatch(format!(
                "input has {} features, layer expects {}",
                x.ncols(),
                self.in_features()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, QuantError> {
        self.check_input(&x)?;
        let mut y = x.dot(&self.base);
        y += &x.dot(&self.adapter.l1).dot(&self.adapter.l2);
        Ok(y)
    }

    /// `dL2 = (X·L1)ᵀ·dY`, `dL1 = Xᵀ·(dY·L2ᵀ)`.
    pub fn adapter_grads(
        &self,
        x: ArrayView2<f64>,
        dy: ArrayView2<f64>,
    ) -> Result<AdapterGrads, QuantError> {
        self.check_input(&x)?;
        if dy.dim() != (x.nrows(), self.out_features()) {
            return Err(QuantError::ShapeMismatch(format!(
                "output gradient {:?}, expected ({}, {})",
                dy.dim(),
                x.nrows(),
                self.out_features()
            )));
        }
        let xl1 = x.dot(&self.adapter.l1);
        let dl2 = xl1.t().dot(&dy);
        let dl1 = x.t().dot(&dy.dot(&self.adapter.l2.t()));
        Ok(AdapterGrads { dl1, dl2 })
    }
}

fn factor_mut(layer: &mut QuantLinear, which: usize) -> &mut Array2<f64> {
    if which == 1 {
        layer.adapter.l1_mut()
    } else {
        layer.adapter.l2_mut()
    }
}

fn half_sq_norm(y: &Array2<f64>) -> f64 {
    0.5 * y.iter().map(|v| v * v).sum::<f64>()
}

/// |a − n| / max(|a|, |n|, 1e-6).
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error_l1: f64,
    pub max_rel_error_l2: f64,
}

impl GradCheck {
    pub fn max_rel_error(&self) -> f64 {
        self.max_rel_error_l1.max(self.max_rel_error_l2)
    }
}

/// Compare [`QuantLinear::adapter_grads`] for the loss ½‖Y‖² against
/// central differences with step `h`.
pub fn finite_difference_check(
    layer: &QuantLinear,
    x: ArrayView2<f64>,
    h: f64,
) -> Result<GradCheck, QuantError> {
    let y = layer.forward(x)?;
    let grads = layer.adapter_grads(x, y.view())?;
    let mut probe = layer.clone();
    let mut numeric = |which: usize, idx: (usize, usize)| -> Result<f64, QuantError> {
        let orig = factor_mut(&mut probe, which)[idx];
        factor_mut(&mut probe, which)[idx] = orig + h;
        let up = half_sq_norm(&probe.forward(x)?);
        factor_mut(&mut probe, which)[idx] = orig - h;
        let down = half_sq_norm(&probe.forward(x)?);
        factor_mut(&mut probe, which)[idx] = orig;
        Ok((up - down) / (2.0 * h))
    };
    let mut worst = [0.0f64; 2];
    for (which, analytic) in [(1, &grads.dl1), (2, &grads.dl2)] {
        for (idx, &a) in analytic.indexed_iter() {
            let n = numeric(which, idx)?;
            worst[which - 1] = worst[which - 1].max(relative_error(a, n));
        }
    }
    Ok(GradCheck {
        max_rel_error_l1: worst[0],
        max_rel_error_l2: worst[1],
    })
}

/// A seeded random layer and input batch: Gaussian weight quantized with
/// `bits`, Gaussian adapter factors scaled by 0.1, Gaussian input.
pub fn random_layer(
    seed: u64,
    batch: usize,
    in_features: usize,
    out_features: usize,
    rank: usize,
    bits: u8,
) -> Result<(QuantLinear, Array2<f64>), QuantError> {
    let cb = Codebook::normal_float(bits)?;
    let w = gaussian_values(seed, in_features * out_features);
    let qt = quantize_blockwise(&w, &[in_features, out_features], &BlockSpec::default(), &cb)?;
    let mat = |s: u64, r: usize, c: usize, scale: f64| {
        Array2::from_shape_vec(
            (r, c),
            gaussian_values(s, r * c)
                .into_iter()
                .map(|v| v as f64 * scale)
                .collect(),
        )
        .expect("length matches")
    };
    let adapter = LoraAdapter::new(
        mat(seed.wrapping_add(1), in_features, rank, 0.1),
        mat(seed.wrapping_add(2), rank, out_features, 0.1),
    )?;
    let x = mat(seed.wrapping_add(3), batch, in_features, 1.0);
    Ok((QuantLinear::new(qt, &cb, adapter)?, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn dense_oracle(layer: &QuantLinear, x: &Array2<f64>) -> Array2<f64> {
        let w = layer.base_weight() + &layer.adapter.l1().dot(layer.adapter.l2());
        x.dot(&w)
    }

    #[test]
    fn zero_adapter_gives_base_product() {
        let (mut layer, x) = random_layer(1, 4, 8, 8, 2, 8).unwrap();
        layer.adapter.l2_mut().fill(0.0);
        assert_eq!(layer.forward(x.view()).unwrap(), x.dot(layer.base_weight()));
    }

    #[test]
    fn zero_weight_gives_adapter_product() {
        let cb = Codebook::normal_float(8).unwrap();
        let qt = quantize_blockwise(&[0.0; 6], &[3, 2], &BlockSpec::default(), &cb).unwrap();
        let adapter = LoraAdapter::new(array![[1.0], [2.0], [3.0]], array![[0.5, -1.0]]).unwrap();
        let layer = QuantLinear::new(qt, &cb, adapter).unwrap();
        let x = array![[1.0, 1.0, 1.0], [0.0, 2.0, 0.0]];
        let want = x.dot(layer.adapter.l1()).dot(layer.adapter.l2());
        assert_eq!(layer.forward(x.view()).unwrap(), want);
        assert_eq!(want, array![[3.0, -6.0], [2.0, -4.0]]);
    }

    #[test]
    fn forward_matches_dense_materialization() {
        for seed in 0..5 {
            let (layer, x) = random_layer(seed, 4, 8, 8, 2, 8).unwrap();
            let y = layer.forward(x.view()).unwrap();
            let o = dense_oracle(&layer, &x);
            for (a, b) in y.iter().zip(&o) {
                assert!(relative_error(*a, *b) < 1e-6);
            }
        }
    }

    #[test]
    fn scalar_gradients_by_hand() {
        // x = 2, dy = 3, L1 = 5, L2 = 7: dL1 = x·dy·L2 = 42, dL2 = x·L1·dy = 30.
        let cb = Codebook::normal_float(4).unwrap();
        let qt = quantize_blockwise(&[0.4], &[1, 1], &BlockSpec::default(), &cb).unwrap();
        let layer = QuantLinear::new(
            qt,
            &cb,
            LoraAdapter::new(array![[5.0]], array![[7.0]]).unwrap(),
        )
        .unwrap();
        let g = layer
            .adapter_grads(array![[2.0]].view(), array![[3.0]].view())
            .unwrap();
        assert_eq!(g.dl1, array![[42.0]]);
        assert_eq!(g.dl2, array![[30.0]]);
    }

    #[test]
    fn zero_upstream_gradient() {
        let (layer, x) = random_layer(4, 3, 5, 6, 2, 4).unwrap();
        let g = layer
            .adapter_grads(x.view(), Array2::zeros((3, 6)).view())
            .unwrap();
        assert!(g.dl1.iter().chain(&g.dl2).all(|&v| v == 0.0));
        assert_eq!(g.dl1.dim(), (5, 2));
        assert_eq!(g.dl2.dim(), (2, 6));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            let (layer, x) = random_layer(100 + seed, 3, 6, 5, 3, 8).unwrap();
            let check = finite_difference_check(&layer, x.view(), 1e-3).unwrap();
            assert!(check.max_rel_error() < 1e-4, "{check:?}");
        }
    }

    #[test]
    fn shape_errors() {
        let (layer, _) = random_layer(1, 2, 4, 3, 2, 4).unwrap();
        assert!(layer.forward(Array2::zeros((2, 5)).view()).is_err());
        assert!(layer
            .adapter_grads(Array2::zeros((2, 4)).view(), Array2::zeros((2, 4)).view())
            .is_err());
        assert!(LoraAdapter::new(Array2::zeros((4, 2)), Array2::zeros((3, 3))).is_err());
    }
}
