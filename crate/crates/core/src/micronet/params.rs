//! Layer parameter arithmetic and the reference parameter-count table.

/// Learnable scalars of a conv layer: `((w·h·lf) + 1)·cf`.
pub fn layer_param_count(w: usize, h: usize, lf: usize, cf: usize) -> usize {
    (w * h * lf + 1) * cf
}

/// Learnable scalars of a dense layer: `cf·pf + cf`.
pub fn fc_param_count(pf: usize, cf: usize) -> usize {
    cf * pf + cf
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamRow {
    pub layer: &'static str,
    pub activation_shape: Vec<usize>,
    pub activation_size: usize,
    /// Parameter value as tabulated.
    pub params: usize,
    /// The same count recomputed from the layer's counting formula.
    pub recomputed: usize,
}

impl ParamRow {
    fn new(layer: &'static str, activation_shape: Vec<usize>, params: usize, recomputed: usize) -> Self {
        let activation_size = activation_shape.iter().product();
        Self { layer, activation_shape, activation_size, params, recomputed }
    }

    fn exact(layer: &'static str, activation_shape: Vec<usize>, params: usize) -> Self {
        Self::new(layer, activation_shape, params, params)
    }

    /// `64×64×64` for the input row, `(a,b,c)` tuples elsewhere.
    pub fn shape_label(&self) -> String {
        let parts: Vec<String> = self.activation_shape.iter().map(usize::to_string).collect();
        if self.layer == "Input" {
            parts.join("×")
        } else {
            format!("({})", parts.join(","))
        }
    }
}

/// The ten-row parameter table of the reference 2.75D architecture.
///
/// Activation shapes are literal table data and do not describe the runtime
/// network built by [`super::build_network`]. The tabulated values for
/// convolution layers 2 and 3 (3456, 9216) equal the bias-free product
/// `w·h·lf·cf`; `recomputed` carries the full formula (3472, 9248).
pub fn architecture_param_table() -> Vec<ParamRow> {
    vec![
        ParamRow::exact("Input", vec![64, 64, 64], 0),
        ParamRow::exact("Convolution Layer 1", vec![24, 24, 8], layer_param_count(5, 5, 1, 8)),
        ParamRow::exact("Maxpool Layer 1", vec![2, 2, 8], 0),
        ParamRow::new("Convolution Layer 2", vec![32, 32, 8], 3 * 3 * 24 * 16, layer_param_count(3, 3, 24, 16)),
        ParamRow::exact("Maxpool Layer 2", vec![2, 2, 8], 0),
        ParamRow::new("Convolution Layer 3", vec![48, 48, 8], 3 * 3 * 32 * 32, layer_param_count(3, 3, 32, 32)),
        ParamRow::exact("Maxpool Layer 3", vec![2, 2, 8], 0),
        ParamRow::exact("Fully connected Layer 3", vec![110, 1], fc_param_count(70, 110)),
        ParamRow::exact("Fully connected Layer 4", vec![70, 1], fc_param_count(110, 70)),
        ParamRow::exact("Softmax Layer", vec![10, 1], fc_param_count(70, 10)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_counts() {
        assert_eq!(layer_param_count(5, 5, 1, 8), 208);
        // the tabulated 3456 and 9216 leave out the bias term
        assert_eq!(layer_param_count(3, 3, 24, 16), 3472);
        assert_eq!(layer_param_count(3, 3, 32, 32), 9248);
        assert_eq!(layer_param_count(3, 3, 24, 16) - 16, 3456);
        assert_eq!(layer_param_count(3, 3, 32, 32) - 32, 9216);
    }

    #[test]
    fn dense_counts() {
        assert_eq!(fc_param_count(70, 10), 710);
        assert_eq!(fc_param_count(70, 110), 7810);
        assert_eq!(fc_param_count(110, 70), 7770);
    }

    #[test]
    fn table_rows() {
        let t = architecture_param_table();
        assert_eq!(t.len(), 10);
        assert_eq!(t[0].shape_label(), "64×64×64");
        assert_eq!((t[0].activation_size, t[0].params), (262144, 0));
        assert_eq!(t[5].layer, "Convolution Layer 3");
        assert_eq!(t[5].shape_label(), "(48,48,8)");
        assert_eq!((t[5].activation_size, t[5].params), (18432, 9216));
        assert_eq!(t[5].recomputed, 9248);
        for i in [2, 4, 6] {
            assert_eq!(t[i].params, 0);
        }
        let differing: Vec<usize> = (0..10).filter(|&i| t[i].params != t[i].recomputed).collect();
        assert_eq!(differing, vec![3, 5]);
    }
}
