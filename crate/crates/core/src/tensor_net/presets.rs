use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::layer::LayerSpec;
use super::network::Architecture;
use crate::error::Error;

/// Reference 1D architectures. Both share a stem (strided convolution and
/// pooling), two convolution stages and a global-average-pool head; `ResCnn`
/// wraps each stage in an identity skip connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "plain-cnn")]
    PlainCnn,
    #[serde(rename = "res-cnn")]
    ResCnn,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::PlainCnn => "plain-cnn",
            Preset::ResCnn => "res-cnn",
        }
    }

    /// Layer stack with base channel count `width`.
    pub fn layers(&self, width: usize, num_classes: usize) -> Vec<LayerSpec> {
        let conv = |out_channels, kernel_size, stride, padding| LayerSpec::Conv1d {
            out_channels,
            kernel_size,
            stride,
            padding,
        };
        let stage = |channels, k: usize| vec![conv(channels, k, 1, k / 2), LayerSpec::Relu, conv(channels, k, 1, k / 2)];

        let mut layers = vec![
            conv(width, 15, 2, 7),
            LayerSpec::Relu,
            LayerSpec::MaxPool1d {
                kernel_size: 4,
                stride: 4,
            },
        ];
        // (channels, kernel): the long first-stage kernel spans several
        // impulse periods at the stem's output rate
        let stages = [(width, 25), (2 * width, 9), (4 * width, 9)];
        for (i, (channels, k)) in stages.into_iter().enumerate() {
            match self {
                Preset::PlainCnn => layers.extend(stage(channels, k)),
                Preset::ResCnn => layers.push(LayerSpec::Residual {
                    layers: stage(channels, k),
                }),
            }
            layers.push(LayerSpec::Relu);
            if i + 1 < stages.len() {
                layers.push(LayerSpec::MaxPool1d {
                    kernel_size: 2,
                    stride: 2,
                });
            }
        }
        // pointwise expansion feeding the pooled feature vector
        layers.push(conv(16 * width, 1, 1, 0));
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::GlobalAvgPool);
        layers.push(LayerSpec::Dense { units: num_classes });
        layers
    }

    pub fn architecture(&self, input_length: usize, width: usize, num_classes: usize) -> Architecture {
        Architecture {
            input_length,
            input_channels: 1,
            num_classes,
            layers: self.layers(width, num_classes),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain-cnn" => Ok(Preset::PlainCnn),
            "res-cnn" => Ok(Preset::ResCnn),
            other => Err(Error::Config(format!(
                "unknown architecture preset {other:?} (expected plain-cnn or res-cnn)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_net::Network;

    #[test]
    fn presets_build_for_typical_lengths() {
        for preset in [Preset::PlainCnn, Preset::ResCnn] {
            for len in [64, 512, 2048, 3000] {
                let net = Network::new(preset.architecture(len, 4, 3), 0).unwrap();
                assert_eq!(net.logits(&vec![0.1; len]).unwrap().len(), 3);
            }
        }
    }

    #[test]
    fn presets_have_equal_parameter_budgets_up_to_projection() {
        let plain = Network::new(Preset::PlainCnn.architecture(256, 4, 3), 0).unwrap();
        let res = Network::new(Preset::ResCnn.architecture(256, 4, 3), 0).unwrap();
        // 1x1 projections on the widening stages: 4 -> 8 and 8 -> 16 channels
        assert_eq!(res.param_count(), plain.param_count() + (4 * 8 + 8) + (8 * 16 + 16));
    }

    #[test]
    fn names_round_trip() {
        for p in [Preset::PlainCnn, Preset::ResCnn] {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("vit".parse::<Preset>().is_err());
    }
}
