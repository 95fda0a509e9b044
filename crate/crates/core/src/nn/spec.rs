use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl GridShape {
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Valid (unpadded) convolution with square kernels.
    Conv2d {
        filters: usize,
        kernel: usize,
        stride: usize,
    },
    Dense {
        width: usize,
    },
    Relu,
    Tanh,
    /// Fixed elementwise `x·scale + shift`.
    Affine {
        scale: Vec<f64>,
        shift: Vec<f64>,
    },
}

/// Maps a `tanh` output in (−1, 1) onto `bias ± bound` per action component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputScaling {
    pub bias: Vec<f64>,
    pub bound: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionBranch {
    pub action_dim: usize,
    pub layers: Vec<LayerSpec>,
}

/// Layer layout of an actor or critic.
///
/// The observation goes through `trunk`. A critic also routes the action
/// through `action_branch`; both paths must end at the same width and are
/// summed before `head`. An actor appends `output_scaling` after `head`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: GridShape,
    pub trunk: Vec<LayerSpec>,
    pub action_branch: Option<ActionBranch>,
    pub head: Vec<LayerSpec>,
    pub output_scaling: Option<OutputScaling>,
}

/// Layer widths shared by the actor and critic builders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub kernel: usize,
    pub dense1: usize,
    pub dense2: usize,
    pub action_hidden: usize,
    pub head_hidden: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            conv1_filters: 8,
            conv2_filters: 16,
            kernel: 3,
            dense1: 128,
            dense2: 64,
            action_hidden: 64,
            head_hidden: 64,
        }
    }
}

impl Architecture {
    fn state_trunk(&self) -> Vec<LayerSpec> {
        vec![
            LayerSpec::Conv2d {
                filters: self.conv1_filters,
                kernel: self.kernel,
                stride: 1,
            },
            LayerSpec::Relu,
            LayerSpec::Conv2d {
                filters: self.conv2_filters,
                kernel: self.kernel,
                stride: 1,
            },
            LayerSpec::Relu,
            LayerSpec::Dense { width: self.dense1 },
            LayerSpec::Relu,
            LayerSpec::Dense { width: self.dense2 },
            LayerSpec::Relu,
        ]
    }
}

impl NetworkSpec {
    /// Actor: conv stack, two dense layers, `tanh` head scaled to
    /// `[0, v_max] × [−ω_max, ω_max]`.
    pub fn actor(arch: &Architecture, input: GridShape, v_max: f64, omega_max: f64) -> Self {
        NetworkSpec {
            input,
            trunk: arch.state_trunk(),
            action_branch: None,
            head: vec![LayerSpec::Dense { width: 2 }, LayerSpec::Tanh],
            output_scaling: Some(OutputScaling {
                bias: vec![v_max / 2.0, 0.0],
                bound: vec![v_max / 2.0, omega_max],
            }),
        }
    }

    /// Critic: the actor's state path plus a one-layer action path, summed
    /// and followed by one hidden layer and a scalar output. The action is
    /// first normalized onto `[−1, 1]²` so both components enter on the same
    /// scale.
    pub fn critic(arch: &Architecture, input: GridShape, v_max: f64, omega_max: f64) -> Self {
        let half_v = v_max / 2.0;
        let normalize = LayerSpec::Affine {
            scale: vec![1.0 / half_v, 1.0 / omega_max],
            shift: vec![-1.0, 0.0],
        };
        let mut trunk = arch.state_trunk();
        if arch.dense2 != arch.action_hidden {
            // keep the two paths summable
            trunk.push(LayerSpec::Dense {
                width: arch.action_hidden,
            });
            trunk.push(LayerSpec::Relu);
        }
        NetworkSpec {
            input,
            trunk,
            action_branch: Some(ActionBranch {
                action_dim: 2,
                layers: vec![
                    normalize,
                    LayerSpec::Dense {
                        width: arch.action_hidden,
                    },
                    LayerSpec::Relu,
                ],
            }),
            head: vec![
                LayerSpec::Dense {
                    width: arch.head_hidden,
                },
                LayerSpec::Relu,
                LayerSpec::Dense { width: 1 },
            ],
            output_scaling: None,
        }
    }

    pub fn is_critic(&self) -> bool {
        self.action_branch.is_some()
    }

    pub(crate) fn check_scalars(&self) -> Result<()> {
        let layers = self
            .trunk
            .iter()
            .chain(self.head.iter())
            .chain(self.action_branch.iter().flat_map(|b| b.layers.iter()));
        for l in layers {
            match l {
                LayerSpec::Affine { scale, shift } => {
                    if scale.len() != shift.len() {
                        return Err(Error::InvalidConfig("affine scale/shift lengths differ".into()));
                    }
                    if !scale.iter().chain(shift).all(|v| v.is_finite()) {
                        return Err(Error::InvalidConfig("affine coefficients must be finite".into()));
                    }
                }
                LayerSpec::Conv2d { kernel, stride, filters } => {
                    if *kernel == 0 || *stride == 0 || *filters == 0 {
                        return Err(Error::InvalidConfig(
                            "convolution kernel, stride and filters must be positive".into(),
                        ));
                    }
                }
                LayerSpec::Dense { width } if *width == 0 => {
                    return Err(Error::InvalidConfig("dense width must be positive".into()));
                }
                _ => {}
            }
        }
        Ok(())
    }
}
