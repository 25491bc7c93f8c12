//! Forward-only fusion network: camera sub-net, RV branch with a two-level
//! U-net, summed LiDAR/map BEV branch and a strided fusion head.

mod conv;
mod network;
mod outputs;
mod weights;

pub use conv::{add, conv2d_forward, conv_transpose_h2, relu_in_place, ConvLayerSpec};
pub use network::{image_features, FusionNet, LayerDef, LayerKind, NetConfig, NetInputs, RvTrace, ShapePlan};
pub use outputs::{logistic, logit, CellOutputs, OutputLayout};
pub use weights::{NetworkWeights, WeightBlock, GLOROT_UNIFORM};
