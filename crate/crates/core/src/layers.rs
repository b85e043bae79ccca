//! Parameterised building blocks shared by the codec and the velocity
//! network. All operate on `[batch, channels, time]` tensors.

use rand::Rng;

use crate::autodiff::{Graph, Module, Parameter, Var};
use crate::error::Result;

/// Epsilon of every layer normalisation.
pub const LN_EPS: f64 = 1e-6;

/// Implements [`Module`] by visiting the listed fields in order.
macro_rules! impl_module {
    ($ty:ty; $($field:ident),+ $(,)?) => {
        impl $crate::autodiff::Module for $ty {
            fn visit(&self, f: &mut dyn FnMut(&$crate::autodiff::Parameter)) {
                $( $crate::autodiff::Module::visit(&self.$field, f); )+
            }
            fn visit_mut(&mut self, f: &mut dyn FnMut(&mut $crate::autodiff::Parameter)) {
                $( $crate::autodiff::Module::visit_mut(&mut self.$field, f); )+
            }
        }
    };
}
pub(crate) use impl_module;

#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: Parameter,
    pub bias: Parameter,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl_module!(Conv1d; weight, bias);

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = c_in / groups * kernel;
        Self {
            weight: Parameter::uniform(format!("{name}.weight"), &[c_out, c_in / groups, kernel], fan_in, rng),
            bias: Parameter::zeros(format!("{name}.bias"), &[c_out]),
            stride,
            padding,
            groups,
        }
    }

    /// Stride 1 with `kernel / 2` padding on each side (odd kernels keep the length).
    pub fn same<R: Rng>(name: &str, c_in: usize, c_out: usize, kernel: usize, rng: &mut R) -> Self {
        Self::new(name, c_in, c_out, kernel, 1, kernel / 2, 1, rng)
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(&self.weight);
        let b = g.param(&self.bias);
        g.conv1d(x, w, Some(b), self.stride, self.padding, self.groups)
    }
}

#[derive(Debug, Clone)]
pub struct ConvTranspose1d {
    pub weight: Parameter,
    pub bias: Parameter,
    pub stride: usize,
    pub padding: usize,
}

impl_module!(ConvTranspose1d; weight, bias);

impl ConvTranspose1d {
    pub fn new<R: Rng>(
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            weight: Parameter::uniform(format!("{name}.weight"), &[c_in, c_out, kernel], c_in * kernel / stride, rng),
            bias: Parameter::zeros(format!("{name}.bias"), &[c_out]),
            stride,
            padding,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(&self.weight);
        let b = g.param(&self.bias);
        g.conv_transpose1d(x, w, Some(b), self.stride, self.padding)
    }
}

/// Channel-wise layer normalisation with learned gain and bias.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Parameter,
    pub beta: Parameter,
}

impl_module!(LayerNorm; gamma, beta);

impl LayerNorm {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Parameter::filled(format!("{name}.gamma"), &[channels], 1.0),
            beta: Parameter::zeros(format!("{name}.beta"), &[channels]),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let gamma = g.param(&self.gamma);
        let beta = g.param(&self.beta);
        g.layer_norm(x, gamma, beta, LN_EPS)
    }
}

/// Fully connected layer `[out, in]` applied to the last axis.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl_module!(Linear; weight, bias);

impl Linear {
    pub fn new<R: Rng>(name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Self {
            weight: Parameter::uniform(format!("{name}.weight"), &[fan_out, fan_in], fan_in, rng),
            bias: Parameter::zeros(format!("{name}.bias"), &[fan_out]),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(&self.weight);
        let b = g.param(&self.bias);
        g.linear(x, w, Some(b))
    }
}

/// Residual block: depthwise conv, layer norm, pointwise expansion, GELU,
/// global response normalisation, pointwise projection.
#[derive(Debug, Clone)]
pub struct ConvNextBlock {
    pub depthwise: Conv1d,
    pub norm: LayerNorm,
    pub expand: Conv1d,
    pub grn_gamma: Parameter,
    pub grn_beta: Parameter,
    pub project: Conv1d,
}

impl_module!(ConvNextBlock; depthwise, norm, expand, grn_gamma, grn_beta, project);

impl ConvNextBlock {
    pub fn new<R: Rng>(name: &str, channels: usize, kernel: usize, expansion: usize, rng: &mut R) -> Self {
        let hidden = channels * expansion;
        Self {
            depthwise: Conv1d::new(&format!("{name}.dw"), channels, channels, kernel, 1, kernel / 2, channels, rng),
            norm: LayerNorm::new(&format!("{name}.norm"), channels),
            expand: Conv1d::same(&format!("{name}.pw1"), channels, hidden, 1, rng),
            grn_gamma: Parameter::zeros(format!("{name}.grn.gamma"), &[hidden]),
            grn_beta: Parameter::zeros(format!("{name}.grn.beta"), &[hidden]),
            project: Conv1d::same(&format!("{name}.pw2"), hidden, channels, 1, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let h = self.depthwise.forward(g, x)?;
        let h = self.norm.forward(g, h)?;
        let h = self.expand.forward(g, h)?;
        let h = g.gelu(h);
        let (gamma, beta) = (g.param(&self.grn_gamma), g.param(&self.grn_beta));
        let h = g.grn(h, gamma, beta)?;
        let h = self.project.forward(g, h)?;
        g.add(x, h)
    }
}

/// Sets every parameter of `module` to `value`.
pub fn fill<M: Module + ?Sized>(module: &mut M, value: f64) {
    module.visit_mut(&mut |p| p.value_mut().iter_mut().for_each(|v| *v = value));
}

/// Fills every parameter with independent uniform draws in `±scale`.
/// Used by tests that need nonzero gains and biases everywhere.
pub fn randomize<M: Module + ?Sized, R: Rng>(module: &mut M, scale: f64, rng: &mut R) {
    module.visit_mut(&mut |p| p.value_mut().iter_mut().for_each(|v| *v = rng.gen_range(-scale..scale)));
}
