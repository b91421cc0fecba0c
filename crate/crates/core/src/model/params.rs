use crate::layers::{Blstm, FcLayer, LstmParams};
use crate::numerics::{Real, Tensor};

/// Which optimizer/clipping group a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Encoder,
    /// BLSTM weights: the group gradient clipping applies to.
    Recurrent,
    Output,
}

#[derive(Debug)]
pub struct ParamRef<'a, S: Real> {
    pub name: String,
    pub group: ParamGroup,
    pub tensor: &'a Tensor<S>,
}

#[derive(Debug)]
pub struct ParamMut<'a, S: Real> {
    pub name: String,
    pub group: ParamGroup,
    pub tensor: &'a mut Tensor<S>,
}

/// Named, ordered traversal of all trainable tensors.
///
/// `collect` and `collect_mut` must visit the same tensors in the same order.
pub trait Parameterized<S: Real> {
    fn collect<'a>(&'a self, prefix: &str, group: ParamGroup, out: &mut Vec<ParamRef<'a, S>>);
    fn collect_mut<'a>(&'a mut self, prefix: &str, group: ParamGroup, out: &mut Vec<ParamMut<'a, S>>);

    fn params(&self) -> Vec<ParamRef<'_, S>> {
        let mut out = Vec::new();
        self.collect("", ParamGroup::Output, &mut out);
        out
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, S>> {
        let mut out = Vec::new();
        self.collect_mut("", ParamGroup::Output, &mut out);
        out
    }

    fn num_parameters(&self) -> usize {
        self.params().iter().map(|p| p.tensor.len()).sum()
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl<S: Real> Parameterized<S> for FcLayer<S> {
    fn collect<'a>(&'a self, prefix: &str, group: ParamGroup, out: &mut Vec<ParamRef<'a, S>>) {
        out.push(ParamRef { name: join(prefix, "weight"), group, tensor: &self.weight });
        out.push(ParamRef { name: join(prefix, "bias"), group, tensor: &self.bias });
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, group: ParamGroup, out: &mut Vec<ParamMut<'a, S>>) {
        out.push(ParamMut { name: join(prefix, "weight"), group, tensor: &mut self.weight });
        out.push(ParamMut { name: join(prefix, "bias"), group, tensor: &mut self.bias });
    }
}

impl<S: Real> Parameterized<S> for LstmParams<S> {
    fn collect<'a>(&'a self, prefix: &str, group: ParamGroup, out: &mut Vec<ParamRef<'a, S>>) {
        out.push(ParamRef { name: join(prefix, "w_ih"), group, tensor: &self.w_ih });
        out.push(ParamRef { name: join(prefix, "w_hh"), group, tensor: &self.w_hh });
        out.push(ParamRef { name: join(prefix, "bias"), group, tensor: &self.bias });
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, group: ParamGroup, out: &mut Vec<ParamMut<'a, S>>) {
        out.push(ParamMut { name: join(prefix, "w_ih"), group, tensor: &mut self.w_ih });
        out.push(ParamMut { name: join(prefix, "w_hh"), group, tensor: &mut self.w_hh });
        out.push(ParamMut { name: join(prefix, "bias"), group, tensor: &mut self.bias });
    }
}

impl<S: Real> Parameterized<S> for Blstm<S> {
    fn collect<'a>(&'a self, prefix: &str, _group: ParamGroup, out: &mut Vec<ParamRef<'a, S>>) {
        self.forward.collect(&join(prefix, "fwd"), ParamGroup::Recurrent, out);
        self.backward.collect(&join(prefix, "bwd"), ParamGroup::Recurrent, out);
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, _group: ParamGroup, out: &mut Vec<ParamMut<'a, S>>) {
        self.forward.collect_mut(&join(prefix, "fwd"), ParamGroup::Recurrent, out);
        self.backward.collect_mut(&join(prefix, "bwd"), ParamGroup::Recurrent, out);
    }
}
