//! Forward and backward evaluation of a [`NetworkSpec`] as a small DAG.

use super::{NetworkSpec, Op, Params, Plan};
use crate::engine::activation::relu_in_place;
use crate::engine::{
    concat_backward, concat_channels, conv2d_dilated_backward, conv2d_dilated_forward, maxpool_same_backward,
    maxpool_same_forward, relu_backward, ConvParams, PoolIndices,
};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

enum Saved<T> {
    Conv { input: Tensor<T>, output: Tensor<T> },
    Pool { indices: PoolIndices },
}

/// State recorded by [`forward`] for [`backward`].
pub struct Trace<T> {
    plan: Plan,
    saved: Vec<Saved<T>>,
}

pub struct Forward<T> {
    pub logits: Tensor<T>,
    pub trace: Option<Trace<T>>,
}

/// Parameter gradients plus the gradient with respect to the network input.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub params: Params<T>,
    pub input: Tensor<T>,
}

fn check<T: Real>(spec: &NetworkSpec, params: &Params<T>) -> Result<()> {
    if !params.matches(spec) {
        return Err(Error::InvalidArgument(format!(
            "parameters do not match the {} spec",
            spec.arch
        )));
    }
    Ok(())
}

pub fn forward<T: Real>(
    spec: &NetworkSpec,
    params: &Params<T>,
    batch: &Tensor<T>,
    save_for_backward: bool,
) -> Result<Forward<T>> {
    check(spec, params)?;
    let shape = batch.shape();
    if shape.channels != spec.in_channels {
        return Err(Error::shape("network input channels", spec.in_channels, shape.channels));
    }
    let plan = spec.plan();
    // Last node index that reads each value, so inference can free early.
    let mut last_use = vec![0usize; plan.channels.len()];
    for (i, node) in plan.nodes.iter().enumerate() {
        for &v in &node.inputs {
            last_use[v] = i;
        }
    }
    let mut values: Vec<Option<Tensor<T>>> = vec![None; plan.channels.len()];
    values[0] = Some(batch.clone());
    let mut saved = Vec::with_capacity(if save_for_backward { plan.nodes.len() } else { 0 });
    for (i, node) in plan.nodes.iter().enumerate() {
        let gather = |values: &[Option<Tensor<T>>]| -> Result<Tensor<T>> {
            if node.inputs.len() == 1 {
                Ok(values[node.inputs[0]].clone().expect("value computed"))
            } else {
                let parts: Vec<&Tensor<T>> = node
                    .inputs
                    .iter()
                    .map(|&v| values[v].as_ref().expect("value computed"))
                    .collect();
                concat_channels(&parts)
            }
        };
        let out = match node.op {
            Op::Conv { param, relu, .. } => {
                let input = gather(&values)?;
                let mut out = conv2d_dilated_forward(&input, &params.convs[param])?;
                if relu {
                    relu_in_place(&mut out);
                }
                if save_for_backward {
                    saved.push(Saved::Conv {
                        input,
                        output: out.clone(),
                    });
                }
                out
            }
            Op::Pool { window } => {
                let input = values[node.inputs[0]].as_ref().expect("value computed");
                let (out, indices) = maxpool_same_forward(input, window)?;
                if save_for_backward {
                    saved.push(Saved::Pool { indices });
                }
                out
            }
        };
        if !save_for_backward {
            for &v in &node.inputs {
                if last_use[v] == i {
                    values[v] = None;
                }
            }
        }
        values[node.output] = Some(out);
    }
    let logits = values.pop().flatten().expect("classifier output");
    Ok(Forward {
        logits,
        trace: save_for_backward.then_some(Trace { plan, saved }),
    })
}

fn accumulate<T: Real>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) -> Result<()> {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Chain rule over the recorded graph. Values read by several layers
/// receive the sum of their consumers' gradients.
pub fn backward<T: Real>(
    spec: &NetworkSpec,
    params: &Params<T>,
    trace: &Trace<T>,
    grad_logits: &Tensor<T>,
) -> Result<Gradients<T>> {
    check(spec, params)?;
    let plan = &trace.plan;
    if trace.saved.len() != plan.nodes.len() {
        return Err(Error::MissingState("forward trace without saved tensors"));
    }
    let mut grads: Vec<Option<Tensor<T>>> = vec![None; plan.channels.len()];
    let last = plan.nodes.last().expect("classifier node").output;
    grads[last] = Some(grad_logits.clone());
    let mut param_grads: Vec<Option<ConvParams<T>>> = vec![None; params.convs.len()];
    for (node, saved) in plan.nodes.iter().zip(&trace.saved).rev() {
        let Some(g) = grads[node.output].take() else {
            continue;
        };
        match (node.op, saved) {
            (Op::Conv { param, relu, .. }, Saved::Conv { input, output }) => {
                let g = if relu { relu_backward(&g, output)? } else { g };
                let cg = conv2d_dilated_backward(&g, Some(input), &params.convs[param])?;
                param_grads[param] = Some(ConvParams {
                    weights: cg.weights,
                    bias: cg.bias,
                    rate: params.convs[param].rate,
                });
                if node.inputs.len() == 1 {
                    accumulate(&mut grads[node.inputs[0]], cg.input)?;
                } else {
                    let split: Vec<usize> = node.inputs.iter().map(|&v| plan.channels[v]).collect();
                    for (&v, part) in node.inputs.iter().zip(concat_backward(&cg.input, &split)?) {
                        accumulate(&mut grads[v], part)?;
                    }
                }
            }
            (Op::Pool { .. }, Saved::Pool { indices }) => {
                let gi = maxpool_same_backward(&g, indices)?;
                accumulate(&mut grads[node.inputs[0]], gi)?;
            }
            _ => return Err(Error::MissingState("trace does not match plan")),
        }
    }
    let input_shape = trace
        .saved
        .iter()
        .zip(&plan.nodes)
        .find_map(|(s, n)| match s {
            Saved::Conv { input, .. } if n.inputs == [0] => Some(input.shape()),
            _ => None,
        });
    let zeros = Params::zeros(spec);
    Ok(Gradients {
        params: Params {
            convs: param_grads
                .into_iter()
                .zip(zeros.convs)
                .map(|(g, z)| g.unwrap_or(z))
                .collect(),
        },
        input: grads[0]
            .take()
            .or_else(|| input_shape.map(Tensor::zeros))
            .ok_or(Error::MissingState("network input gradient"))?,
    })
}
