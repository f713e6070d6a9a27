use super::network::parse_indexed;
use super::FormulationError;
use crate::model::{TreeEnsemble, TreeNode};
use crate::numfmt::g17;
use crate::problem::{OptProblem, Sense, VarId};

/// Gap used to relax the strict `x > v` on the right branch of a split.
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbtOptions {
    pub epsilon: f64,
}

impl Default for GbtOptions {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// Big-M formulation of a tree ensemble.
///
/// Each tree selects one leaf through `zl[t][l]`; `yb[f][j] = 1` means
/// `x[f] <= v[f][j]` for the `j`-th smallest threshold of feature `f`; the
/// output `y[0]` is the base score plus the selected leaf values.
pub fn formulate_gbt(ens: &TreeEnsemble, opts: &GbtOptions) -> Result<OptProblem, FormulationError> {
    let eps = opts.epsilon;
    if !eps.is_finite() || eps < 0.0 {
        return Err(FormulationError::BadEpsilon(eps));
    }
    let mut p = OptProblem::new();
    let bounds = ens.feature_bounds();
    let x = bounds
        .iter()
        .enumerate()
        .map(|(f, b)| p.continuous(format!("x[{f}]"), b.lo, b.hi))
        .collect::<Result<Vec<_>, _>>()?;

    let thresholds = ens.thresholds();
    let mut yb: Vec<Vec<VarId>> = Vec::with_capacity(thresholds.len());
    for (f, ts) in thresholds.iter().enumerate() {
        yb.push(
            (0..ts.len())
                .map(|j| p.binary(format!("yb[{f}][{j}]")))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    if thresholds.iter().all(|t| t.is_empty()) {
        p.warn("ensemble has no splits; its output is constant");
    }

    let (mut lo, mut hi) = (ens.base_score(), ens.base_score());
    let mut output_terms = Vec::new();
    for (t, tree) in ens.trees().iter().enumerate() {
        let mut zl = vec![None; tree.nodes().len()];
        let mut select = Vec::new();
        let (mut tree_lo, mut tree_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for l in tree.leaves() {
            let v = p.continuous(format!("zl[{t}][{l}]"), 0.0, 1.0)?;
            zl[l] = Some(v);
            select.push((v, 1.0));
            let value = tree.leaf_value(l).expect("leaf id");
            output_terms.push((v, -value));
            tree_lo = tree_lo.min(value);
            tree_hi = tree_hi.max(value);
        }
        lo += tree_lo;
        hi += tree_hi;
        p.add_linear(format!("c_tree_{t}"), select, Sense::Eq, 1.0)?;

        for (s, node) in tree.nodes().iter().enumerate() {
            let TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } = *node
            else {
                continue;
            };
            let j = position(&thresholds[feature], threshold);
            let under = |child: usize| -> Vec<(VarId, f64)> {
                tree.leaves_under(child)
                    .into_iter()
                    .map(|l| (zl[l].expect("leaf variable"), 1.0))
                    .collect()
            };
            let mut left_terms = under(left);
            left_terms.push((yb[feature][j], -1.0));
            p.add_linear(format!("c_left_{t}_{s}"), left_terms, Sense::Le, 0.0)?;
            let mut right_terms = under(right);
            right_terms.push((yb[feature][j], 1.0));
            p.add_linear(format!("c_right_{t}_{s}"), right_terms, Sense::Le, 1.0)?;
        }
    }

    for (f, ts) in thresholds.iter().enumerate() {
        for j in 1..ts.len() {
            p.add_linear(
                format!("c_order_{f}_{j}"),
                vec![(yb[f][j - 1], 1.0), (yb[f][j], -1.0)],
                Sense::Le,
                0.0,
            )?;
        }
        let b = bounds[f];
        for (j, &v) in ts.iter().enumerate() {
            if v < b.lo || v >= b.hi {
                p.warn(format!(
                    "threshold {} of feature {f} lies outside [{}, {}); its linking rows are clamped",
                    g17(v),
                    g17(b.lo),
                    g17(b.hi)
                ));
            }
            // x <= v + (ub - v)(1 - yb)
            let upper = (b.hi - v).max(0.0);
            p.add_linear(
                format!("c_link_le_{f}_{j}"),
                vec![(x[f], 1.0), (yb[f][j], upper)],
                Sense::Le,
                v + upper,
            )?;
            // x >= lb + (v + eps - lb)(1 - yb)
            let lower = (v + eps - b.lo).max(0.0);
            p.add_linear(
                format!("c_link_ge_{f}_{j}"),
                vec![(x[f], 1.0), (yb[f][j], lower)],
                Sense::Ge,
                b.lo + lower,
            )?;
        }
    }

    let y = p.continuous("y[0]", lo, hi)?;
    output_terms.insert(0, (y, 1.0));
    p.add_linear("c_out_0", output_terms, Sense::Eq, ens.base_score())?;
    p.set_interface(x, vec![y])?;
    Ok(p)
}

fn position(sorted: &[f64], v: f64) -> usize {
    sorted
        .iter()
        .position(|t| *t == v)
        .expect("threshold list contains every split threshold")
}

/// Assignment for a problem built by [`formulate_gbt`] at input `x`: the
/// reached leaves, threshold indicators from `x[f] <= v`, and the
/// prediction. Variables with unrecognized names get NaN.
pub fn gbt_forward_assignment(p: &OptProblem, ens: &TreeEnsemble, x: &[f64]) -> Result<Vec<f64>, FormulationError> {
    let prediction = ens.predict(x)?;
    let thresholds = ens.thresholds();
    let reached: Vec<usize> = ens.trees().iter().map(|t| t.leaf_for(x)).collect();
    let indicator = |b: bool| f64::from(u8::from(b));
    let value = |name: &str| -> Option<f64> {
        let (base, idx) = parse_indexed(name)?;
        Some(match (base, idx.as_slice()) {
            ("x", [f]) => *x.get(*f)?,
            ("y", [0]) => prediction,
            ("zl", [t, l]) => indicator(*reached.get(*t)? == *l),
            ("yb", [f, j]) => indicator(x[*f] <= *thresholds.get(*f)?.get(*j)?),
            _ => return None,
        })
    };
    Ok(p.variables()
        .iter()
        .map(|v| value(&v.name).unwrap_or(f64::NAN))
        .collect())
}
