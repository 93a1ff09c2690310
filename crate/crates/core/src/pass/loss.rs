//! Training losses and their gradients.
//!
//! Every loss is a batch mean. Gradients are returned with respect to the
//! parameters of the network that loss is allowed to update, plus the gradient
//! with respect to the generator output when the generator sits upstream.

use ndarray::{Array2, ArrayView2};

use super::{check_input, Discriminator, Ensemble, IdentityClassifier, PassError, PassModel};
use crate::nn::{one_hot, softmax_cross_entropy, uniform_targets, Gradients};

#[derive(Debug, Clone)]
pub struct ClassLoss {
    pub value: f64,
    pub classifier: Gradients,
    /// `∂L_class/∂f_out`.
    pub input_grad: Array2<f64>,
}

/// Identity cross-entropy of the classifier on generator outputs.
pub fn loss_class(
    classifier: &IdentityClassifier,
    f_out: ArrayView2<f64>,
    identities: &[usize],
) -> Result<ClassLoss, PassError> {
    check_input(classifier.net(), f_out)?;
    let targets = one_hot(identities, classifier.classes())?;
    let cache = classifier.net().forward(f_out)?;
    let ce = softmax_cross_entropy(cache.output().view(), targets.view())?;
    let back = classifier.net().backward(&cache, ce.grad.view())?;
    Ok(ClassLoss {
        value: ce.value,
        classifier: back.grads,
        input_grad: back.input_grad,
    })
}

#[derive(Debug, Clone)]
pub struct MemberLoss {
    pub value: f64,
    pub grads: Gradients,
    pub input_grad: Array2<f64>,
}

/// Attribute cross-entropy of one discriminator.
pub fn member_att_loss(
    member: &Discriminator,
    f_out: ArrayView2<f64>,
    labels: &[usize],
) -> Result<MemberLoss, PassError> {
    check_input(member.net(), f_out)?;
    let targets = one_hot(labels, member.categories())?;
    let cache = member.net().forward(f_out)?;
    let ce = softmax_cross_entropy(cache.output().view(), targets.view())?;
    let back = member.net().backward(&cache, ce.grad.view())?;
    Ok(MemberLoss {
        value: ce.value,
        grads: back.grads,
        input_grad: back.input_grad,
    })
}

#[derive(Debug, Clone)]
pub struct AttLoss {
    /// Sum of the member losses.
    pub value: f64,
    pub members: Vec<MemberLoss>,
}

/// Sum over members of the attribute cross-entropy; each member gets its own gradient.
pub fn loss_att(
    ensemble: &Ensemble,
    f_out: ArrayView2<f64>,
    labels: &[usize],
) -> Result<AttLoss, PassError> {
    let members = ensemble
        .members
        .iter()
        .map(|m| member_att_loss(m, f_out, labels))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AttLoss {
        value: members.iter().map(|m| m.value).sum(),
        members,
    })
}

/// Cross-entropy of one member's prediction against the uniform distribution.
/// Its minimum, `ln N_att`, is reached when the member is maximally unsure.
pub fn loss_adv_member(member: &Discriminator, f_out: ArrayView2<f64>) -> Result<f64, PassError> {
    check_input(member.net(), f_out)?;
    let p = member.net().predict(f_out)?;
    let targets = uniform_targets(p.nrows(), p.ncols());
    Ok(softmax_cross_entropy(p.view(), targets.view())?.value)
}

#[derive(Debug, Clone)]
pub struct DebLoss {
    /// `max_k L_adv_k`.
    pub value: f64,
    /// Member attaining the maximum (lowest index on ties).
    pub argmax: usize,
    pub member_values: Vec<f64>,
    /// `∂L_deb/∂f_out`, taken through the arg-max member only.
    pub input_grad: Array2<f64>,
}

/// Worst-case adversarial loss over the ensemble.
pub fn loss_deb(ensemble: &Ensemble, f_out: ArrayView2<f64>) -> Result<DebLoss, PassError> {
    if ensemble.members.is_empty() {
        return Err(PassError::config("K", "ensemble has no members"));
    }
    let mut caches = Vec::with_capacity(ensemble.k());
    let mut values = Vec::with_capacity(ensemble.k());
    for m in &ensemble.members {
        check_input(m.net(), f_out)?;
        let cache = m.net().forward(f_out)?;
        let targets = uniform_targets(f_out.nrows(), m.categories());
        let ce = softmax_cross_entropy(cache.output().view(), targets.view())?;
        values.push(ce.value);
        caches.push((cache, ce.grad));
    }
    let mut argmax = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[argmax] {
            argmax = k;
        }
    }
    let (cache, grad) = &caches[argmax];
    let back = ensemble.members[argmax]
        .net()
        .backward(cache, grad.view())?;
    Ok(DebLoss {
        value: values[argmax],
        argmax,
        member_values: values,
        input_grad: back.input_grad,
    })
}

#[derive(Debug, Clone)]
pub struct BrLoss {
    /// `L_class + Σ_e λ_e · L_deb^e`.
    pub value: f64,
    pub class: f64,
    /// One entry per ensemble.
    pub deb: Vec<DebLoss>,
    pub generator: Gradients,
    pub classifier: Gradients,
}

/// Generator objective on raw descriptors `x`; discriminators stay fixed.
pub fn loss_br(
    model: &PassModel,
    x: ArrayView2<f64>,
    identities: &[usize],
) -> Result<BrLoss, PassError> {
    let gen = model.generator.net();
    check_input(gen, x)?;
    let cache = gen.forward(x)?;
    let f_out = cache.output().view();
    let class = loss_class(&model.classifier, f_out, identities)?;
    let mut value = class.value;
    let mut grad = class.input_grad;
    let mut deb = Vec::with_capacity(model.ensembles.len());
    for e in &model.ensembles {
        let d = loss_deb(e, f_out)?;
        value += e.lambda * d.value;
        grad.scaled_add(e.lambda, &d.input_grad);
        deb.push(d);
    }
    let back = gen.backward(&cache, grad.view())?;
    Ok(BrLoss {
        value,
        class: class.value,
        deb,
        generator: back.grads,
        classifier: class.classifier,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pass::Generator;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64, lambda: f64) -> (PassModel, Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = PassModel {
            generator: Generator::random(6, 5, &mut rng).unwrap(),
            classifier: IdentityClassifier::random(5, 4, &mut rng).unwrap(),
            ensembles: vec![Ensemble::random("g", lambda, 3, 5, [7, 6], 2, &mut rng).unwrap()],
        };
        let x = Array2::from_shape_simple_fn((8, 6), || rng.random_range(-1.0..1.0));
        let ids = (0..8).map(|i| i % 4).collect();
        (model, x, ids)
    }

    #[test]
    fn lambda_zero_equals_class_loss() {
        let (m, x, ids) = model(3, 0.0);
        let br = loss_br(&m, x.view(), &ids).unwrap();
        let f = m.generator.transform(x.view()).unwrap();
        let class = loss_class(&m.classifier, f.view(), &ids).unwrap();
        assert_eq!(br.value, class.value);
        assert_eq!(br.classifier, class.classifier);
    }

    #[test]
    fn adversarial_loss_floor_is_log_categories() {
        let (m, x, _) = model(4, 1.0);
        let f = m.generator.transform(x.view()).unwrap();
        for member in &m.ensembles[0].members {
            assert!(loss_adv_member(member, f.view()).unwrap() >= 2f64.ln() - 1e-12);
        }
    }

    #[test]
    fn deb_picks_the_largest_member() {
        let (m, x, _) = model(5, 1.0);
        let f = m.generator.transform(x.view()).unwrap();
        let d = loss_deb(&m.ensembles[0], f.view()).unwrap();
        let max = d.member_values.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(d.value, max);
        assert_eq!(d.member_values[d.argmax], max);
        assert_eq!(d.argmax, d.member_values.iter().position(|&v| v == max).unwrap());
    }

    #[test]
    fn tie_resolves_to_lowest_index() {
        let (mut m, x, _) = model(6, 1.0);
        let first = m.ensembles[0].members[0].clone();
        m.ensembles[0].members = vec![first.clone(), first.clone(), first];
        let f = m.generator.transform(x.view()).unwrap();
        assert_eq!(loss_deb(&m.ensembles[0], f.view()).unwrap().argmax, 0);
    }

    #[test]
    fn single_category_attribute_contributes_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let e = Ensemble::random("b", 3.0, 2, 5, [4, 4], 1, &mut rng).unwrap();
        let f = Array2::from_shape_simple_fn((6, 5), || rng.random_range(-2.0..2.0));
        let d = loss_deb(&e, f.view()).unwrap();
        assert_eq!(d.value, 0.0);
        assert!(d.input_grad.iter().all(|&g| g == 0.0));
    }
}
