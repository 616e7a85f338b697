use serde::{Deserialize, Serialize};

use crate::hetgraph::LabelSet;
use crate::numerics::{dot, sigmoid, softplus, DenseMatrix, TwoLayer};
use crate::{Error, Result};

/// `Ẽ = E^t + Ê*`.
pub fn fuse(target: &DenseMatrix, denoised: &DenseMatrix) -> Result<DenseMatrix> {
    target.add(denoised)
}

/// `(user, positive, negative)` rows of the fused table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletBatch {
    triplets: Vec<(usize, usize, usize)>,
}

impl TripletBatch {
    pub fn new(triplets: Vec<(usize, usize, usize)>) -> Self {
        Self { triplets }
    }

    pub fn triplets(&self) -> &[(usize, usize, usize)] {
        &self.triplets
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }
}

/// Scalar loss with the gradient on the input table.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: DenseMatrix,
}

/// Mean of `−ln σ(ẽ_u·ẽ_{v+} − ẽ_u·ẽ_{v−})` over the batch.
pub fn bpr_loss(e: &DenseMatrix, batch: &TripletBatch) -> Result<LossGrad> {
    if batch.is_empty() {
        return Err(Error::invalid("BPR needs at least one triplet"));
    }
    if let Some(&t) = batch
        .triplets
        .iter()
        .find(|&&(u, p, n)| u.max(p).max(n) >= e.rows())
    {
        return Err(Error::invalid(format!(
            "triplet {t:?} indexes past {} rows",
            e.rows()
        )));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = DenseMatrix::zeros(e.rows(), e.cols());
    for &(u, p, n) in &batch.triplets {
        let x = dot(e.row(u), e.row(p)) - dot(e.row(u), e.row(n));
        loss += softplus(-x);
        let c = -sigmoid(-x) * scale;
        for k in 0..e.cols() {
            let (eu, ep, en) = (e[(u, k)], e[(p, k)], e[(n, k)]);
            grad[(u, k)] += c * (ep - en);
            grad[(p, k)] += c * eu;
            grad[(n, k)] -= c * eu;
        }
    }
    Ok(LossGrad {
        loss: loss * scale,
        grad,
    })
}

/// Cross-entropy result with gradients for both the classifier and the
/// embedding rows of the labeled node type.
#[derive(Debug, Clone)]
pub struct CeLoss {
    pub loss: f64,
    pub grad_embeddings: DenseMatrix,
    pub grad_params: TwoLayer,
}

/// Row-wise softmax with the max subtracted first.
pub fn softmax_rows(logits: &DenseMatrix) -> DenseMatrix {
    let mut p = logits.clone();
    for r in 0..p.rows() {
        let row = p.row_mut(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    p
}

/// Mean negative log-likelihood of the labels under `softmax(MLP(ẽ_i))`.
///
/// `e` holds one row per node of the labeled type.
pub fn ce_loss(e: &DenseMatrix, classifier: &TwoLayer, labels: &LabelSet) -> Result<CeLoss> {
    if labels.is_empty() {
        return Err(Error::invalid(
            "cross-entropy needs at least one labeled node",
        ));
    }
    let classes = classifier.output_dim();
    if labels.class_count() != classes {
        return Err(Error::invalid(format!(
            "classifier emits {classes} classes, labels declare {}",
            labels.class_count()
        )));
    }
    let entries = labels.entries();
    if let Some(&(node, _)) = entries.iter().find(|&&(node, _)| node >= e.rows()) {
        return Err(Error::invalid(format!(
            "labeled node {node} outside {} rows",
            e.rows()
        )));
    }
    let x = DenseMatrix::from_fn(entries.len(), e.cols(), |r, c| e[(entries[r].0, c)]);
    let (logits, cache) = classifier.forward(&x)?;
    let mut p = softmax_rows(&logits);
    let n = entries.len() as f64;
    let mut loss = 0.0;
    for (r, &(_, class)) in entries.iter().enumerate() {
        // log-sum-exp form keeps the loss finite when p underflows.
        let row = logits.row(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[class];
        p[(r, class)] -= 1.0;
    }
    p.scale_in_place(1.0 / n);
    let mut grad_params = classifier.zeros_like();
    let gx = classifier.backward(&cache, &p, &mut grad_params)?;
    let mut grad_embeddings = DenseMatrix::zeros(e.rows(), e.cols());
    for (r, &(node, _)) in entries.iter().enumerate() {
        grad_embeddings
            .row_mut(node)
            .iter_mut()
            .zip(gx.row(r))
            .for_each(|(a, b)| *a += b);
    }
    Ok(CeLoss {
        loss: loss / n,
        grad_embeddings,
        grad_params,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    Link,
    Node,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JointLossConfig {
    pub lambda: f64,
    pub l2: f64,
    pub task: Task,
}

impl Default for JointLossConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            l2: 1e-4,
            task: Task::Link,
        }
    }
}

impl JointLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!(
                "l2 must be finite and >= 0, got {}",
                self.l2
            )));
        }
        Ok(())
    }
}

/// The three addends of the training objective and their total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLoss {
    pub main: f64,
    /// `λ·L_deno`.
    pub denoise: f64,
    /// `l2·‖E0‖²`.
    pub l2: f64,
    pub total: f64,
}

impl JointLoss {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
            && self.main.is_finite()
            && self.denoise.is_finite()
            && self.l2.is_finite()
    }
}

/// `main + λ·deno + l2·embedding_sq_norm`.
pub fn joint_loss(
    main: f64,
    denoise: f64,
    embedding_sq_norm: f64,
    cfg: &JointLossConfig,
) -> JointLoss {
    let denoise = if cfg.lambda == 0.0 {
        0.0
    } else {
        cfg.lambda * denoise
    };
    let l2 = cfg.l2 * embedding_sq_norm;
    JointLoss {
        main,
        denoise,
        l2,
        total: main + denoise + l2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gaussian_like, grad_check, Rng};

    #[test]
    fn fuse_examples() {
        let a = gaussian_like(&mut Rng::new(1), 3, 2).unwrap();
        let b = gaussian_like(&mut Rng::new(2), 3, 2).unwrap();
        assert_eq!(fuse(&a, &DenseMatrix::zeros(3, 2)).unwrap(), a);
        assert_eq!(fuse(&a, &b).unwrap(), fuse(&b, &a).unwrap());
        let s = fuse(&a, &b).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(s[(i, j)], a[(i, j)] + b[(i, j)]);
            }
        }
        assert!(fuse(&a, &DenseMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn bpr_anchors() {
        // Rows: user, positive, negative.
        let equal = DenseMatrix::from_rows(&[[1.0, 0.0], [0.5, 2.0], [0.5, -1.0]]).unwrap();
        let b = TripletBatch::new(vec![(0, 1, 2)]);
        assert!((bpr_loss(&equal, &b).unwrap().loss - 2f64.ln()).abs() < 1e-12);
        let one = DenseMatrix::from_rows(&[[1.0, 0.0], [1.5, 0.0], [0.5, 0.0]]).unwrap();
        assert!((bpr_loss(&one, &b).unwrap().loss - 0.3133).abs() < 1e-4);
        let mut prev = f64::INFINITY;
        for gap in [0.0, 1.0, 5.0, 20.0, 100.0] {
            let e = DenseMatrix::from_rows(&[[1.0], [gap], [0.0]]).unwrap();
            let l = bpr_loss(&e, &b).unwrap().loss;
            assert!(l < prev);
            prev = l;
        }
        assert!(prev < 1e-40);
        assert!(bpr_loss(&one, &TripletBatch::default()).is_err());
        assert!(bpr_loss(&one, &TripletBatch::new(vec![(0, 1, 3)])).is_err());
    }

    #[test]
    fn bpr_depends_only_on_score_gaps() {
        let mut rng = Rng::new(3);
        let e = gaussian_like(&mut rng, 3, 2).unwrap();
        let b = TripletBatch::new(vec![(0, 1, 2)]);
        // Shifting v+ and v− by the same vector keeps the score gap.
        let mut shifted = e.clone();
        for k in 0..2 {
            shifted[(1, k)] += 0.7;
            shifted[(2, k)] += 0.7;
        }
        let (a, c) = (
            bpr_loss(&e, &b).unwrap().loss,
            bpr_loss(&shifted, &b).unwrap().loss,
        );
        assert!((a - c).abs() < 1e-12);
    }

    #[test]
    fn bpr_gradient() {
        let mut rng = Rng::new(9);
        let e = gaussian_like(&mut rng, 3, 2).unwrap();
        let b = TripletBatch::new(vec![(0, 1, 2), (1, 0, 2)]);
        let out = bpr_loss(&e, &b).unwrap();
        let err = grad_check(
            |x| {
                bpr_loss(&DenseMatrix::from_vec(3, 2, x.to_vec()).unwrap(), &b)
                    .unwrap()
                    .loss
            },
            out.grad.as_slice(),
            e.as_slice(),
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn ce_uniform_and_confident() {
        let e = gaussian_like(&mut Rng::new(1), 5, 3).unwrap();
        let labels = LabelSet::new(0, vec![(0, 0), (2, 3), (4, 1)], 4).unwrap();
        let zero = TwoLayer::zeros(3, 6, 4);
        assert!((ce_loss(&e, &zero, &labels).unwrap().loss - 4f64.ln()).abs() < 1e-12);

        let mut sure = TwoLayer::zeros(3, 1, 2);
        sure.b2 = DenseMatrix::from_rows(&[[50.0, -50.0]]).unwrap();
        let l = LabelSet::new(0, vec![(0, 0), (1, 0)], 2).unwrap();
        assert!(ce_loss(&e, &sure, &l).unwrap().loss < 1e-40);
    }

    #[test]
    fn ce_scalar_oracle() {
        // d = 2, C = 2; hidden = leaky(x·W1), logits = hidden·W2.
        let mut net = TwoLayer::zeros(2, 2, 2);
        net.w1 = DenseMatrix::identity(2);
        net.w2 = DenseMatrix::from_rows(&[[1.0, -1.0], [0.5, 2.0]]).unwrap();
        let e = DenseMatrix::from_rows(&[[1.0, -2.0]]).unwrap();
        let labels = LabelSet::new(0, vec![(0, 1)], 2).unwrap();
        let (h0, h1) = (1.0, 0.2 * -2.0);
        let (z0, z1) = (h0 * 1.0 + h1 * 0.5, -h0 + h1 * 2.0);
        let want = -(f64::exp(z1) / (f64::exp(z0) + f64::exp(z1))).ln();
        assert!((ce_loss(&e, &net, &labels).unwrap().loss - want).abs() < 1e-12);
    }

    #[test]
    fn ce_rejects_mismatch() {
        let e = DenseMatrix::zeros(3, 2);
        let net = TwoLayer::zeros(2, 2, 3);
        assert!(ce_loss(&e, &net, &LabelSet::new(0, vec![(0, 1)], 2).unwrap()).is_err());
        assert!(ce_loss(&e, &net, &LabelSet::new(0, vec![(5, 1)], 3).unwrap()).is_err());
        assert!(ce_loss(&e, &net, &LabelSet::new(0, vec![], 3).unwrap()).is_err());
    }

    #[test]
    fn ce_gradients() {
        let mut rng = Rng::new(21);
        let e = gaussian_like(&mut rng, 6, 3).unwrap();
        let net = TwoLayer::xavier(3, 5, 3, &mut rng);
        let labels = LabelSet::new(0, vec![(0, 2), (1, 0), (3, 1), (5, 2)], 3).unwrap();
        let out = ce_loss(&e, &net, &labels).unwrap();
        let err = grad_check(
            |x| {
                ce_loss(
                    &DenseMatrix::from_vec(6, 3, x.to_vec()).unwrap(),
                    &net,
                    &labels,
                )
                .unwrap()
                .loss
            },
            out.grad_embeddings.as_slice(),
            e.as_slice(),
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-4, "embeddings {err}");
        let err = grad_check(
            |x| {
                let mut n = net.clone();
                n.w2.as_mut_slice().copy_from_slice(x);
                ce_loss(&e, &n, &labels).unwrap().loss
            },
            out.grad_params.w2.as_slice(),
            net.w2.as_slice(),
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-4, "w2 {err}");
    }

    #[test]
    fn joint_examples() {
        let cfg = JointLossConfig {
            lambda: 0.0,
            l2: 0.1,
            task: Task::Link,
        };
        let j = joint_loss(0.5, 7.0, 2.0, &cfg);
        assert_eq!(j.total, 0.5 + 0.2);
        assert_eq!(j.denoise, 0.0);
        let cfg = JointLossConfig {
            lambda: 1.0,
            l2: 0.0,
            task: Task::Link,
        };
        assert_eq!(joint_loss(0.5, 0.25, 9.0, &cfg).total, 0.75);
        let e0 = DenseMatrix::from_rows(&[[1.0, 2.0], [-1.0, 0.5]]).unwrap();
        let cfg = JointLossConfig {
            lambda: 0.5,
            l2: 0.01,
            task: Task::Node,
        };
        let j = joint_loss(0.0, 0.0, e0.frobenius_sq(), &cfg);
        assert!((j.l2 - 0.01 * 6.25).abs() < 1e-15);
        assert!(JointLossConfig {
            lambda: -1.0,
            ..cfg.clone()
        }
        .validate()
        .is_err());
    }
}
