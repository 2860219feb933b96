//! Boundary probing on the substitute: opposite pairs, bisection, and
//! mid-perpendicular query synthesis.

use rand::seq::IndexedRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::classifier::Classifier;
use crate::data::{EpochTensor, LabeledSet};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Two epochs on opposite sides of a decision boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct OppositePair {
    plus: EpochTensor,
    minus: EpochTensor,
    positive_label: usize,
    negative_label: usize,
}

impl OppositePair {
    pub fn new(
        plus: EpochTensor,
        minus: EpochTensor,
        positive_label: usize,
        negative_label: usize,
    ) -> Result<Self> {
        let (c, t) = plus.shape();
        minus.check_shape(c, t)?;
        if positive_label == negative_label {
            return Err(Error::InvalidConfig(format!(
                "opposite pair needs two different labels, got {positive_label} twice"
            )));
        }
        Ok(Self {
            plus,
            minus,
            positive_label,
            negative_label,
        })
    }

    pub fn plus(&self) -> &EpochTensor {
        &self.plus
    }

    pub fn minus(&self) -> &EpochTensor {
        &self.minus
    }

    pub fn positive_label(&self) -> usize {
        self.positive_label
    }

    pub fn negative_label(&self) -> usize {
        self.negative_label
    }

    /// `plus - minus`.
    pub fn direction(&self) -> EpochTensor {
        self.plus.sub(&self.minus)
    }

    pub fn midpoint(&self) -> EpochTensor {
        self.plus.midpoint(&self.minus)
    }

    pub fn distance(&self) -> f64 {
        self.direction().norm_l2()
    }
}

/// Draws one member uniformly from each of two classes of `data`.
///
/// With `classes = Some((a, b))` the positive side comes from `a` and the negative
/// side from `b`. With `None` two distinct present classes are chosen uniformly at
/// random (for a binary set, simply its two labels, in random order).
pub fn select_opposite_pair(
    data: &LabeledSet,
    rng: &mut Rng,
    classes: Option<(usize, usize)>,
) -> Result<OppositePair> {
    let (a, b) = match classes {
        Some((a, b)) if a == b => {
            return Err(Error::InvalidConfig(format!(
                "class pair ({a}, {b}) is not opposite"
            )));
        }
        Some(pair) => pair,
        None => {
            let present = data.present_classes();
            if present.len() < 2 {
                return Err(Error::NoOppositePair(format!(
                    "{} distinct label(s) in a set of {}",
                    present.len(),
                    data.len()
                )));
            }
            let chosen: Vec<usize> = present.choose_multiple(rng, 2).copied().collect();
            (chosen[0], chosen[1])
        }
    };
    let members = |class: usize| -> Result<Vec<usize>> {
        let idx: Vec<usize> = (0..data.len())
            .filter(|&i| data.labels()[i] == class)
            .collect();
        if idx.is_empty() {
            return Err(Error::NoOppositePair(format!("class {class} is absent")));
        }
        Ok(idx)
    };
    let plus_idx = members(a)?;
    let minus_idx = members(b)?;
    let i = *plus_idx.choose(rng).expect("non-empty");
    let j = *minus_idx.choose(rng).expect("non-empty");
    OppositePair::new(data.epochs()[i].clone(), data.epochs()[j].clone(), a, b)
}

/// Bisects the segment between the pair's endpoints `steps` times on classifier `f`.
///
/// The endpoints are first labeled by `f` (two evaluations); equal labels mean there
/// is no boundary to track and yield [`Error::BoundaryLost`]. Each of the `steps`
/// midpoint evaluations then replaces the endpoint on the midpoint's side: the side
/// whose `f` label matches `f(plus)` is positive. The returned endpoints carry their
/// `f` labels, lie on the original segment, and are `2^-steps` times as far apart.
/// `steps + 2` evaluations of `f` in total.
pub fn binary_search_pair<C: Classifier + ?Sized>(
    pair: &OppositePair,
    f: &C,
    steps: usize,
) -> Result<OppositePair> {
    let positive = f.predict(&pair.plus)?;
    let mut negative = f.predict(&pair.minus)?;
    if positive == negative {
        return Err(Error::BoundaryLost { label: positive });
    }
    let mut plus = pair.plus.clone();
    let mut minus = pair.minus.clone();
    for _ in 0..steps {
        let mid = plus.midpoint(&minus);
        let label = f.predict(&mid)?;
        if label == positive {
            plus = mid;
        } else {
            negative = label;
            minus = mid;
        }
    }
    OppositePair::new(plus, minus, positive, negative)
}

/// Component of `draw` orthogonal to `direction` (classical Gram-Schmidt step),
/// rescaled to L2 norm `magnitude`. `None` when the component is shorter than 1e-8.
pub fn orthogonal_offset(
    direction: &EpochTensor,
    draw: &EpochTensor,
    magnitude: f64,
) -> Option<EpochTensor> {
    let dd = direction.dot(direction);
    let v = if dd > 0.0 {
        draw.add_scaled(direction, -direction.dot(draw) / dd)
    } else {
        draw.clone()
    };
    let norm = v.norm_l2();
    (norm >= 1e-8).then(|| v.scale(magnitude / norm))
}

/// Standard-normal epoch of the given shape.
pub fn random_normal_epoch(channels: usize, samples: usize, rng: &mut Rng) -> EpochTensor {
    EpochTensor::from_fn(channels, samples, |_, _| StandardNormal.sample(rng))
}

/// Number of fresh random draws allowed when the orthogonal component vanishes.
pub const DEFAULT_RESAMPLE_LIMIT: usize = 16;

/// Synthesizes a query off the boundary: refines `pair` by `steps` bisections, then
/// offsets the refined midpoint by a random direction orthogonal to
/// `pair.plus - pair.minus`, scaled to L2 norm `magnitude`.
///
/// The random direction is drawn before any classifier evaluation, so `rng` alone
/// fixes the offset.
pub fn mid_perpendicular<C: Classifier + ?Sized>(
    pair: &OppositePair,
    f: &C,
    steps: usize,
    magnitude: f64,
    rng: &mut Rng,
    resample_limit: usize,
) -> Result<EpochTensor> {
    if magnitude.is_nan() || magnitude <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "offset magnitude must be positive, got {magnitude}"
        )));
    }
    let direction = pair.direction();
    let (c, t) = direction.shape();
    let mut offset = None;
    for _ in 0..=resample_limit {
        let draw = random_normal_epoch(c, t, rng);
        offset = orthogonal_offset(&direction, &draw, magnitude);
        if offset.is_some() {
            break;
        }
    }
    let offset = offset.ok_or(Error::DegenerateDirection {
        attempts: resample_limit + 1,
    })?;
    let refined = binary_search_pair(pair, f, steps)?;
    Ok(refined.midpoint().add(&offset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::CountingClassifier;
    use crate::rng::seeded;

    /// Label 1 iff the first coordinate exceeds the threshold.
    pub(crate) struct Threshold(pub f64, pub usize);

    impl Classifier for Threshold {
        fn input_shape(&self) -> (usize, usize) {
            (1, self.1)
        }
        fn num_classes(&self) -> usize {
            2
        }
        fn predict(&self, x: &EpochTensor) -> Result<usize> {
            Ok(usize::from(x.as_slice()[0] > self.0))
        }
    }

    fn point(v: &[f64]) -> EpochTensor {
        EpochTensor::new(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn zero_steps_returns_input() {
        let pair = OppositePair::new(point(&[1.0]), point(&[0.0]), 1, 0).unwrap();
        let out = binary_search_pair(&pair, &Threshold(0.3, 1), 0).unwrap();
        assert_eq!(out, pair);
    }

    #[test]
    fn bisection_brackets_threshold() {
        let pair = OppositePair::new(point(&[1.0]), point(&[0.0]), 1, 0).unwrap();
        let f = CountingClassifier::new(Threshold(0.3, 1));
        let out = binary_search_pair(&pair, &f, 10).unwrap();
        let hi = out.plus().as_slice()[0];
        let lo = out.minus().as_slice()[0];
        // hand simulation: the interval halves each step and always contains 0.3
        assert!((hi - lo - 2f64.powi(-10)).abs() < 1e-15);
        assert!(lo <= 0.3 && 0.3 < hi, "[{lo}, {hi}]");
        assert_eq!(f.calls(), 12);
    }

    #[test]
    fn same_labeled_endpoints_lose_the_boundary() {
        let pair = OppositePair::new(point(&[1.0]), point(&[0.5]), 1, 0).unwrap();
        assert!(matches!(
            binary_search_pair(&pair, &Threshold(0.3, 1), 3),
            Err(Error::BoundaryLost { label: 1 })
        ));
    }

    #[test]
    fn reversed_pair_is_oriented_by_the_classifier() {
        // stored labels disagree with f but f still separates the endpoints
        let pair = OppositePair::new(point(&[0.0]), point(&[1.0]), 1, 0).unwrap();
        let out = binary_search_pair(&pair, &Threshold(0.3, 1), 4).unwrap();
        assert_eq!(out.positive_label(), 0);
        assert_eq!(out.negative_label(), 1);
        assert!(out.plus().as_slice()[0] <= 0.3);
    }

    #[test]
    fn two_dimensional_gram_schmidt_removes_the_axis() {
        let direction = point(&[2.0, 0.0]);
        let v = orthogonal_offset(&direction, &point(&[0.5, 2.0]), 1.0).unwrap();
        assert_eq!(v.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn parallel_draw_is_degenerate() {
        assert!(orthogonal_offset(&point(&[1.0, 1.0]), &point(&[3.0, 3.0]), 1.0).is_none());
    }

    #[test]
    fn one_dimensional_input_cannot_be_offset() {
        let pair = OppositePair::new(point(&[1.0]), point(&[0.0]), 1, 0).unwrap();
        let err =
            mid_perpendicular(&pair, &Threshold(0.3, 1), 2, 1.0, &mut seeded(0), 16).unwrap_err();
        assert!(matches!(err, Error::DegenerateDirection { attempts: 17 }));
    }

    #[test]
    fn mid_perpendicular_geometry() {
        let pair =
            OppositePair::new(point(&[1.0, 0.2, -0.4]), point(&[0.0, 0.2, -0.4]), 1, 0).unwrap();
        let f = Threshold(0.3, 3);
        let xs = mid_perpendicular(&pair, &f, 10, 0.8, &mut seeded(5), 16).unwrap();
        let refined = binary_search_pair(&pair, &f, 10).unwrap();
        let v = xs.sub(&refined.midpoint());
        assert!((v.norm_l2() - 0.8).abs() < 1e-12);
        assert!(v.dot(&pair.direction()).abs() < 1e-12);
        // same seed, same output
        assert_eq!(
            xs,
            mid_perpendicular(&pair, &f, 10, 0.8, &mut seeded(5), 16).unwrap()
        );
    }

    #[test]
    fn select_single_pair_and_errors() {
        let set = LabeledSet::new(vec![point(&[1.0]), point(&[0.0])], vec![1, 0]).unwrap();
        let mut rng = seeded(1);
        let p = select_opposite_pair(&set, &mut rng, Some((1, 0))).unwrap();
        assert_eq!(p.plus(), &point(&[1.0]));
        assert_eq!(p.minus(), &point(&[0.0]));
        let p = select_opposite_pair(&set, &mut rng, None).unwrap();
        assert_ne!(p.plus(), p.minus());

        let single = LabeledSet::new(vec![point(&[1.0]), point(&[0.0])], vec![1, 1]).unwrap();
        assert!(matches!(
            select_opposite_pair(&single, &mut rng, None),
            Err(Error::NoOppositePair(_))
        ));
        assert!(matches!(
            select_opposite_pair(&set, &mut rng, Some((0, 2))),
            Err(Error::NoOppositePair(_))
        ));
    }
}
