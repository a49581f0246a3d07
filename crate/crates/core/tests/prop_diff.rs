use proptest::prelude::*;
use rede_core::diff::pipeline::{JointObjective, KeypointPoseObjective};
use rede_core::diff::{grad, grad_slice, Objective};
use rede_core::harness::gradcheck::{gradcheck_instance, GradcheckConfig, GradcheckInstance};
use rede_core::losses::smooth_l1;
use rede_core::{Real, Result};

/// `a·f + b·g`.
struct Blend<'a, F, G> {
    a: f64,
    b: f64,
    f: &'a F,
    g: &'a G,
}

impl<F: Objective, G: Objective> Objective for Blend<'_, F, G> {
    fn eval<T: Real>(&self, p: &[T]) -> Result<T> {
        Ok(self.f.eval(p)? * self.a + self.g.eval(p)? * self.b)
    }
}

/// A smooth but non-polynomial function of the same coordinates.
struct Wobble;

impl Objective for Wobble {
    fn eval<T: Real>(&self, p: &[T]) -> Result<T> {
        let mut s = T::zero();
        for (i, &x) in p.iter().enumerate() {
            s += smooth_l1(x * (i as f64 + 1.0)) + (x * 0.3).exp();
        }
        Ok(s)
    }
}

fn instance(seed: u64) -> GradcheckInstance {
    gradcheck_instance(seed, &GradcheckConfig::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn gradients_are_bitwise_repeatable(seed in 0u64..1000) {
        let inst = instance(seed);
        let f = JointObjective(&inst.problem);
        let a = grad(&f, &inst.params).unwrap();
        let b = grad(&f, &inst.params).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        let (_, s1) = inst.problem.gradient(inst.params.values()).unwrap();
        let (_, s2) = inst.problem.gradient(inst.params.values()).unwrap();
        prop_assert!(s1.iter().zip(&s2).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn gradient_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let inst = instance(seed);
        let kp = inst.keypoint_coordinates().unwrap();
        let f = KeypointPoseObjective::from_problem(&inst.problem);
        let g = Wobble;
        let gf = grad_slice(&f, &kp).unwrap();
        let gg = grad_slice(&g, &kp).unwrap();
        let gb = grad_slice(&Blend { a, b, f: &f, g: &g }, &kp).unwrap();
        for i in 0..kp.len() {
            let want = a * gf[i] + b * gg[i];
            let scale = (a * gf[i]).abs().max((b * gg[i]).abs()).max(1.0);
            prop_assert!((gb[i] - want).abs() <= 1e-12 * scale, "{} vs {}", gb[i], want);
        }
    }
}
