use std::collections::BTreeMap;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use stiffssm_core::{Error, Result};

/// An autonomous kinetic system `dy/dt = f(y)` with its Jacobian and an
/// initial-condition distribution.
pub trait Mechanism: Send + Sync {
    fn id(&self) -> &'static str;

    fn variables(&self) -> Vec<String>;

    fn units(&self) -> Vec<String>;

    /// Variables forming the mass-fraction block.
    fn species(&self) -> Vec<String>;

    fn rhs(&self, y: &[f64], dy: &mut [f64]);

    /// Row-major `∂f/∂y`.
    fn jacobian(&self, y: &[f64], jac: &mut [f64]);

    fn sample_initial(&self, rng: &mut dyn RngCore) -> Vec<f64>;

    fn check_initial(&self, ic: &[f64]) -> Result<()>;

    /// Id and parameters, as recorded in dataset manifests.
    fn spec(&self) -> Value;

    fn dim(&self) -> usize {
        self.variables().len()
    }
}

/// Closed interval `[lo, hi]` for initial-condition sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range(pub f64, pub f64);

impl Range {
    fn validate(&self, what: &str) -> Result<()> {
        if !(self.0.is_finite() && self.1.is_finite() && self.0 <= self.1) {
            return Err(Error::invalid(what, format!("need lo <= hi, got [{}, {}]", self.0, self.1)));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        if self.0 == self.1 {
            self.0
        } else {
            rng.gen_range(self.0..=self.1)
        }
    }
}

fn check_composition(ic: &[f64], species: std::ops::Range<usize>) -> Result<()> {
    let y = &ic[species];
    if y.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::invalid("initial condition", "mass fractions must be nonnegative"));
    }
    let sum: f64 = y.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("initial condition", format!("mass fractions sum to {sum}, not 1")));
    }
    Ok(())
}

fn positive(what: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::invalid(what, format!("must be positive, got {v}")));
    }
    Ok(())
}

/// Robertson's three-species autocatalytic reaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Robertson {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    /// Initial `y1`.
    pub y1: Range,
    /// Initial `y2`; `y3` takes the remainder.
    pub y2: Range,
}

impl Default for Robertson {
    fn default() -> Self {
        Robertson { k1: 0.04, k2: 3e7, k3: 1e4, y1: Range(0.5, 0.99), y2: Range(0.0, 2e-5) }
    }
}

impl Robertson {
    pub const ID: &'static str = "robertson";

    pub fn validate(&self) -> Result<()> {
        positive("robertson.k1", self.k1)?;
        positive("robertson.k2", self.k2)?;
        positive("robertson.k3", self.k3)?;
        self.y1.validate("robertson.y1")?;
        self.y2.validate("robertson.y2")?;
        if self.y1.0 < 0.0 || self.y2.0 < 0.0 || self.y1.1 + self.y2.1 > 1.0 {
            return Err(Error::invalid("robertson.y1", "sampled fractions must stay in [0, 1] and sum to at most 1"));
        }
        Ok(())
    }
}

impl Mechanism for Robertson {
    fn id(&self) -> &'static str {
        Self::ID
    }

    fn variables(&self) -> Vec<String> {
        vec!["y1".into(), "y2".into(), "y3".into()]
    }

    fn units(&self) -> Vec<String> {
        vec!["1".into(); 3]
    }

    fn species(&self) -> Vec<String> {
        self.variables()
    }

    fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        let r1 = self.k1 * y[0];
        let r2 = self.k2 * y[1] * y[1];
        let r3 = self.k3 * y[1] * y[2];
        dy[0] = -r1 + r3;
        dy[1] = r1 - r2 - r3;
        dy[2] = r2;
    }

    fn jacobian(&self, y: &[f64], j: &mut [f64]) {
        let (k1, k2, k3) = (self.k1, self.k2, self.k3);
        j.copy_from_slice(&[
            -k1,
            k3 * y[2],
            k3 * y[1],
            k1,
            -2.0 * k2 * y[1] - k3 * y[2],
            -k3 * y[1],
            0.0,
            2.0 * k2 * y[1],
            0.0,
        ]);
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let y1 = self.y1.sample(rng);
        let y2 = self.y2.sample(rng);
        vec![y1, y2, 1.0 - y1 - y2]
    }

    fn check_initial(&self, ic: &[f64]) -> Result<()> {
        check_composition(ic, 0..3)
    }

    fn spec(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("parameters serialize");
        v["id"] = Self::ID.into();
        v
    }
}

/// Single irreversible Arrhenius step `F → P` with heat release:
/// `dY_F/dt = −ω`, `dT/dt = q·ω`, `ω = A·Y_F·exp(−T_a/T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OneStepIgnition {
    /// Pre-exponential factor `A` in 1/s.
    pub a: f64,
    /// Activation temperature `T_a` in K.
    pub ta: f64,
    /// Temperature rise per unit fuel consumed, in K.
    pub q: f64,
    /// Initial temperature in K.
    pub t0: Range,
    /// Initial fuel fraction; the product takes the remainder.
    pub fuel: Range,
}

impl Default for OneStepIgnition {
    fn default() -> Self {
        OneStepIgnition { a: 1e9, ta: 2e4, q: 2000.0, t0: Range(800.0, 1200.0), fuel: Range(0.6, 1.0) }
    }
}

impl OneStepIgnition {
    pub const ID: &'static str = "one-step-ignition";

    pub fn validate(&self) -> Result<()> {
        positive("one-step-ignition.a", self.a)?;
        positive("one-step-ignition.ta", self.ta)?;
        positive("one-step-ignition.q", self.q)?;
        self.t0.validate("one-step-ignition.t0")?;
        self.fuel.validate("one-step-ignition.fuel")?;
        if !(self.t0.0 > 0.0) {
            return Err(Error::invalid("one-step-ignition.t0", "temperatures must be positive"));
        }
        if self.fuel.0 < 0.0 || self.fuel.1 > 1.0 {
            return Err(Error::invalid("one-step-ignition.fuel", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

impl Mechanism for OneStepIgnition {
    fn id(&self) -> &'static str {
        Self::ID
    }

    fn variables(&self) -> Vec<String> {
        vec!["T".into(), "Y_F".into(), "Y_P".into()]
    }

    fn units(&self) -> Vec<String> {
        vec!["K".into(), "1".into(), "1".into()]
    }

    fn species(&self) -> Vec<String> {
        vec!["Y_F".into(), "Y_P".into()]
    }

    fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        let w = self.a * y[1] * (-self.ta / y[0]).exp();
        dy[0] = self.q * w;
        dy[1] = -w;
        dy[2] = w;
    }

    fn jacobian(&self, y: &[f64], j: &mut [f64]) {
        let e = self.a * (-self.ta / y[0]).exp();
        let dw_dt = e * y[1] * self.ta / (y[0] * y[0]);
        let dw_dy = e;
        j.copy_from_slice(&[self.q * dw_dt, self.q * dw_dy, 0.0, -dw_dt, -dw_dy, 0.0, dw_dt, dw_dy, 0.0]);
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let t = self.t0.sample(rng);
        let f = self.fuel.sample(rng);
        vec![t, f, 1.0 - f]
    }

    fn check_initial(&self, ic: &[f64]) -> Result<()> {
        if !(ic[0] > 0.0 && ic[0].is_finite()) {
            return Err(Error::invalid("initial condition", "temperature must be positive"));
        }
        check_composition(ic, 1..3)
    }

    fn spec(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("parameters serialize");
        v["id"] = Self::ID.into();
        v
    }
}

/// Builds a mechanism from a parameter object; missing keys take defaults.
pub type Builder = fn(&Value) -> Result<Box<dyn Mechanism>>;

fn parse<T: serde::de::DeserializeOwned + Default>(id: &str, params: &Value) -> Result<T> {
    if params.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(params.clone()).map_err(|e| Error::invalid(format!("mechanism `{id}`"), e.to_string()))
}

/// Mechanisms by id.
#[derive(Default)]
pub struct MechanismRegistry {
    builders: BTreeMap<&'static str, Builder>,
}

impl MechanismRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn builtin() -> Self {
        let mut r = MechanismRegistry::new();
        r.register(Robertson::ID, |p| {
            let m: Robertson = parse(Robertson::ID, p)?;
            m.validate()?;
            Ok(Box::new(m))
        })
        .expect("builtin ids are distinct");
        r.register(OneStepIgnition::ID, |p| {
            let m: OneStepIgnition = parse(OneStepIgnition::ID, p)?;
            m.validate()?;
            Ok(Box::new(m))
        })
        .expect("builtin ids are distinct");
        r
    }

    pub fn register(&mut self, id: &'static str, builder: Builder) -> Result<()> {
        if self.builders.contains_key(id) {
            return Err(Error::invalid("mechanism", format!("`{id}` is already registered")));
        }
        self.builders.insert(id, builder);
        Ok(())
    }

    pub fn ids(&self) -> Vec<&'static str> {
        self.builders.keys().copied().collect()
    }

    pub fn build(&self, id: &str, params: &Value) -> Result<Box<dyn Mechanism>> {
        let builder = self.builders.get(id).ok_or_else(|| {
            Error::invalid("mechanism", format!("unknown id `{id}` (available: {})", self.ids().join(", ")))
        })?;
        builder(params)
    }

    /// Rebuilds a mechanism from the object written by [`Mechanism::spec`].
    pub fn from_spec(&self, spec: &Value) -> Result<Box<dyn Mechanism>> {
        let id =
            spec.get("id").and_then(Value::as_str).ok_or_else(|| Error::invalid("mechanism", "spec has no `id`"))?;
        let mut params = spec.clone();
        params.as_object_mut().expect("object with an id").remove("id");
        self.build(id, &params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_jacobian(m: &dyn Mechanism, y: &[f64]) -> Vec<f64> {
        let n = y.len();
        let mut out = vec![0.0; n * n];
        for c in 0..n {
            let h = 1e-6 * y[c].abs().max(1e-3);
            let (mut yp, mut ym) = (y.to_vec(), y.to_vec());
            yp[c] += h;
            ym[c] -= h;
            let (mut fp, mut fm) = (vec![0.0; n], vec![0.0; n]);
            m.rhs(&yp, &mut fp);
            m.rhs(&ym, &mut fm);
            for r in 0..n {
                out[r * n + c] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        out
    }

    #[test]
    fn analytic_jacobians_match_differences() {
        let cases: Vec<(Box<dyn Mechanism>, Vec<f64>)> = vec![
            (Box::new(Robertson::default()), vec![0.7, 2e-5, 0.3]),
            (Box::new(OneStepIgnition::default()), vec![1100.0, 0.8, 0.2]),
        ];
        for (m, y) in cases {
            let mut j = vec![0.0; 9];
            m.jacobian(&y, &mut j);
            let fd = fd_jacobian(m.as_ref(), &y);
            let scale = j.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for (a, b) in j.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-6 * scale, "{}: {a} vs {b}", m.id());
            }
        }
    }

    #[test]
    fn registry_builds_and_roundtrips_specs() {
        let r = MechanismRegistry::builtin();
        assert_eq!(r.ids(), vec!["one-step-ignition", "robertson"]);
        let m = r.build("robertson", &serde_json::json!({"k1": 0.05})).unwrap();
        let again = r.from_spec(&m.spec()).unwrap();
        assert_eq!(again.spec(), m.spec());
        assert_eq!(m.spec()["k1"], 0.05);
        assert!(r.build("gri", &Value::Null).is_err());
        assert!(r.build("robertson", &serde_json::json!({"k4": 1.0})).is_err());
        assert!(r.build("one-step-ignition", &serde_json::json!({"q": -1.0})).is_err());
    }

    #[test]
    fn sampled_initial_conditions_are_valid() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        for m in [&Robertson::default() as &dyn Mechanism, &OneStepIgnition::default()] {
            for _ in 0..100 {
                let ic = m.sample_initial(&mut rng);
                m.check_initial(&ic).unwrap();
            }
        }
        assert!(Robertson::default().check_initial(&[0.5, 0.6, -0.1]).is_err());
    }
}
