use super::Array;

/// A fixed, ordered collection of named trainable arrays.
///
/// Visiting order is part of the contract: optimizers, gradient buffers and
/// checkpoints all rely on it being identical between calls.
pub trait Parameters {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Array));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Array));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, a| n += a.len());
        n
    }

    fn named_arrays(&self) -> Vec<(String, Array)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, a| out.push((name.to_string(), a.clone())));
        out
    }

    fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit("", &mut |_, a| out.extend_from_slice(a.data()));
        out
    }

    fn get_flat(&self, index: usize) -> f64 {
        let mut offset = 0;
        let mut value = f64::NAN;
        self.visit("", &mut |_, a| {
            if index >= offset && index < offset + a.len() {
                value = a.data()[index - offset];
            }
            offset += a.len();
        });
        value
    }

    fn set_flat(&mut self, index: usize, value: f64) {
        let mut offset = 0;
        self.visit_mut("", &mut |_, a| {
            if index >= offset && index < offset + a.len() {
                a.data_mut()[index - offset] = value;
            }
            offset += a.len();
        });
    }

    /// Name of the array holding flat coordinate `index`, and the offset inside it.
    fn locate(&self, index: usize) -> Option<(String, usize)> {
        let mut offset = 0;
        let mut found = None;
        self.visit("", &mut |name, a| {
            if found.is_none() && index >= offset && index < offset + a.len() {
                found = Some((name.to_string(), index - offset));
            }
            offset += a.len();
        });
        found
    }

    fn zero_all(&mut self) {
        self.visit_mut("", &mut |_, a| a.fill(0.0));
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
