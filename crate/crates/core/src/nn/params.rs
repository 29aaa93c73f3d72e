/// A named, ordered view over every trainable block of a network.
///
/// Gradient buffers use the same type as the parameters they belong to, so
/// `blocks()` of a parameter set and of its gradient line up one-to-one.
pub trait Parameters {
    fn blocks(&self) -> Vec<(String, &[f64])>;
    fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])>;

    fn param_count(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    fn fill(&mut self, value: f64) {
        for (_, block) in self.blocks_mut() {
            block.iter_mut().for_each(|x| *x = value);
        }
    }

    /// Returns a copy with every entry set to zero.
    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    fn flatten(&self) -> Vec<f64> {
        self.blocks()
            .into_iter()
            .flat_map(|(_, b)| b.iter().copied())
            .collect()
    }

    /// Overwrites the parameters from a flat vector in `blocks()` order.
    fn assign_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for (_, block) in self.blocks_mut() {
            let n = block.len();
            block.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }
}

pub(crate) fn prefixed<'a>(
    prefix: &str,
    blocks: Vec<(String, &'a [f64])>,
) -> impl Iterator<Item = (String, &'a [f64])> + 'a {
    let prefix = prefix.to_string();
    blocks
        .into_iter()
        .map(move |(n, b)| (format!("{prefix}.{n}"), b))
}

pub(crate) fn prefixed_mut<'a>(
    prefix: &str,
    blocks: Vec<(String, &'a mut [f64])>,
) -> impl Iterator<Item = (String, &'a mut [f64])> + 'a {
    let prefix = prefix.to_string();
    blocks
        .into_iter()
        .map(move |(n, b)| (format!("{prefix}.{n}"), b))
}

pub fn global_norm<P: Parameters>(grads: &P) -> f64 {
    grads
        .blocks()
        .iter()
        .flat_map(|(_, b)| b.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` in place so its global L2 norm is at most `max_norm`.
/// Returns the norm before clipping. A non-positive `max_norm` disables clipping.
pub fn clip_global_norm<P: Parameters>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if max_norm > 0.0 && norm > max_norm {
        let scale = max_norm / norm;
        for (_, block) in grads.blocks_mut() {
            block.iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}
