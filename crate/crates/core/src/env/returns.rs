/// Episode return summed without intermediate rounding: the total is the
/// correctly rounded sum of every reward fed in (Shewchuk partials).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeReturn {
    partials: Vec<f64>,
    steps: u32,
}

impl EpisodeReturn {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mut x: f64) {
        self.steps += 1;
        let mut kept = 0;
        for i in 0..self.partials.len() {
            let mut y = self.partials[i];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.partials.truncate(kept);
        self.partials.push(x);
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn total(&self) -> f64 {
        let p = &self.partials;
        let Some(mut n) = p.len().checked_sub(1) else {
            return 0.0;
        };
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            n -= 1;
            let x = hi;
            let y = p[n];
            hi = x + y;
            lo = y - (hi - x);
            if lo != 0.0 {
                break;
            }
        }
        // half-way correction, as in CPython's fsum
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hundred_penalties_sum_to_one() {
        let mut naive = 0.0;
        let mut r = EpisodeReturn::new();
        for _ in 0..100 {
            naive += -0.01;
            r.add(-0.01);
        }
        assert_ne!(naive, -1.0);
        assert_eq!(r.total(), -1.0);
        assert_eq!(r.steps(), 100);
    }

    #[test]
    fn cancellation() {
        let mut r = EpisodeReturn::new();
        for x in [1e100, 1.0, -1e100, 1e-20] {
            r.add(x);
        }
        assert_eq!(r.total(), 1.0 + 1e-20);
        assert_eq!(EpisodeReturn::new().total(), 0.0);
    }
}
