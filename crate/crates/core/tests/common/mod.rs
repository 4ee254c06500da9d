//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::cell::RefCell;
use std::rc::Rc;

use stratified_stream::sampling::RandomSource;

/// A "random" source that walks every possible sequence of `index` draws.
///
/// Run the code under test once per path: call [`Odometer::start`], run,
/// then [`Odometer::advance`] until it returns `false`. Each path's
/// probability under truly uniform draws is [`Odometer::probability`].
#[derive(Debug, Default)]
pub struct Odometer {
    digits: Vec<(u64, u64)>,
    pos: usize,
}

impl Odometer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn start(&mut self) {
        self.pos = 0;
    }

    /// Probability of the path just taken.
    pub fn probability(&self) -> f64 {
        self.digits[..self.pos].iter().map(|&(_, b)| 1.0 / b as f64).product()
    }

    /// Moves to the next path; `false` once every path has been visited.
    pub fn advance(&mut self) -> bool {
        self.digits.truncate(self.pos);
        while let Some((choice, bound)) = self.digits.pop() {
            if choice + 1 < bound {
                self.digits.push((choice + 1, bound));
                return true;
            }
        }
        false
    }

    fn draw(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        let choice = if self.pos < self.digits.len() {
            let (choice, recorded) = self.digits[self.pos];
            assert_eq!(recorded, bound, "draw bounds must not depend on later choices");
            choice
        } else {
            self.digits.push((0, bound));
            0
        };
        self.pos += 1;
        choice
    }
}

impl RandomSource for Odometer {
    fn index(&mut self, bound: u64) -> u64 {
        self.draw(bound)
    }

    fn unit(&mut self) -> f64 {
        panic!("the odometer only enumerates index draws")
    }
}

/// A handle to one odometer shared by several consumers (e.g. workers run
/// one after another).
#[derive(Debug, Clone, Default)]
pub struct SharedOdometer(pub Rc<RefCell<Odometer>>);

impl RandomSource for SharedOdometer {
    fn index(&mut self, bound: u64) -> u64 {
        self.0.borrow_mut().draw(bound)
    }

    fn unit(&mut self) -> f64 {
        panic!("the odometer only enumerates index draws")
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    c: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}
