use std::cell::RefCell;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Forward DFT of `input` zero-padded to `nfft` (full length).
pub(crate) fn forward_real(input: impl IntoIterator<Item = f64>, nfft: usize) -> Vec<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    for (slot, v) in buf.iter_mut().zip(input) {
        slot.re = v;
    }
    forward_in_place(&mut buf);
    buf
}

pub(crate) fn forward_in_place(buf: &mut [Complex64]) {
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    fft.process(buf);
}

/// Unnormalized inverse DFT.
pub(crate) fn inverse_in_place(buf: &mut [Complex64]) {
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    fft.process(buf);
}
