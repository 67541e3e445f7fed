//! The timed benchmark regions and the rollout inference path must not
//! touch the heap. A counting global allocator checks this directly.

use std::alloc::{GlobalAlloc, Layout, System};
use std::cell::Cell;

use mno_core::baselines::{ResNetConfig, ResNetParams};
use mno_core::bench::{DnsStepper, MnoStepper};
use mno_core::dynamics::ScaleParams;
use mno_core::fno::{init_params, FnoConfig};
use mno_core::rollout::{FnoModel, Parametrization, ResNetModel};

struct Counting;

thread_local! {
    static ALLOCS: Cell<usize> = const { Cell::new(0) };
}

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let _ = ALLOCS.try_with(|c| c.set(c.get() + 1));
        unsafe { System.alloc(layout) }
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) }
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let _ = ALLOCS.try_with(|c| c.set(c.get() + 1));
        unsafe { System.realloc(ptr, layout, new_size) }
    }
}

#[global_allocator]
static GLOBAL: Counting = Counting;

fn allocations_during(f: impl FnOnce()) -> usize {
    let before = ALLOCS.with(|c| c.get());
    f();
    ALLOCS.with(|c| c.get()) - before
}

#[test]
fn dns_step_does_not_allocate() {
    for k in [16, 64] {
        let mut s = DnsStepper::new(k, &ScaleParams::default(), 3, 1);
        assert_eq!(
            allocations_during(|| (0..5).for_each(|_| s.step())),
            0,
            "K={k}"
        );
    }
}

#[test]
fn mno_step_does_not_allocate() {
    let params = init_params::<f64>(
        FnoConfig {
            n_v: 16,
            ..Default::default()
        },
        1,
    )
    .unwrap();
    // Power-of-two grids take the FFT path, others the direct transform.
    for k in [4, 12, 64, 256] {
        let mut s = MnoStepper::new(k, &params, &ScaleParams::default(), 5).unwrap();
        s.step();
        assert_eq!(
            allocations_during(|| (0..5).for_each(|_| s.step())),
            0,
            "K={k}"
        );
    }
}

#[test]
fn rollout_predictors_do_not_allocate() {
    let x = [1.0, -2.0, 3.5, 0.25];
    let mut out = [0.0; 4];
    let params = init_params::<f64>(FnoConfig::default(), 2).unwrap();
    let mut fno = FnoModel::new(params, 4).unwrap();
    fno.predict(0, 0, &x, &mut out);
    assert_eq!(allocations_during(|| fno.predict(0, 1, &x, &mut out)), 0);
    let mut resnet = ResNetModel::new(ResNetParams::init(ResNetConfig::default(), 3));
    assert_eq!(allocations_during(|| resnet.predict(0, 1, &x, &mut out)), 0);
}
