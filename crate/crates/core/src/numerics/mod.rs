//! Parameter storage, optimisation, schedules, seeded randomness, gradient
//! checking and checkpoint I/O shared by every other module.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod param;
mod rng;
mod schedule;

pub use adam::Adam;
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use gradcheck::finite_difference_check;
pub use param::{axis_chains, Constraint, ParameterBlock};
pub use rng::SeededRng;
pub use schedule::{schedule_lr, ScheduleRule, Scheduler};

/// Applies one Adam step to `blocks`. See [`Adam::step`].
pub fn adam_step(blocks: &mut [&mut ParameterBlock], state: &mut Adam) -> crate::Result<()> {
    state.step(blocks)
}
