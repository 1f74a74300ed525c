#![no_main]

use gainid::nominal::NominalTrajectory;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(traj) = NominalTrajectory::read_csv(data, "fuzz.csv") else { return };
    assert_eq!(traj.controls.len() + 1, traj.states.len());
    let _ = traj.max_step_residual();
    let _ = traj.state_at(0.5 * traj.duration());
});
