#[no_mangle]
pub extern "C" fn beamgrid_probe() -> f64 { beamgrid::probe() }
