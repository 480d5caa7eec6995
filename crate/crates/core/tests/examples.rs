//! Every example runs to completion.

mod kernel_norms {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/kernel_norms.rs"));
}

mod particle_system {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/particle_system.rs"));
}

mod partial_driftless {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/partial_driftless.rs"));
}

mod keller_segel_pde {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/keller_segel_pde.rs"));
}

mod mean_field_sde {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/mean_field_sde.rs"));
}

mod girsanov_weights {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/girsanov_weights.rs"));
}

mod exponential_moments {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/exponential_moments.rs"));
}

mod window_scaling {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/window_scaling.rs"));
}

mod chaos_study {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/chaos_study.rs"));
}

mod drift_benchmark {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/drift_benchmark.rs"));
}

mod reproducible_run {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/reproducible_run.rs"));
}

#[test]
fn examples_run() {
    kernel_norms::run().expect("kernel_norms");
    particle_system::run().expect("particle_system");
    partial_driftless::run().expect("partial_driftless");
    keller_segel_pde::run().expect("keller_segel_pde");
    mean_field_sde::run().expect("mean_field_sde");
    girsanov_weights::run().expect("girsanov_weights");
    exponential_moments::run().expect("exponential_moments");
    window_scaling::run().expect("window_scaling");
    chaos_study::run().expect("chaos_study");
    drift_benchmark::run().expect("drift_benchmark");
    reproducible_run::run().expect("reproducible_run");
}
