use snndse::config::NetworkConfig;
use snndse::cost::CostLibrary;
use snndse::dse::{
    enumerate_configs, rows_to_csv, run_sweep, SweepInputs, SweepSpec, WeightSource,
};
use snndse::model::NetworkWeights;
use snndse::spike_io::ImageSet;

fn base() -> NetworkConfig {
    NetworkConfig::from_topology("64-40-30-12", 4, 3).unwrap()
}

#[test]
fn lhr_changes_cycles_but_not_accuracy() {
    let base = base();
    let images = ImageSet::synthetic(1, 8, 8, 4, 17);
    let lib = CostLibrary::default();
    let weights = WeightSource::Fixed(NetworkWeights::synthetic(&base, 2));
    let configs = [
        base.with_lhr(&[1, 1, 1]).unwrap(),
        base.with_lhr(&[2, 1, 1]).unwrap(),
    ];
    let inputs = SweepInputs {
        weights: &weights,
        images: &images,
        cost_lib: &lib,
        sample_budget: 1,
        seed: 5,
    };
    let rows = run_sweep(&configs, &inputs).unwrap();
    assert_eq!(rows[0].accuracy, rows[1].accuracy);
    assert!(rows[0].cycles_mean < rows[1].cycles_mean);
}

#[test]
fn seeds_only_touch_spike_dependent_columns() {
    let base = base();
    let spec =
        SweepSpec::parse("lhr_choices = [1, 4]\ntimestep_choices = [3, 6]\nsample_budget = 4\n")
            .unwrap();
    let configs = enumerate_configs(&spec, &base).unwrap().configs;
    assert_eq!(configs.len(), 16);
    let images = ImageSet::synthetic(4, 8, 8, 4, 3);
    let lib = CostLibrary::default();
    let weights = WeightSource::Fixed(NetworkWeights::synthetic(&base, 8));
    let run = |seed| {
        let inputs = SweepInputs {
            weights: &weights,
            images: &images,
            cost_lib: &lib,
            sample_budget: spec.sample_budget,
            seed,
        };
        run_sweep(&configs, &inputs).unwrap()
    };
    let a = run(1);
    let again = run(1);
    let b = run(2);
    assert_eq!(rows_to_csv(&a), rows_to_csv(&again));
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((x.lut, x.reg, x.bram), (y.lut, y.reg, y.bram));
        assert_eq!((&x.lhr, x.timesteps, x.pcr), (&y.lhr, y.timesteps, y.pcr));
    }
    assert_ne!(rows_to_csv(&a), rows_to_csv(&b));
}

#[test]
fn pcr_sweep_resizes_output() {
    let spec = SweepSpec::parse(
        "lhr_vectors = [[2, 2, 2]]\npcr_choices = [1, 10, 30]\nsample_budget = 1\n",
    )
    .unwrap();
    let e = enumerate_configs(&spec, &base()).unwrap();
    let outputs: Vec<usize> = e.configs.iter().map(|c| c.output_shape().len()).collect();
    assert_eq!(outputs, [4, 40, 120]);
    let images = ImageSet::synthetic(1, 8, 8, 4, 3);
    let lib = CostLibrary::default();
    let weights = WeightSource::Synthetic { seed: 1 };
    let inputs = SweepInputs {
        weights: &weights,
        images: &images,
        cost_lib: &lib,
        sample_budget: 1,
        seed: 0,
    };
    let rows = run_sweep(&e.configs, &inputs).unwrap();
    assert!(rows.iter().all(|r| r.error.is_none()));
    assert!(rows[0].lut < rows[2].lut);
}
