use fogcomp::fit::{fit_comparison_models, shipped_dataset, Family, SHIPPED_DATASETS};

#[test]
fn power_law_beats_reference_families_on_bundled_data() {
    for (name, _) in SHIPPED_DATASETS {
        let samples = shipped_dataset(name).unwrap();
        let r = fit_comparison_models(&samples).unwrap();
        println!(
            "{name:16} power {:.3e} (g2 = {:8.4})  linear {:.3e}  exponential {:.3e}",
            r.rmse_power_law, r.power_law.gamma2, r.rmse_linear, r.rmse_exponential
        );
        assert!(r.rmse_power_law <= r.rmse_linear, "{name}");
        assert!(r.rmse_power_law <= r.rmse_exponential, "{name}");
        assert_eq!(r.best(), Family::PowerLaw, "{name}");
    }
}
